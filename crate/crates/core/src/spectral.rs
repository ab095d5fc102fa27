//! Fourier calculus on the flat parameter torus `[0, 2π)²` carrying the
//! Clifford metric `g = ½ (du² + dv²)`.
//!
//! Fields are sampled on a uniform `n × n` grid without a duplicated seam.
//! Spectra are kept in standard FFT layout with the `v` wavenumber as the
//! slow index, i.e. coefficient `(m, k)` of `e^{i(mu + kv)}` lives at
//! `kv_index * n + ku_index`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid with cached FFT plans.
#[derive(Clone)]
pub struct GridSpec {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec").field("n", &self.n).finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidGrid(n));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `2π / n` in both parameter directions.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Parameter value of grid index `i` (same for `u` and `v`).
    pub fn coord(&self, i: usize) -> f64 {
        self.spacing() * i as f64
    }

    /// Quadrature weight of one cell for the flat `L²(CC)` measure `½ du dv`.
    pub fn cell_area(&self) -> f64 {
        0.5 * self.spacing() * self.spacing()
    }

    /// Signed wavenumber stored at FFT index `idx`. The Nyquist index maps to `-n/2`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let idx = idx as i64;
        if idx < n / 2 {
            idx
        } else {
            idx - n
        }
    }

    pub fn is_nyquist(&self, k: i64) -> bool {
        k.unsigned_abs() as usize * 2 == self.n
    }

    /// Largest wavenumber retained by the 2/3 dealiasing rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch(self.n, other.n));
        }
        Ok(())
    }

    fn fft2(&self, data: &mut [Complex64]) {
        self.forward.process(data);
        transpose(data, self.n);
        self.forward.process(data);
    }

    fn ifft2(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        transpose(data, self.n);
        self.inverse.process(data);
        let scale = 1.0 / (self.n * self.n) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Real doubly periodic function sampled on the grid; `values[[i, j]] = f(u_i, v_j)`.
#[derive(Clone)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("n", &self.grid.n)
            .field("sup", &self.sup_norm())
            .finish()
    }
}

impl ScalarField {
    pub fn new(grid: &GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.n, grid.n) {
            return Err(Error::InvalidArgument(format!(
                "field shape {:?} does not match grid n = {}",
                values.dim(),
                grid.n
            )));
        }
        let field = Self {
            grid: grid.clone(),
            values,
        };
        field.check_finite()?;
        Ok(field)
    }

    pub(crate) fn from_array_unchecked(grid: &GridSpec, values: Array2<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = grid.spacing();
        let values =
            Array2::from_shape_fn((grid.n, grid.n), |(i, j)| f(h * i as f64, h * j as f64));
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: Array2::from_elem((grid.n, grid.n), c),
        }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(((i, j), _)) = self.values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { i, j });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.mapv(f),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let mut values = self.values.clone();
        values.zip_mut_with(&other.values, |a, &b| *a = f(*a, b));
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Discrete `L²(CC)` inner product with area element `½ du dv`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let s: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.cell_area())
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|a| a * a).sum();
        (s * self.grid.cell_area()).sqrt()
    }

    /// Integral against the flat measure `½ du dv`.
    pub fn integrate(&self) -> f64 {
        self.values.sum() * self.grid.cell_area()
    }

    /// `g(u, v) = f(u + di·h, v + dj·h)`.
    pub fn shifted(&self, di: usize, dj: usize) -> Self {
        let n = self.grid.n;
        let values =
            Array2::from_shape_fn((n, n), |(i, j)| self.values[[(i + di) % n, (j + dj) % n]]);
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn spectrum(&self) -> Spectrum {
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.grid.fft2(&mut data);
        Spectrum {
            grid: self.grid.clone(),
            coeffs: data,
        }
    }

    /// Writes `u,v,value` rows in row-major order with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "u,v,value")?;
        for ((i, j), v) in self.values.indexed_iter() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                self.grid.coord(i),
                self.grid.coord(j),
                v
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))??;
        if header.trim() != "u,v,value" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut vals = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let last = line
                .rsplit(',')
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing value", lineno + 2)))?;
            let v: f64 = last
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            vals.push(v);
        }
        let n = (vals.len() as f64).sqrt().round() as usize;
        if n * n != vals.len() {
            return Err(Error::Parse(format!(
                "{} samples is not a square grid",
                vals.len()
            )));
        }
        let grid = GridSpec::new(n)?;
        let values =
            Array2::from_shape_vec((n, n), vals).map_err(|e| Error::Parse(e.to_string()))?;
        ScalarField::new(&grid, values)
    }
}

impl<'a> Add<&'a ScalarField> for &'a ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(self.grid.n, rhs.grid.n, "grid mismatch");
        ScalarField {
            grid: self.grid.clone(),
            values: &self.values + &rhs.values,
        }
    }
}

impl<'a> Sub<&'a ScalarField> for &'a ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(self.grid.n, rhs.grid.n, "grid mismatch");
        ScalarField {
            grid: self.grid.clone(),
            values: &self.values - &rhs.values,
        }
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: &self.values * rhs,
        }
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self * -1.0
    }
}

/// Complex Fourier coefficients of a real field.
#[derive(Clone)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn index(&self, m: i64, k: i64) -> usize {
        let n = self.grid.n as i64;
        (k.rem_euclid(n) * n + m.rem_euclid(n)) as usize
    }

    /// Normalized coefficient of `e^{i(mu + kv)}`.
    pub fn coeff(&self, m: i64, k: i64) -> Complex64 {
        self.coeffs[self.index(m, k)] / (self.grid.n * self.grid.n) as f64
    }

    /// Visits `(m, k, coefficient)` in storage order.
    pub fn for_each_mode(&mut self, mut f: impl FnMut(i64, i64, &mut Complex64)) {
        let n = self.grid.n;
        for kv in 0..n {
            let k = self.grid.wavenumber(kv);
            for ku in 0..n {
                let m = self.grid.wavenumber(ku);
                f(m, k, &mut self.coeffs[kv * n + ku]);
            }
        }
    }

    pub fn apply_real_multipliers(&mut self, multipliers: &[f64]) {
        for (c, &w) in self.coeffs.iter_mut().zip(multipliers) {
            *c *= w;
        }
    }

    /// Zeroes every mode with `|m|` or `|k|` above `n/3`.
    pub fn dealias(&mut self) {
        let cutoff = self.grid.dealias_cutoff();
        self.for_each_mode(|m, k, c| {
            if m.abs() > cutoff || k.abs() > cutoff {
                *c = Complex64::new(0.0, 0.0);
            }
        });
    }

    /// Largest coefficient modulus among modes with `max(|m|, |k|) > cutoff`.
    pub fn tail_above(&self, cutoff: i64) -> f64 {
        let mut worst = 0.0_f64;
        let n = self.grid.n;
        let norm = (n * n) as f64;
        for kv in 0..n {
            let k = self.grid.wavenumber(kv);
            for ku in 0..n {
                let m = self.grid.wavenumber(ku);
                if m.abs().max(k.abs()) > cutoff {
                    worst = worst.max(self.coeffs[kv * n + ku].norm() / norm);
                }
            }
        }
        worst
    }

    pub fn to_field(&self) -> ScalarField {
        let mut data = self.coeffs.clone();
        self.grid.ifft2(&mut data);
        self.real_field(&data, |c| c.re)
    }

    fn real_field(&self, data: &[Complex64], part: impl Fn(&Complex64) -> f64) -> ScalarField {
        // after ifft2 the buffer is back in [i][j] layout
        let n = self.grid.n;
        let values = Array2::from_shape_fn((n, n), |(i, j)| part(&data[i * n + j]));
        ScalarField::from_array_unchecked(&self.grid, values)
    }

    fn derivative_buffer(&self, a: u32, b: u32) -> Vec<Complex64> {
        let n = self.grid.n;
        let mut out = self.coeffs.clone();
        for kv in 0..n {
            let k = self.grid.wavenumber(kv);
            for ku in 0..n {
                let m = self.grid.wavenumber(ku);
                out[kv * n + ku] *= derivative_multiplier(&self.grid, m, k, a, b);
            }
        }
        out
    }

    /// `∂_u^a ∂_v^b` of the underlying field for each requested order.
    ///
    /// Two real results share one inverse transform (real part / imaginary part).
    pub fn derivatives(&self, orders: &[(u32, u32)]) -> Vec<ScalarField> {
        let mut out = Vec::with_capacity(orders.len());
        for pair in orders.chunks(2) {
            let mut buf = self.derivative_buffer(pair[0].0, pair[0].1);
            if let Some(&(a, b)) = pair.get(1) {
                let second = self.derivative_buffer(a, b);
                for (x, y) in buf.iter_mut().zip(second) {
                    *x += Complex64::new(0.0, 1.0) * y;
                }
            }
            self.grid.ifft2(&mut buf);
            out.push(self.real_field(&buf, |c| c.re));
            if pair.len() == 2 {
                out.push(self.real_field(&buf, |c| c.im));
            }
        }
        out
    }
}

/// Multiplier `(i m)^a (i k)^b`; odd derivatives of the Nyquist mode are set
/// to zero so that real fields stay real.
fn derivative_multiplier(grid: &GridSpec, m: i64, k: i64, a: u32, b: u32) -> Complex64 {
    if (a % 2 == 1 && grid.is_nyquist(m)) || (b % 2 == 1 && grid.is_nyquist(k)) {
        return Complex64::new(0.0, 0.0);
    }
    let i = Complex64::new(0.0, 1.0);
    (i * m as f64).powu(a) * (i * k as f64).powu(b)
}

/// `∂_u^a ∂_v^b f` by Fourier multiplier; exact for band-limited `f`.
pub fn fourier_diff(f: &ScalarField, orders: (u32, u32)) -> Result<ScalarField> {
    let (a, b) = orders;
    if a + b > 4 {
        return Err(Error::InvalidArgument(format!(
            "derivative order {a}+{b} exceeds 4"
        )));
    }
    f.check_finite()?;
    Ok(f.spectrum().derivatives(&[orders]).remove(0))
}

/// Eigenvalue `-2(m² + k²)` of the Clifford-torus Laplacian on `e^{i(mu + kv)}`.
pub fn laplace_symbol(m: i64, k: i64) -> f64 {
    -2.0 * (m * m + k * k) as f64
}

/// Symbol `¼ (λ + 4)(λ + 2)` of `T_CC`.
pub fn tcc_symbol(m: i64, k: i64) -> f64 {
    let lambda = laplace_symbol(m, k);
    // adding zero turns a -0 product into +0
    0.25 * (lambda + 4.0) * (lambda + 2.0) + 0.0
}

/// Diagonal Fourier multiplier on a fixed grid.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    grid: GridSpec,
    multipliers: Vec<f64>,
}

impl SpectralOperator {
    pub fn from_symbol(grid: &GridSpec, symbol: impl Fn(i64, i64) -> f64) -> Self {
        let n = grid.n;
        let mut multipliers = vec![0.0; n * n];
        for kv in 0..n {
            let k = grid.wavenumber(kv);
            for ku in 0..n {
                multipliers[kv * n + ku] = symbol(grid.wavenumber(ku), k);
            }
        }
        Self {
            grid: grid.clone(),
            multipliers,
        }
    }

    /// `Δ_CC = 2 (∂_uu + ∂_vv)`.
    pub fn laplace(grid: &GridSpec) -> Self {
        Self::from_symbol(grid, laplace_symbol)
    }

    /// `T_CC = ¼ (Δ_CC + 4)(Δ_CC + 2)`.
    pub fn tcc(grid: &GridSpec) -> Self {
        Self::from_symbol(grid, tcc_symbol)
    }

    /// `(I + dt·T_CC)^{-1}`.
    pub fn resolvent(grid: &GridSpec, dt: f64) -> Self {
        Self::from_symbol(grid, |m, k| 1.0 / (1.0 + dt * tcc_symbol(m, k)))
    }

    pub fn multiplier(&self, m: i64, k: i64) -> f64 {
        let n = self.grid.n as i64;
        self.multipliers[(k.rem_euclid(n) * n + m.rem_euclid(n)) as usize]
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    /// True when the multiplier at `(m, k)` equals the one at `(-m, -k)` everywhere.
    pub fn is_real(&self) -> bool {
        let n = self.grid.n as i64;
        (0..n).all(|a| {
            (0..n).all(|b| {
                let (m, k) = (
                    self.grid.wavenumber(a as usize),
                    self.grid.wavenumber(b as usize),
                );
                self.multiplier(m, k) == self.multiplier(-m, -k)
            })
        })
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        f.check_finite()?;
        let mut spec = f.spectrum();
        spec.apply_real_multipliers(&self.multipliers);
        Ok(spec.to_field())
    }
}

pub fn laplace_cc(f: &ScalarField) -> Result<ScalarField> {
    SpectralOperator::laplace(f.grid()).apply(f)
}

pub fn tcc_apply(f: &ScalarField) -> Result<ScalarField> {
    SpectralOperator::tcc(f.grid()).apply(f)
}

pub fn imex_resolvent(f: &ScalarField, dt: f64) -> Result<ScalarField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    SpectralOperator::resolvent(f.grid(), dt).apply(f)
}

/// Applies the 2/3 rule to a field.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut spec = f.spectrum();
    spec.dealias();
    spec.to_field()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumEntry {
    pub m: i64,
    pub n: i64,
    pub laplace: f64,
    pub eigenvalue: f64,
}

/// All `T_CC` eigenvalues for `|m|, |n| <= max_freq`.
pub fn tcc_spectrum(max_freq: i64) -> Result<Vec<SpectrumEntry>> {
    if max_freq < 1 {
        return Err(Error::InvalidArgument(format!(
            "max_freq must be at least 1, got {max_freq}"
        )));
    }
    let mut out = Vec::new();
    for m in -max_freq..=max_freq {
        for n in -max_freq..=max_freq {
            out.push(SpectrumEntry {
                m,
                n,
                laplace: laplace_symbol(m, n),
                eigenvalue: tcc_symbol(m, n),
            });
        }
    }
    Ok(out)
}

/// Smallest positive `T_CC` eigenvalue over the enumerated modes.
pub fn spectral_gap(entries: &[SpectrumEntry]) -> Option<f64> {
    entries
        .iter()
        .map(|e| e.eigenvalue)
        .filter(|&e| e > 0.0)
        .min_by(|a, b| a.total_cmp(b))
}

/// `(m, k, is_sine)` for the eight real kernel modes, in basis order.
pub const KERNEL_MODES: [(i64, i64, bool); 8] = [
    (1, 0, false),
    (1, 0, true),
    (0, 1, false),
    (0, 1, true),
    (1, 1, false),
    (1, 1, true),
    (1, -1, false),
    (1, -1, true),
];

/// Orthonormal basis `Y_1..Y_8` of `ker T_CC`: the normalized trigonometric
/// monomials with `m² + k² ∈ {1, 2}`.
#[derive(Clone, Debug)]
pub struct CenterBasis {
    fields: Vec<ScalarField>,
}

#[derive(Clone, Debug)]
pub struct CenterProjection {
    pub coeffs: [f64; 8],
    pub center: ScalarField,
    pub stable: ScalarField,
}

impl CenterBasis {
    pub fn new(grid: &GridSpec) -> Self {
        // ∫ cos²(mu + kv) · ½ du dv = π²
        let fields = KERNEL_MODES
            .iter()
            .map(|&(m, k, sine)| {
                ScalarField::from_fn(grid, move |u, v| {
                    let phase = m as f64 * u + k as f64 * v;
                    if sine {
                        phase.sin() / PI
                    } else {
                        phase.cos() / PI
                    }
                })
            })
            .collect();
        Self { fields }
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn coefficients(&self, f: &ScalarField) -> Result<[f64; 8]> {
        let mut coeffs = [0.0; 8];
        for (c, y) in coeffs.iter_mut().zip(&self.fields) {
            *c = f.inner(y)?;
        }
        Ok(coeffs)
    }

    pub fn combine(&self, coeffs: &[f64; 8]) -> ScalarField {
        let mut values = Array2::zeros(self.fields[0].values.dim());
        for (c, y) in coeffs.iter().zip(&self.fields) {
            values.scaled_add(*c, &y.values);
        }
        ScalarField::from_array_unchecked(self.fields[0].grid(), values)
    }

    /// Splits `f = π^c f + π^s f`.
    pub fn project(&self, f: &ScalarField) -> Result<CenterProjection> {
        f.check_finite()?;
        let coeffs = self.coefficients(f)?;
        let center = self.combine(&coeffs);
        let stable = f - &center;
        Ok(CenterProjection {
            coeffs,
            center,
            stable,
        })
    }
}

pub fn project_center(f: &ScalarField) -> Result<CenterProjection> {
    CenterBasis::new(f.grid()).project(f)
}
