//! Conformal vector fields on S³, their flows, and the family of conformal
//! Clifford tori written as graphs over the Clifford torus.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{
    clifford_normal, clifford_point, dot4, fermi_invert, wrap_angle, S3Point, TangentVector, Vec4,
};
use crate::spectral::{CenterBasis, GridSpec, ScalarField, Spectrum};

/// Number of conformal basis fields.
pub const DIM: usize = 10;

/// Step size of the Möbius-flow integrator.
pub const FLOW_STEP: f64 = 1e-3;

/// Largest `|z|` accepted when building graphs of conformal tori.
pub const MAX_GRAPH_PARAM: f64 = 0.2;

/// Rotation planes `(i, j)` of the Killing fields, in basis order 5..10.
pub const ROTATION_PLANES: [(usize, usize); 6] = [(0, 2), (0, 3), (1, 2), (1, 3), (0, 1), (2, 3)];

/// Basis field `k` (0-based) of the conformal algebra.
///
/// 0..4 are the projected parallel fields `Z_a(p) = a - ⟨a, p⟩ p` for
/// `a = e₁..e₄`; 4..10 are rotations `(Ap)_i = p_j, (Ap)_j = -p_i` in the
/// planes of [`ROTATION_PLANES`]. The last two are tangent to the Clifford torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisField {
    Parallel(usize),
    Rotation(usize, usize),
}

impl BasisField {
    pub fn from_index(k: usize) -> Result<Self> {
        match k {
            0..=3 => Ok(Self::Parallel(k)),
            4..=9 => {
                let (i, j) = ROTATION_PLANES[k - 4];
                Ok(Self::Rotation(i, j))
            }
            _ => Err(Error::InvalidArgument(format!(
                "basis index {k} out of range 0..10"
            ))),
        }
    }

    pub fn eval(&self, p: &Vec4) -> Vec4 {
        let mut out = [0.0; 4];
        match *self {
            Self::Parallel(a) => {
                for (o, x) in out.iter_mut().zip(p) {
                    *o = -p[a] * x;
                }
                out[a] += 1.0;
            }
            Self::Rotation(i, j) => {
                out[i] = p[j];
                out[j] = -p[i];
            }
        }
        out
    }
}

/// Coefficients `z ∈ B₁¹⁰(0)` of a conformal field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConformalParams {
    z: [f64; DIM],
}

impl ConformalParams {
    pub fn new(z: [f64; DIM]) -> Result<Self> {
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "conformal parameters must be finite".into(),
            ));
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "|z| = {norm} must be below 1"
            )));
        }
        Ok(Self { z })
    }

    pub fn zero() -> Self {
        Self { z: [0.0; DIM] }
    }

    /// `s · e_k`.
    pub fn unit(k: usize, s: f64) -> Result<Self> {
        BasisField::from_index(k)?;
        let mut z = [0.0; DIM];
        z[k] = s;
        Self::new(z)
    }

    pub fn coords(&self) -> &[f64; DIM] {
        &self.z
    }

    pub fn norm(&self) -> f64 {
        self.z.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Parses ten comma-separated reals.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != DIM {
            return Err(Error::Parse(format!(
                "expected {DIM} comma-separated values, got {}",
                parts.len()
            )));
        }
        let mut z = [0.0; DIM];
        for (slot, p) in z.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Parse(format!("invalid number {p:?}")))?;
        }
        Self::new(z)
    }

    fn field(&self) -> Field {
        let mut a = [0.0; 4];
        a.copy_from_slice(&self.z[..4]);
        let mut rot = [[0.0; 4]; 4];
        for (c, &(i, j)) in self.z[4..].iter().zip(&ROTATION_PLANES) {
            rot[i][j] += c;
            rot[j][i] -= c;
        }
        Field { a, rot }
    }
}

/// `V(p) = A p + a - ⟨a, p⟩ p` with the coefficients already summed.
struct Field {
    a: Vec4,
    rot: [[f64; 4]; 4],
}

impl Field {
    #[inline]
    fn eval(&self, p: &Vec4) -> Vec4 {
        let ap = dot4(&self.a, p);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = dot4(&self.rot[i], p) + self.a[i] - ap * p[i];
        }
        out
    }

    fn flow(&self, t: f64, p0: &Vec4) -> Vec4 {
        let steps = (t.abs() / FLOW_STEP).ceil() as usize;
        if steps == 0 {
            return *p0;
        }
        let h = t / steps as f64;
        let mut y = *p0;
        let axpy = |y: &Vec4, k: &Vec4, s: f64| {
            [
                y[0] + s * k[0],
                y[1] + s * k[1],
                y[2] + s * k[2],
                y[3] + s * k[3],
            ]
        };
        for _ in 0..steps {
            let k1 = self.eval(&y);
            let k2 = self.eval(&axpy(&y, &k1, 0.5 * h));
            let k3 = self.eval(&axpy(&y, &k2, 0.5 * h));
            let k4 = self.eval(&axpy(&y, &k3, h));
            for i in 0..4 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let r = dot4(&y, &y).sqrt();
            y.iter_mut().for_each(|x| *x /= r);
        }
        y
    }
}

/// `V_z(p) = Σ z_k v_k(p)`.
pub fn conformal_field(z: &ConformalParams, p: &S3Point) -> TangentVector {
    let v = z.field().eval(p.coords());
    TangentVector::new(*p, v).expect("conformal fields are tangent to the sphere")
}

/// Time-`t` flow of `V_z` from `p0` (classical Runge-Kutta, renormalized each step).
pub fn moebius_flow(z: &ConformalParams, t: f64, p0: &S3Point) -> S3Point {
    S3Point::from_unit(z.field().flow(t, p0.coords()))
}

/// Normal component `⟨v_k(C(x)), ν(x)⟩` of basis field `k` (1-based) along the Clifford torus.
pub fn kernel_direction(k: usize, grid: &GridSpec) -> Result<ScalarField> {
    if !(1..=DIM).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "basis index {k} out of range 1..=10"
        )));
    }
    let field = BasisField::from_index(k - 1)?;
    Ok(ScalarField::from_fn(grid, |u, v| {
        let c = clifford_point(u, v);
        let nu = clifford_normal(u, v);
        dot4(&field.eval(c.coords()), &nu.v)
    }))
}

/// Truncated Fourier series that can be evaluated off the grid.
struct Series {
    band: i64,
    // coefficients indexed [k + band][m + band]
    coeffs: Vec<Complex64>,
}

impl Series {
    fn new(spec: &Spectrum, band: i64) -> Self {
        let w = (2 * band + 1) as usize;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); w * w];
        for k in -band..=band {
            for m in -band..=band {
                coeffs[(k + band) as usize * w + (m + band) as usize] = spec.coeff(m, k);
            }
        }
        Self { band, coeffs }
    }

    /// Value and gradient at the point whose phase vectors are `eu`, `ev`.
    fn eval(&self, eu: &[Complex64], ev: &[Complex64]) -> (f64, f64, f64) {
        let w = (2 * self.band + 1) as usize;
        let zero = Complex64::new(0.0, 0.0);
        let (mut f, mut fu, mut fv) = (zero, zero, zero);
        for (kk, (row, &ek)) in self.coeffs.chunks(w).zip(ev).enumerate() {
            let (mut s, mut su) = (zero, zero);
            for (mm, (&c, &em)) in row.iter().zip(eu).enumerate() {
                let t = c * em;
                s += t;
                su += t * (mm as f64 - self.band as f64);
            }
            f += s * ek;
            fu += su * ek;
            fv += s * ek * (kk as f64 - self.band as f64);
        }
        // ∂ e^{iθ} = i e^{iθ}, so derivatives are minus the imaginary parts
        (f.re, -fu.im, -fv.im)
    }
}

fn phases(x: f64, band: i64) -> Vec<Complex64> {
    (-band..=band)
        .map(|m| Complex64::from_polar(1.0, m as f64 * x))
        .collect()
}

/// Smallest band containing every coefficient above `1e-16` relative to the largest.
fn significant_band(specs: &[&Spectrum], limit: i64) -> i64 {
    let peak = specs
        .iter()
        .flat_map(|s| {
            let n = s.grid().n() as i64;
            (-(n / 2)..n / 2)
                .flat_map(move |k| (-(n / 2)..n / 2).map(move |m| s.coeff(m, k).norm()))
        })
        .fold(0.0_f64, f64::max);
    let mut band = 0;
    for s in specs {
        let n = s.grid().n() as i64;
        for k in -(n / 2)..n / 2 {
            for m in -(n / 2)..n / 2 {
                if s.coeff(m, k).norm() > 1e-16 * peak.max(1e-300) {
                    band = band.max(m.abs()).max(k.abs());
                }
            }
        }
    }
    band.min(limit)
}

/// Distance function `ρ_z` whose graph is the conformal torus `T_z(1)(CC)`.
///
/// Every Clifford sample `C(x')` is moved by the Möbius flow and Fermi-inverted
/// to `(x' + D(x'), r(x'))`. The periodic displacement `D` and height `r` are
/// expanded in Fourier series, and for each grid point `x` Newton's method
/// solves `x' + D(x') = x`, giving `ρ_z(x) = r(x')`.
pub fn equilibrium_distance_function(z: &ConformalParams, grid: &GridSpec) -> Result<ScalarField> {
    if z.norm() > MAX_GRAPH_PARAM {
        return Err(Error::InvalidArgument(format!(
            "|z| = {} exceeds {MAX_GRAPH_PARAM}",
            z.norm()
        )));
    }
    let n = grid.n();
    let field = z.field();
    let mut du = ndarray::Array2::zeros((n, n));
    let mut dv = ndarray::Array2::zeros((n, n));
    let mut r = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        let u = grid.coord(i);
        for j in 0..n {
            let v = grid.coord(j);
            let q = field.flow(1.0, clifford_point(u, v).coords());
            let f = fermi_invert(&S3Point::from_unit(q))?;
            du[[i, j]] = wrap_angle(f.u - u);
            dv[[i, j]] = wrap_angle(f.v - v);
            r[[i, j]] = f.r;
        }
    }
    let du = ScalarField::new(grid, du)?;
    let dv = ScalarField::new(grid, dv)?;
    let r = ScalarField::new(grid, r)?;
    let (su, sv, sr) = (du.spectrum(), dv.spectrum(), r.spectrum());

    // fold-over check on the source grid: det(I + ∇D) > 0
    let dd = su.derivatives(&[(1, 0), (0, 1)]);
    let ee = sv.derivatives(&[(1, 0), (0, 1)]);
    for i in 0..n {
        for j in 0..n {
            let det = (1.0 + dd[0].get(i, j)) * (1.0 + ee[1].get(i, j))
                - dd[1].get(i, j) * ee[0].get(i, j);
            if !(det > 0.0) {
                return Err(Error::NotAGraph(format!(
                    "normal projection folds over at grid index ({i}, {j}), jacobian {det:e}"
                )));
            }
        }
    }

    let band = significant_band(&[&su, &sv, &sr], n as i64 / 2 - 1);
    let (pu, pv, pr) = (
        Series::new(&su, band),
        Series::new(&sv, band),
        Series::new(&sr, band),
    );
    let mut out = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        let x = grid.coord(i);
        for j in 0..n {
            let y = grid.coord(j);
            // initial guess from the displacement at the target itself
            let (mut a, mut b) = (x - du.get(i, j), y - dv.get(i, j));
            let mut converged = false;
            for _ in 0..50 {
                let (eu, ev) = (phases(a, band), phases(b, band));
                let (fu, fuu, fuv) = pu.eval(&eu, &ev);
                let (fv, fvu, fvv) = pv.eval(&eu, &ev);
                let (ru, rv) = (a + fu - x, b + fv - y);
                let (j11, j12, j21, j22) = (1.0 + fuu, fuv, fvu, 1.0 + fvv);
                let det = j11 * j22 - j12 * j21;
                if !(det > 0.0) {
                    return Err(Error::NotAGraph(format!(
                        "degenerate projection near grid index ({i}, {j})"
                    )));
                }
                let sa = (j22 * ru - j12 * rv) / det;
                let sb = (j11 * rv - j21 * ru) / det;
                a -= sa;
                b -= sb;
                if sa.abs().max(sb.abs()) < 1e-15 {
                    converged = true;
                    break;
                }
            }
            let (eu, ev) = (phases(a, band), phases(b, band));
            let (fu, _, _) = pu.eval(&eu, &ev);
            let (fv, _, _) = pv.eval(&eu, &ev);
            let miss = wrap_angle(a + fu - x)
                .abs()
                .max(wrap_angle(b + fv - y).abs());
            if !converged && miss > 1e-12 {
                return Err(Error::NotAGraph(format!(
                    "projection inverse did not converge at grid index ({i}, {j}), miss {miss:e}"
                )));
            }
            out[[i, j]] = pr.eval(&eu, &ev).0;
        }
    }
    ScalarField::new(grid, out)
}

/// Result of the rank test of `z ↦ π^c ρ_z` at `z = 0`.
#[derive(Clone, Debug)]
pub struct RankReport {
    /// 8 × 10 matrix of center coefficients of `∂ρ_z/∂z_k`.
    pub matrix: DMatrix<f64>,
    /// Singular values in decreasing order.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// L² norm of each column of the matrix.
    pub column_norms: [f64; DIM],
}

/// Central-difference derivatives of `ρ_z` at `z = 0`, projected onto the center subspace.
pub fn df0_rank_check(eps_fd: f64, grid: &GridSpec) -> Result<RankReport> {
    if !(eps_fd > 0.0 && eps_fd <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps_fd} must lie in (0, 1e-2]"
        )));
    }
    let basis = CenterBasis::new(grid);
    let mut matrix = DMatrix::zeros(8, DIM);
    for k in 0..DIM {
        let plus = equilibrium_distance_function(&ConformalParams::unit(k, eps_fd)?, grid)?;
        let minus = equilibrium_distance_function(&ConformalParams::unit(k, -eps_fd)?, grid)?;
        let d = &(&plus - &minus) * (0.5 / eps_fd);
        let c = basis.coefficients(&d)?;
        for (row, value) in c.iter().enumerate() {
            matrix[(row, k)] = *value;
        }
    }
    let mut singular_values = matrix
        .clone()
        .svd(false, false)
        .singular_values
        .as_slice()
        .to_vec();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let tol = 1e-6 * singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    let mut column_norms = [0.0; DIM];
    for (k, slot) in column_norms.iter_mut().enumerate() {
        *slot = matrix.column(k).norm();
    }
    Ok(RankReport {
        matrix,
        singular_values,
        rank,
        column_norms,
    })
}
