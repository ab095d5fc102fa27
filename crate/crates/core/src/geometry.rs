//! Geometry of `S³`, the Clifford torus, its Fermi chart and the induced
//! geometry of normal graphs `θ_ρ(x) = exp_x(ρ(x) ν(x))`.
//!
//! Points of `S³` are stored as unit vectors of `R⁴`. The Clifford torus is
//! parametrized by `C(u, v) = (cos u, sin u, cos v, sin v) / √2` with unit
//! normal `ν(u, v) = (-cos u, -sin u, cos v, sin v) / √2`, so that the Fermi
//! chart reads
//!
//! ```text
//! X(u, v, r) = cos r · C + sin r · ν = (α(r) e(u), β(r) e(v)),
//! α(r) = (cos r - sin r) / √2,   β(r) = (cos r + sin r) / √2.
//! ```
//!
//! The scalar second fundamental form uses the shape-operator sign
//! `h_ij = -⟨∂_ij θ, ν_θ⟩`, with `ν_θ` continuous to `ν` at `ρ = 0`. With this
//! sign the mean curvature decreases when the surface is pushed along `ν`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::io::Write;

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, ScalarField};

/// Relative threshold on `det σ` (flat value ¼) below which a graph is not immersed.
pub const IMMERSION_EPS: f64 = 1e-8;

/// Default half-width of the tube used by the flow.
pub const DEFAULT_TUBE_RADIUS: f64 = std::f64::consts::PI / 8.0;

const UNIT_TOL: f64 = 1e-12;

pub type Vec4 = [f64; 4];

#[inline]
pub fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn norm4(a: &Vec4) -> f64 {
    dot4(a, a).sqrt()
}

#[inline]
fn det3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// Generalized cross product in `R⁴`: `N_i = ε_{ijkl} a_j b_k c_l`.
pub fn cross4(a: &Vec4, b: &Vec4, c: &Vec4) -> Vec4 {
    let pick = |v: &Vec4, i: usize, j: usize, k: usize| [v[i], v[j], v[k]];
    [
        det3(pick(a, 1, 2, 3), pick(b, 1, 2, 3), pick(c, 1, 2, 3)),
        -det3(pick(a, 0, 2, 3), pick(b, 0, 2, 3), pick(c, 0, 2, 3)),
        det3(pick(a, 0, 1, 3), pick(b, 0, 1, 3), pick(c, 0, 1, 3)),
        -det3(pick(a, 0, 1, 2), pick(b, 0, 1, 2), pick(c, 0, 1, 2)),
    ]
}

/// A point of the unit sphere `S³ ⊂ R⁴`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct S3Point {
    x: Vec4,
}

impl S3Point {
    pub fn new(x: Vec4) -> Result<Self> {
        let r = norm4(&x);
        if !r.is_finite() || (r - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "|x| = {r} is not on the unit sphere"
            )));
        }
        Ok(Self { x })
    }

    /// Projects a nonzero vector radially onto the sphere.
    pub fn normalized(x: Vec4) -> Result<Self> {
        let r = norm4(&x);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self {
            x: [x[0] / r, x[1] / r, x[2] / r, x[3] / r],
        })
    }

    pub(crate) fn from_unit(x: Vec4) -> Self {
        Self { x }
    }

    pub fn coords(&self) -> &Vec4 {
        &self.x
    }

    /// Great-circle distance, from the chord so that nearby points keep full precision.
    pub fn distance(&self, other: &S3Point) -> f64 {
        let mut d = [0.0; 4];
        for i in 0..4 {
            d[i] = self.x[i] - other.x[i];
        }
        2.0 * (0.5 * norm4(&d)).min(1.0).asin()
    }
}

/// A vector of `T_p S³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub base: S3Point,
    pub v: Vec4,
}

impl TangentVector {
    pub fn new(base: S3Point, v: Vec4) -> Result<Self> {
        let c = dot4(&base.x, &v);
        if c.abs() > 1e-10 * norm4(&v).max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "vector is not tangent: <v, p> = {c:e}"
            )));
        }
        Ok(Self { base, v })
    }

    pub fn norm(&self) -> f64 {
        norm4(&self.v)
    }
}

#[inline]
fn radii(r: f64) -> (f64, f64) {
    let (s, c) = r.sin_cos();
    ((c - s) * FRAC_1_SQRT_2, (c + s) * FRAC_1_SQRT_2)
}

pub fn clifford_point(u: f64, v: f64) -> S3Point {
    let (su, cu) = u.sin_cos();
    let (sv, cv) = v.sin_cos();
    S3Point::from_unit([
        FRAC_1_SQRT_2 * cu,
        FRAC_1_SQRT_2 * su,
        FRAC_1_SQRT_2 * cv,
        FRAC_1_SQRT_2 * sv,
    ])
}

pub fn clifford_normal(u: f64, v: f64) -> TangentVector {
    let (su, cu) = u.sin_cos();
    let (sv, cv) = v.sin_cos();
    TangentVector {
        base: clifford_point(u, v),
        v: [
            -FRAC_1_SQRT_2 * cu,
            -FRAC_1_SQRT_2 * su,
            FRAC_1_SQRT_2 * cv,
            FRAC_1_SQRT_2 * sv,
        ],
    }
}

/// `X(u, v, r) = exp_{C(u,v)}(r ν(u, v))`, defined for `|r| < π/4`.
pub fn fermi_map(u: f64, v: f64, r: f64) -> Result<S3Point> {
    if !(r.abs() < FRAC_PI_4) {
        return Err(Error::ChartDomain(format!(
            "|r| = {} is not below π/4",
            r.abs()
        )));
    }
    let (a, b) = radii(r);
    let (su, cu) = u.sin_cos();
    let (sv, cv) = v.sin_cos();
    Ok(S3Point::from_unit([a * cu, a * su, b * cv, b * sv]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FermiCoords {
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

/// Closed-form inverse of [`fermi_map`]. Angles are returned in `(-π, π]`.
pub fn fermi_invert(p: &S3Point) -> Result<FermiCoords> {
    let x = p.coords();
    let s = x[0] * x[0] + x[1] * x[1];
    let t = x[2] * x[2] + x[3] * x[3];
    const MARGIN: f64 = 1e-10;
    if s < MARGIN || t < MARGIN {
        return Err(Error::ChartDomain(format!(
            "point {x:?} lies on a degenerate circle of the tube"
        )));
    }
    let r = 0.5 * (1.0 - 2.0 * s).clamp(-1.0, 1.0).asin();
    Ok(FermiCoords {
        u: x[1].atan2(x[0]),
        v: x[3].atan2(x[2]),
        r,
    })
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

/// Full geometric state of the graph surface `θ_ρ` on the grid.
///
/// Symmetric 2-tensors are stored as `[uu, uv, vv]`; `christoffel[i]` holds
/// `γ^i_{uu}, γ^i_{uv}, γ^i_{vv}` with `i ∈ {u, v}`.
#[derive(Clone, Debug)]
pub struct GraphGeometry {
    grid: GridSpec,
    pub theta: Vec<Vec4>,
    pub normal: Vec<Vec4>,
    pub tangents: Vec<[Vec4; 2]>,
    pub metric: Vec<[f64; 3]>,
    pub sff: Vec<[f64; 3]>,
    pub christoffel: Vec<[[f64; 3]; 2]>,
    pub mean: ScalarField,
    pub gauss: ScalarField,
    pub a0_sq: ScalarField,
    pub lapse: ScalarField,
    pub area_element: ScalarField,
}

struct PointGeometry {
    theta: Vec4,
    normal: Vec4,
    tangents: [Vec4; 2],
    metric: [f64; 3],
    sff: [f64; 3],
    christoffel: [[f64; 3]; 2],
    det: f64,
    mean: f64,
    gauss: f64,
    a0_sq: f64,
    lapse: f64,
}

#[inline]
fn combo(a: f64, x: [f64; 2], b: f64, y: [f64; 2]) -> [f64; 2] {
    [a * x[0] + b * y[0], a * x[1] + b * y[1]]
}

#[inline]
fn join(a: [f64; 2], b: [f64; 2]) -> Vec4 {
    [a[0], a[1], b[0], b[1]]
}

/// `jet = [ρ, ρ_u, ρ_v, ρ_uu, ρ_uv, ρ_vv]`.
fn point_geometry(u: f64, v: f64, jet: [f64; 6]) -> PointGeometry {
    let [r, ru, rv, ruu, ruv, rvv] = jet;
    let (a, b) = radii(r);
    let (su, cu) = u.sin_cos();
    let (sv, cv) = v.sin_cos();
    let eu = [cu, su];
    let du = [-su, cu];
    let ev = [cv, sv];
    let dv = [-sv, cv];

    // α' = -β, β' = α
    let (a_u, a_v) = (-b * ru, -b * rv);
    let (b_u, b_v) = (a * ru, a * rv);
    let a_uu = -a * ru * ru - b * ruu;
    let a_uv = -a * ru * rv - b * ruv;
    let a_vv = -a * rv * rv - b * rvv;
    let b_uu = -b * ru * ru + a * ruu;
    let b_uv = -b * ru * rv + a * ruv;
    let b_vv = -b * rv * rv + a * rvv;

    let theta = join(combo(a, eu, 0.0, du), combo(b, ev, 0.0, dv));
    let t_u = join(combo(a_u, eu, a, du), combo(b_u, ev, 0.0, dv));
    let t_v = join(combo(a_v, eu, 0.0, du), combo(b_v, ev, b, dv));
    let t_uu = join(combo(a_uu - a, eu, 2.0 * a_u, du), combo(b_uu, ev, 0.0, dv));
    let t_uv = join(combo(a_uv, eu, a_v, du), combo(b_uv, ev, b_u, dv));
    let t_vv = join(combo(a_vv, eu, 0.0, du), combo(b_vv - b, ev, 2.0 * b_v, dv));

    let g = [dot4(&t_u, &t_u), dot4(&t_u, &t_v), dot4(&t_v, &t_v)];
    let det = g[0] * g[2] - g[1] * g[1];
    let gi = [g[2] / det, -g[1] / det, g[0] / det];

    let n = cross4(&theta, &t_u, &t_v);
    let nn = norm4(&n);
    let normal = [n[0] / nn, n[1] / nn, n[2] / nn, n[3] / nn];

    let h = [
        -dot4(&t_uu, &normal),
        -dot4(&t_uv, &normal),
        -dot4(&t_vv, &normal),
    ];
    let mean = 0.5 * (gi[0] * h[0] + 2.0 * gi[1] * h[1] + gi[2] * h[2]);
    let gauss = (h[0] * h[2] - h[1] * h[1]) / det;
    // |A|² = tr((σ⁻¹h)²) = 4H² - 2K
    let a_sq = 4.0 * mean * mean - 2.0 * gauss;
    let a0_sq = a_sq - 2.0 * mean * mean;

    // first-kind symbols Γ_{l,jk} = ⟨θ_jk, θ_l⟩
    let first = |l: &Vec4| [dot4(&t_uu, l), dot4(&t_uv, l), dot4(&t_vv, l)];
    let fu = first(&t_u);
    let fv = first(&t_v);
    let mut christoffel = [[0.0; 3]; 2];
    for jk in 0..3 {
        christoffel[0][jk] = gi[0] * fu[jk] + gi[1] * fv[jk];
        christoffel[1][jk] = gi[1] * fu[jk] + gi[2] * fv[jk];
    }

    let lapse = (1.0 + ru * ru / (a * a) + rv * rv / (b * b)).sqrt();

    PointGeometry {
        theta,
        normal,
        tangents: [t_u, t_v],
        metric: g,
        sff: h,
        christoffel,
        det,
        mean,
        gauss,
        a0_sq,
        lapse,
    }
}

/// Builds the full geometry of `θ_ρ`. Derivatives of `ρ` are spectral; the
/// ambient derivatives of `θ` follow from the chain rule through the exact
/// chart `X(u, v, r)`.
pub fn graph_geometry(rho: &ScalarField) -> Result<GraphGeometry> {
    rho.check_finite()?;
    let sup = rho.sup_norm();
    if !(sup < FRAC_PI_4) {
        return Err(Error::ChartDomain(format!("‖ρ‖∞ = {sup} is not below π/4")));
    }
    let grid = rho.grid().clone();
    let n = grid.n();
    let d = rho
        .spectrum()
        .derivatives(&[(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);

    let len = n * n;
    let mut theta = Vec::with_capacity(len);
    let mut normal = Vec::with_capacity(len);
    let mut tangents = Vec::with_capacity(len);
    let mut metric = Vec::with_capacity(len);
    let mut sff = Vec::with_capacity(len);
    let mut christoffel = Vec::with_capacity(len);
    let mut mean = ndarray::Array2::zeros((n, n));
    let mut gauss = ndarray::Array2::zeros((n, n));
    let mut a0_sq = ndarray::Array2::zeros((n, n));
    let mut lapse = ndarray::Array2::zeros((n, n));
    let mut area = ndarray::Array2::zeros((n, n));

    let det_floor = IMMERSION_EPS * 0.25;
    for i in 0..n {
        let u = grid.coord(i);
        for j in 0..n {
            let v = grid.coord(j);
            let jet = [
                rho.get(i, j),
                d[0].get(i, j),
                d[1].get(i, j),
                d[2].get(i, j),
                d[3].get(i, j),
                d[4].get(i, j),
            ];
            let p = point_geometry(u, v, jet);
            if !(p.det > det_floor) {
                return Err(Error::ImmersionFailure { det: p.det, i, j });
            }
            theta.push(p.theta);
            normal.push(p.normal);
            tangents.push(p.tangents);
            metric.push(p.metric);
            sff.push(p.sff);
            christoffel.push(p.christoffel);
            mean[[i, j]] = p.mean;
            gauss[[i, j]] = p.gauss;
            a0_sq[[i, j]] = p.a0_sq;
            lapse[[i, j]] = p.lapse;
            area[[i, j]] = p.det.sqrt();
        }
    }

    let field = |a| ScalarField::new(&grid, a);
    Ok(GraphGeometry {
        theta,
        normal,
        tangents,
        metric,
        sff,
        christoffel,
        mean: field(mean)?,
        gauss: field(gauss)?,
        a0_sq: field(a0_sq)?,
        lapse: field(lapse)?,
        area_element: field(area)?,
        grid,
    })
}

impl GraphGeometry {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn total_area(&self) -> f64 {
        let h = self.grid.spacing();
        self.area_element.values().sum() * h * h
    }

    /// Intrinsic Gaussian curvature of `σ(ρ)` from its Christoffel symbols.
    pub fn intrinsic_curvature(&self) -> ScalarField {
        let n = self.grid.n();
        let comp = |i: usize, jk: usize| {
            let vals =
                ndarray::Array2::from_shape_fn((n, n), |(a, b)| self.christoffel[a * n + b][i][jk]);
            ScalarField::from_array_unchecked(&self.grid, vals)
        };
        // do Carmo: -E K = (Γ²₁₂)_u - (Γ²₁₁)_v + Γ¹₁₂Γ²₁₁ - Γ¹₁₁Γ²₁₂ + (Γ²₁₂)² - Γ²₁₁Γ²₂₂
        let g2_12_u = comp(1, 1).spectrum().derivatives(&[(1, 0)]).remove(0);
        let g2_11_v = comp(1, 0).spectrum().derivatives(&[(0, 1)]).remove(0);
        let vals = ndarray::Array2::from_shape_fn((n, n), |(a, b)| {
            let c = &self.christoffel[a * n + b];
            let e = self.metric[a * n + b][0];
            let rhs = g2_12_u.get(a, b) - g2_11_v.get(a, b) + c[0][1] * c[1][0] - c[0][0] * c[1][1]
                + c[1][1] * c[1][1]
                - c[1][0] * c[1][2];
            -rhs / e
        });
        ScalarField::from_array_unchecked(&self.grid, vals)
    }
}

/// Beltrami-Laplace operator of the pullback metric `σ(ρ)`:
/// `σ^{jk} (∂_jk f - γ^i_jk ∂_i f)`.
pub fn beltrami_rho(geometry: &GraphGeometry, f: &ScalarField) -> Result<ScalarField> {
    if geometry.grid != *f.grid() {
        return Err(Error::GridMismatch(geometry.grid.n(), f.grid().n()));
    }
    f.check_finite()?;
    let d = f
        .spectrum()
        .derivatives(&[(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    let n = geometry.grid.n();
    let vals = ndarray::Array2::from_shape_fn((n, n), |(i, j)| {
        let k = i * n + j;
        let g = geometry.metric[k];
        let det = g[0] * g[2] - g[1] * g[1];
        let gi = [g[2] / det, -g[1] / det, g[0] / det];
        let c = &geometry.christoffel[k];
        let fu = d[0].get(i, j);
        let fv = d[1].get(i, j);
        let hess = [
            d[2].get(i, j) - c[0][0] * fu - c[1][0] * fv,
            d[3].get(i, j) - c[0][1] * fu - c[1][1] * fv,
            d[4].get(i, j) - c[0][2] * fu - c[1][2] * fv,
        ];
        gi[0] * hess[0] + 2.0 * gi[1] * hess[1] + gi[2] * hess[2]
    });
    ScalarField::new(&geometry.grid, vals)
}

/// `W = ∫ (1 + H²) dμ` by the periodic trapezoidal rule.
pub fn willmore_energy(geometry: &GraphGeometry) -> f64 {
    let h = geometry.grid.spacing();
    let s: f64 = geometry
        .mean
        .values()
        .iter()
        .zip(geometry.area_element.values().iter())
        .map(|(hm, a)| (1.0 + hm * hm) * a)
        .sum();
    s * h * h
}

/// Stereographic projection of `S³` from a pole onto the orthogonal
/// hyperplane, written in an orthonormal frame of that hyperplane.
#[derive(Clone, Copy, Debug)]
pub struct Stereographic {
    pole: S3Point,
    frame: [Vec4; 3],
}

pub const POLE_TOL: f64 = 1e-8;

impl Stereographic {
    pub fn new(pole: S3Point) -> Self {
        let p = *pole.coords();
        let mut frame: Vec<Vec4> = Vec::with_capacity(3);
        for axis in 0..4 {
            let mut e = [0.0; 4];
            e[axis] = 1.0;
            let c = dot4(&e, &p);
            for k in 0..4 {
                e[k] -= c * p[k];
            }
            for f in &frame {
                let c = dot4(&e, f);
                for k in 0..4 {
                    e[k] -= c * f[k];
                }
            }
            let r = norm4(&e);
            if r > 1e-3 && frame.len() < 3 {
                frame.push([e[0] / r, e[1] / r, e[2] / r, e[3] / r]);
            }
        }
        Self {
            pole,
            frame: [frame[0], frame[1], frame[2]],
        }
    }

    pub fn pole(&self) -> &S3Point {
        &self.pole
    }

    pub fn project(&self, p: &S3Point) -> Result<[f64; 3]> {
        let x = p.coords();
        let dist = norm4(&[
            x[0] - self.pole.x[0],
            x[1] - self.pole.x[1],
            x[2] - self.pole.x[2],
            x[3] - self.pole.x[3],
        ]);
        if dist < POLE_TOL {
            return Err(Error::PoleProximity { distance: dist });
        }
        let denom = 1.0 - dot4(x, &self.pole.x);
        Ok([
            dot4(x, &self.frame[0]) / denom,
            dot4(x, &self.frame[1]) / denom,
            dot4(x, &self.frame[2]) / denom,
        ])
    }

    pub fn inverse(&self, y: [f64; 3]) -> S3Point {
        let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        let s = 1.0 / (r2 + 1.0);
        let mut x = [0.0; 4];
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = s
                * (2.0
                    * (y[0] * self.frame[0][k]
                        + y[1] * self.frame[1][k]
                        + y[2] * self.frame[2][k])
                    + (r2 - 1.0) * self.pole.x[k]);
        }
        S3Point::from_unit(x)
    }
}

/// Writes the stereographic image of `θ_ρ` as an ASCII triangle mesh
/// (`v x y z` / `f a b c`, 1-based, periodic quad grid split in two).
pub fn write_mesh<W: Write>(
    geometry: &GraphGeometry,
    projection: &Stereographic,
    mut out: W,
) -> Result<()> {
    let n = geometry.grid.n();
    for p in &geometry.theta {
        let y = projection.project(&S3Point::from_unit(*p))?;
        writeln!(out, "v {:.12e} {:.12e} {:.12e}", y[0], y[1], y[2])?;
    }
    let idx = |i: usize, j: usize| (i % n) * n + (j % n) + 1;
    for i in 0..n {
        for j in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            writeln!(out, "f {a} {b} {c}")?;
            writeln!(out, "f {a} {c} {d}")?;
        }
    }
    Ok(())
}
