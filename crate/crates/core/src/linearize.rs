//! Finite-difference checks of the linearized graph velocity and mean
//! curvature at the Clifford torus.

use crate::error::{Error, Result};
use crate::flow::velocity;
use crate::geometry::graph_geometry;
use crate::spectral::{laplace_cc, tcc_apply, GridSpec, ScalarField};

/// A named Fourier test mode `cos(m u + k v)` or `sin(m u + k v)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestMode {
    pub name: &'static str,
    pub m: i64,
    pub k: i64,
    pub sine: bool,
}

impl TestMode {
    pub fn field(&self, grid: &GridSpec) -> ScalarField {
        let (m, k, sine) = (self.m as f64, self.k as f64, self.sine);
        ScalarField::from_fn(grid, |u, v| {
            let arg = m * u + k * v;
            if sine {
                arg.sin()
            } else {
                arg.cos()
            }
        })
    }
}

const fn mode(name: &'static str, m: i64, k: i64, sine: bool) -> TestMode {
    TestMode { name, m, k, sine }
}

/// The eight kernel modes followed by five stable modes.
pub const BATTERY: [TestMode; 13] = [
    mode("cos(u)", 1, 0, false),
    mode("sin(u)", 1, 0, true),
    mode("cos(v)", 0, 1, false),
    mode("sin(v)", 0, 1, true),
    mode("cos(u+v)", 1, 1, false),
    mode("sin(u+v)", 1, 1, true),
    mode("cos(u-v)", 1, -1, false),
    mode("sin(u-v)", 1, -1, true),
    mode("1", 0, 0, false),
    mode("cos(2u)", 2, 0, false),
    mode("sin(2v)", 0, 2, true),
    mode("cos(2u+v)", 2, 1, false),
    mode("sin(u-2v)", 1, -2, true),
];

/// Step sizes of the convergence protocol.
pub const STEP_SIZES: [f64; 3] = [1e-3, 1e-4, 1e-5];

fn check_step(h: f64) -> Result<()> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "step h = {h} must lie in [1e-6, 1e-3]"
        )));
    }
    Ok(())
}

/// One-sided difference quotient `(G(hφ) - G(0)) / h`.
pub fn fd_velocity_derivative(phi: &ScalarField, h: f64) -> Result<ScalarField> {
    check_step(h)?;
    let g0 = velocity(&ScalarField::zeros(phi.grid()))?;
    let gh = velocity(&(phi * h))?;
    Ok(&(&gh - &g0) * (1.0 / h))
}

/// One-sided difference quotient `(H(hφ) - H(0)) / h`.
pub fn fd_mean_curvature_derivative(phi: &ScalarField, h: f64) -> Result<ScalarField> {
    check_step(h)?;
    let h0 = graph_geometry(&ScalarField::zeros(phi.grid()))?.mean;
    let hh = graph_geometry(&(phi * h))?.mean;
    Ok(&(&hh - &h0) * (1.0 / h))
}

/// Central quotient `(G(hφ) - G(-hφ)) / 2h`.
pub fn fd_velocity_derivative_central(phi: &ScalarField, h: f64) -> Result<ScalarField> {
    check_step(h)?;
    let plus = velocity(&(phi * h))?;
    let minus = velocity(&(phi * -h))?;
    Ok(&(&plus - &minus) * (0.5 / h))
}

/// Central quotient `(H(hφ) - H(-hφ)) / 2h`.
pub fn fd_mean_curvature_derivative_central(phi: &ScalarField, h: f64) -> Result<ScalarField> {
    check_step(h)?;
    let plus = graph_geometry(&(phi * h))?.mean;
    let minus = graph_geometry(&(phi * -h))?.mean;
    Ok(&(&plus - &minus) * (0.5 / h))
}

/// `‖(G(hφ) - G(0))/h + T_CC φ‖∞`.
pub fn linearization_residual(phi: &ScalarField, h: f64) -> Result<f64> {
    let d = fd_velocity_derivative(phi, h)?;
    Ok((&d + &tcc_apply(phi)?).sup_norm())
}

/// `‖(H(hφ) - H(0))/h + Δ_CC φ + 4φ‖∞`.
pub fn mean_curvature_derivative_check(phi: &ScalarField, h: f64) -> Result<f64> {
    let d = fd_mean_curvature_derivative(phi, h)?;
    Ok((&(&d + &laplace_cc(phi)?) + &(phi * 4.0)).sup_norm())
}

/// Least-squares slope of `log r` against `log h`.
///
/// Residuals at or below `floor` are treated as converged and skipped; `None`
/// means fewer than two usable points remain.
pub fn convergence_order(steps: &[f64], residuals: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(residuals)
        .filter(|(_, &r)| r > floor)
        .map(|(&h, &r)| (h.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}
