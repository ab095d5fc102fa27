//! Seeded band-limited random fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::moebius::{ConformalParams, DIM};
use crate::spectral::{GridSpec, ScalarField};

/// Highest frequency `max(|m|, |k|)` present in random perturbations.
pub const MAX_MODE: i64 = 4;

/// Random trigonometric polynomial with coefficients uniform in `[-1, 1]` on
/// all modes with `max(|m|, |k|) ≤ 4`, scaled to sup-norm `amplitude`.
///
/// The sup-norm is that of the continuous polynomial, so the same seed gives
/// the same function on every grid.
pub fn random_band_limited(grid: &GridSpec, seed: u64, amplitude: f64) -> Result<ScalarField> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "amplitude {amplitude} must be finite and nonnegative"
        )));
    }
    if amplitude == 0.0 {
        return Ok(ScalarField::zeros(grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // one representative of each ±(m, k) pair
    let mut terms = Vec::new();
    for m in 0..=MAX_MODE {
        for k in -MAX_MODE..=MAX_MODE {
            if m == 0 && k < 0 {
                continue;
            }
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let b: f64 = if m == 0 && k == 0 {
                0.0
            } else {
                rng.gen_range(-1.0..=1.0)
            };
            terms.push((m as f64, k as f64, a, b));
        }
    }
    let eval = |u: f64, v: f64| -> f64 {
        terms
            .iter()
            .map(|&(m, k, a, b)| {
                let arg = m * u + k * v;
                a * arg.cos() + b * arg.sin()
            })
            .sum()
    };
    let f = ScalarField::from_fn(grid, eval);
    let sup = continuous_sup(&terms);
    Ok(&f * (amplitude / sup))
}

/// Sup-norm of `Σ a cos(mu + kv) + b sin(mu + kv)` over the whole torus.
///
/// The maximum of `|f|` is located on a fixed lattice and polished by Newton
/// steps on `∇f = 0`, so the result does not depend on the sampling grid.
fn continuous_sup(terms: &[(f64, f64, f64, f64)]) -> f64 {
    const LATTICE: usize = 64;
    // value, gradient and Hessian at (u, v)
    let jet = |u: f64, v: f64| {
        let mut out = [0.0; 6];
        for &(m, k, a, b) in terms {
            let arg = m * u + k * v;
            let (s, c) = arg.sin_cos();
            let f = a * c + b * s;
            let df = -a * s + b * c;
            out[0] += f;
            out[1] += m * df;
            out[2] += k * df;
            out[3] -= m * m * f;
            out[4] -= m * k * f;
            out[5] -= k * k * f;
        }
        out
    };
    let h = 2.0 * std::f64::consts::PI / LATTICE as f64;
    let mut samples: Vec<(f64, f64, f64)> = (0..LATTICE * LATTICE)
        .map(|idx| {
            let (u, v) = ((idx / LATTICE) as f64 * h, (idx % LATTICE) as f64 * h);
            (jet(u, v)[0].abs(), u, v)
        })
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = samples[0].0;
    for &(_, mut u, mut v) in samples.iter().take(16) {
        for _ in 0..20 {
            let j = jet(u, v);
            let det = j[3] * j[5] - j[4] * j[4];
            if det.abs() < 1e-300 {
                break;
            }
            let du = (j[5] * j[1] - j[4] * j[2]) / det;
            let dv = (j[3] * j[2] - j[4] * j[1]) / det;
            // stay inside the lattice cell the search started from
            if du.hypot(dv) > h {
                break;
            }
            u -= du;
            v -= dv;
            if du.hypot(dv) < 1e-15 {
                break;
            }
        }
        best = best.max(jet(u, v)[0].abs());
    }
    best
}

/// Conformal parameters in a uniformly random direction with `|z| = norm`.
pub fn random_conformal_params(seed: u64, norm: f64) -> Result<ConformalParams> {
    if !(0.0..1.0).contains(&norm) {
        return Err(Error::InvalidArgument(format!(
            "norm {norm} must lie in [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = [0.0; DIM];
    let len = loop {
        for x in z.iter_mut() {
            *x = rng.gen_range(-1.0..=1.0);
        }
        let len = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        // rejection keeps the direction uniform on the sphere
        if len > 1e-3 && len <= 1.0 {
            break len;
        }
    };
    z.iter_mut().for_each(|x| *x *= norm / len);
    ConformalParams::new(z)
}
