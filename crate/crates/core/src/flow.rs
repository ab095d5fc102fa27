//! Graph velocity of the Möbius-invariant Willmore flow and its semi-implicit
//! time integration.
//!
//! The scalar evolution is `∂_t ρ = G(ρ)` with
//!
//! ```text
//! G(ρ) = L_ρ / |A⁰_ρ|⁴ · (Δ_ρ H_ρ + 2 H_ρ (H_ρ² - K_ρ)).
//! ```
//!
//! Time stepping splits off the fourth-order operator `T_CC` and solves it
//! exactly in Fourier space:
//! `ρ⁺ = (I + dt T_CC)⁻¹ (ρ + dt (G(ρ) + T_CC ρ))`.

use crate::error::{Error, Result};
use crate::geometry::{beltrami_rho, graph_geometry, willmore_energy, DEFAULT_TUBE_RADIUS};
use crate::spectral::{tcc_symbol, CenterBasis, GridSpec, ScalarField, SpectralOperator};

/// Which normal-velocity law to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowLaw {
    /// Möbius-invariant Willmore flow, weighted by `|A⁰|⁻⁴`.
    Moebius,
    /// Classical Willmore flow: the same operator without the `|A⁰|⁻⁴` weight.
    Classical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Equilibrium is declared once `‖G(ρ)‖∞` drops below this value.
    pub residual_tol: f64,
    /// Lower bound on `min |A⁰|²` (umbilic guard).
    pub a0_floor: f64,
    pub record_every: usize,
    /// Runs abort once `‖ρ‖∞` reaches this radius.
    pub tube_radius: f64,
    /// Allowed energy increase per step.
    pub energy_slack: f64,
    pub law: FlowLaw,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 20.0,
            residual_tol: 1e-8,
            a0_floor: 0.5,
            record_every: 10,
            tube_radius: DEFAULT_TUBE_RADIUS,
            energy_slack: 1e-9,
            law: FlowLaw::Moebius,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return bad(format!("dt = {} must lie in (0, 1e-2]", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol <= 1e-4) {
            return bad(format!(
                "residual_tol = {} must lie in (0, 1e-4]",
                self.residual_tol
            ));
        }
        if !(self.a0_floor > 0.0 && self.a0_floor < 1.0) {
            return bad(format!("a0_floor = {} must lie in (0, 1)", self.a0_floor));
        }
        if self.record_every == 0 {
            return bad("record_every must be positive".into());
        }
        if !(self.tube_radius > 0.0 && self.tube_radius < std::f64::consts::FRAC_PI_4) {
            return bad(format!(
                "tube_radius = {} must lie in (0, π/4)",
                self.tube_radius
            ));
        }
        if !(self.energy_slack >= 0.0) {
            return bad("energy_slack must be nonnegative".into());
        }
        Ok(())
    }
}

/// Velocity together with the diagnostics computed from the same geometry.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub velocity: ScalarField,
    pub energy: f64,
    pub residual: f64,
    pub min_a0_sq: f64,
}

/// Evaluates `G` for a given law without dealiasing.
fn raw_velocity(rho: &ScalarField, law: FlowLaw, a0_floor: f64) -> Result<(ScalarField, f64, f64)> {
    let geo = graph_geometry(rho)?;
    let min_a0 = geo.a0_sq.min();
    if law == FlowLaw::Moebius && min_a0 < a0_floor {
        return Err(Error::UmbilicGuard {
            min: min_a0,
            floor: a0_floor,
        });
    }
    let lap_h = beltrami_rho(&geo, &geo.mean)?;
    let n = rho.grid().n();
    let vals = ndarray::Array2::from_shape_fn((n, n), |(i, j)| {
        let h = geo.mean.get(i, j);
        let k = geo.gauss.get(i, j);
        let willmore = lap_h.get(i, j) + 2.0 * h * (h * h - k);
        let weight = match law {
            FlowLaw::Moebius => {
                let a0 = geo.a0_sq.get(i, j);
                geo.lapse.get(i, j) / (a0 * a0)
            }
            FlowLaw::Classical => geo.lapse.get(i, j),
        };
        weight * willmore
    });
    let g = ScalarField::new(rho.grid(), vals)?;
    Ok((g, willmore_energy(&geo), min_a0))
}

/// `G(ρ)` for the Möbius-invariant law with the default umbilic floor,
/// dealiased by the 2/3 rule.
pub fn velocity(rho: &ScalarField) -> Result<ScalarField> {
    let cfg = FlowConfig::default();
    let (g, _, _) = raw_velocity(rho, cfg.law, cfg.a0_floor)?;
    let mut spec = g.spectrum();
    spec.dealias();
    Ok(spec.to_field())
}

/// Semi-implicit integrator on a fixed grid.
#[derive(Clone, Debug)]
pub struct FlowEngine {
    cfg: FlowConfig,
    grid: GridSpec,
    tcc: SpectralOperator,
    resolvent: SpectralOperator,
    basis: CenterBasis,
}

impl FlowEngine {
    pub fn new(grid: &GridSpec, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            tcc: SpectralOperator::tcc(grid),
            resolvent: SpectralOperator::resolvent(grid, cfg.dt),
            basis: CenterBasis::new(grid),
            grid: grid.clone(),
            cfg,
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn basis(&self) -> &CenterBasis {
        &self.basis
    }

    pub fn evaluate(&self, rho: &ScalarField) -> Result<Evaluation> {
        if rho.grid() != &self.grid {
            return Err(Error::GridMismatch(self.grid.n(), rho.grid().n()));
        }
        let (g, energy, min_a0_sq) = raw_velocity(rho, self.cfg.law, self.cfg.a0_floor)?;
        let mut spec = g.spectrum();
        spec.dealias();
        let velocity = spec.to_field();
        let residual = velocity.sup_norm();
        Ok(Evaluation {
            velocity,
            energy,
            residual,
            min_a0_sq,
        })
    }

    pub fn velocity(&self, rho: &ScalarField) -> Result<ScalarField> {
        Ok(self.evaluate(rho)?.velocity)
    }

    /// Advances one step given the velocity already evaluated at `rho`.
    pub fn step_with(&self, rho: &ScalarField, velocity: &ScalarField) -> ScalarField {
        let dt = self.cfg.dt;
        let mut spec = rho.spectrum();
        let g = velocity.spectrum();
        let tcc = self.tcc.multipliers();
        let res = self.resolvent.multipliers();
        let cutoff = self.grid.dealias_cutoff();
        let mut idx = 0;
        let gc = g.clone();
        spec.for_each_mode(|m, k, c| {
            if m.abs() > cutoff || k.abs() > cutoff {
                *c = 0.0.into();
            } else {
                let gv = gc.coeff(m, k) * (self.grid.n() * self.grid.n()) as f64;
                *c = (*c + (gv + *c * tcc[idx]) * dt) * res[idx];
            }
            idx += 1;
        });
        spec.to_field()
    }

    pub fn step(&self, rho: &ScalarField) -> Result<ScalarField> {
        let eval = self.evaluate(rho)?;
        Ok(self.step_with(rho, &eval.velocity))
    }

    fn record(
        &self,
        traj: &mut FlowTrajectory,
        t: f64,
        rho: &ScalarField,
        eval: &Evaluation,
    ) -> Result<()> {
        let proj = self.basis.project(rho)?;
        traj.times.push(t);
        traj.states.push(rho.clone());
        traj.energies.push(eval.energy);
        traj.residuals.push(eval.residual);
        traj.center_norms.push(proj.center.l2_norm());
        traj.stable_norms.push(proj.stable.l2_norm());
        Ok(())
    }

    /// Integrates from `rho0` until `t_end` or until the residual falls below
    /// `residual_tol`.
    pub fn run(&self, rho0: &ScalarField) -> std::result::Result<FlowTrajectory, FlowAbort> {
        let mut traj = FlowTrajectory::default();
        let dt = self.cfg.dt;
        let max_steps = (self.cfg.t_end / dt).round() as usize;
        let mut rho = rho0.clone();
        let mut prev_energy: Option<f64> = None;
        let mut step = 0usize;

        loop {
            let t = step as f64 * dt;
            let abort = |traj: &mut FlowTrajectory, cause: Error| FlowAbort {
                step,
                time: t,
                cause,
                partial: std::mem::take(traj),
            };
            let sup = rho.sup_norm();
            if !(sup < self.cfg.tube_radius) {
                let cause = Error::ChartDomain(format!(
                    "‖ρ‖∞ = {sup} left the tube of radius {}",
                    self.cfg.tube_radius
                ));
                return Err(abort(&mut traj, cause));
            }
            let eval = match self.evaluate(&rho) {
                Ok(e) => e,
                Err(e) => return Err(abort(&mut traj, e)),
            };
            if let Some(prev) = prev_energy {
                let increase = eval.energy - prev;
                if increase > self.cfg.energy_slack {
                    let cause = Error::EnergyIncrease {
                        increase,
                        slack: self.cfg.energy_slack,
                    };
                    return Err(abort(&mut traj, cause));
                }
            }
            prev_energy = Some(eval.energy);

            let done = eval.residual < self.cfg.residual_tol;
            let last = done || step >= max_steps;
            if step.is_multiple_of(self.cfg.record_every) || last {
                if let Err(e) = self.record(&mut traj, t, &rho, &eval) {
                    return Err(abort(&mut traj, e));
                }
            }
            if last {
                traj.converged = done;
                traj.steps = step;
                return Ok(traj);
            }
            rho = self.step_with(&rho, &eval.velocity);
            step += 1;
        }
    }
}

/// Recorded flow line `t ↦ ρ_t` with per-record diagnostics.
#[derive(Clone, Debug, Default)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ScalarField>,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub center_norms: Vec<f64>,
    pub stable_norms: Vec<f64>,
    pub converged: bool,
    pub steps: usize,
}

impl FlowTrajectory {
    /// Builds a trajectory from given states; energies and residuals are left at zero.
    pub fn from_states(times: Vec<f64>, states: Vec<ScalarField>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::InvalidArgument(
                "times and states must be nonempty and of equal length".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "times must be strictly increasing".into(),
            ));
        }
        let basis = CenterBasis::new(states[0].grid());
        let mut center_norms = Vec::with_capacity(states.len());
        let mut stable_norms = Vec::with_capacity(states.len());
        for s in &states {
            let p = basis.project(s)?;
            center_norms.push(p.center.l2_norm());
            stable_norms.push(p.stable.l2_norm());
        }
        Ok(Self {
            energies: vec![0.0; times.len()],
            residuals: vec![0.0; times.len()],
            times,
            states,
            center_norms,
            stable_norms,
            converged: true,
            steps: 0,
        })
    }

    /// The terminal state `ρ_∞`.
    pub fn terminal(&self) -> Option<&ScalarField> {
        self.states.last()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// `‖ρ_t - ρ_∞‖` in `L²(CC)` for every record.
    pub fn distances_to_terminal(&self) -> Vec<f64> {
        match self.terminal() {
            Some(last) => self.states.iter().map(|s| (s - last).l2_norm()).collect(),
            None => Vec::new(),
        }
    }

    /// Largest per-record energy increase (negative when strictly decreasing).
    pub fn max_energy_increase(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `t,energy,residual,center_norm,stable_norm` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,energy,residual,center_norm,stable_norm")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k],
                self.energies[k],
                self.residuals[k],
                self.center_norms[k],
                self.stable_norms[k]
            )?;
        }
        Ok(())
    }
}

/// A run that stopped on a guard; carries everything recorded so far.
#[derive(Debug, thiserror::Error)]
#[error("flow aborted at step {step} (t = {time}): {cause}")]
pub struct FlowAbort {
    pub step: usize,
    pub time: f64,
    #[source]
    pub cause: Error,
    pub partial: FlowTrajectory,
}

/// Negated least-squares slope of `log ‖ρ_t - ρ_∞‖` over `window`.
pub fn decay_rate(trajectory: &FlowTrajectory, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    let dist = trajectory.distances_to_terminal();
    let samples: Vec<(f64, f64)> = trajectory
        .times
        .iter()
        .zip(&dist)
        .filter(|(&t, &d)| t >= lo && t <= hi && d > 0.0)
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    if samples.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} samples in window [{lo}, {hi}], need at least 5",
            samples.len()
        )));
    }
    let k = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / k;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / k;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mt) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mt) * (s.0 - mt)).sum();
    Ok(-sxy / sxx)
}

/// Time window of the last decade of `‖ρ_t - ρ_∞‖` that is resolved above the
/// uncertainty of `ρ_∞` itself.
///
/// The terminal state is only known up to roughly its residual, so the window
/// covers distances in `[10³ δ, 10⁴ δ]` where `δ` is the final residual scaled
/// to an `L²(CC)` bound.
pub fn final_decade_window(trajectory: &FlowTrajectory) -> Option<(f64, f64)> {
    let last_res = *trajectory.residuals.last()?;
    let area = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let delta = (last_res * area.sqrt()).max(1e-14);
    let (lo_d, hi_d) = (1e3 * delta, 1e4 * delta);
    let dist = trajectory.distances_to_terminal();
    let t_lo = trajectory
        .times
        .iter()
        .zip(&dist)
        .find(|(_, &d)| d <= hi_d)?
        .0;
    let t_hi = trajectory
        .times
        .iter()
        .zip(&dist)
        .find(|(_, &d)| d <= lo_d)?
        .0;
    (t_hi > t_lo).then_some((*t_lo, *t_hi))
}

/// Smallest positive `T_CC` eigenvalue among modes present in `f` above `tol`.
pub fn slowest_stable_symbol(f: &ScalarField, tol: f64) -> Option<f64> {
    let spec = f.spectrum();
    let n = f.grid().n() as i64;
    let mut best: Option<f64> = None;
    for k in -(n / 2)..(n / 2) {
        for m in -(n / 2)..(n / 2) {
            let s = tcc_symbol(m, k);
            if s > 0.0 && spec.coeff(m, k).norm() > tol {
                best = Some(best.map_or(s, |b: f64| b.min(s)));
            }
        }
    }
    best
}
