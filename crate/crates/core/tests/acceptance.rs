//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use wflab_core::flow::{decay_rate, final_decade_window, velocity, FlowConfig, FlowEngine};
use wflab_core::geometry::{graph_geometry, willmore_energy};
use wflab_core::linearize::{
    convergence_order, fd_mean_curvature_derivative_central, fd_velocity_derivative_central,
    linearization_residual, mean_curvature_derivative_check, BATTERY, STEP_SIZES,
};
use wflab_core::moebius::{df0_rank_check, equilibrium_distance_function};
use wflab_core::perturb::{random_band_limited, random_conformal_params};
use wflab_core::spectral::{
    laplace_cc, laplace_symbol, project_center, spectral_gap, tcc_apply, tcc_spectrum, GridSpec,
    ScalarField, SpectralOperator,
};

const TWO_PI2: f64 = 2.0 * PI * PI;

struct Outcome {
    pass: bool,
    detail: String,
    info: Vec<String>,
    /// Real-valued results compared across resolutions.
    values: Vec<(String, f64)>,
    /// Fields compared across resolutions on the shared grid points.
    fields: Vec<(String, ScalarField)>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            detail: String::new(),
            info: Vec::new(),
            values: Vec::new(),
            fields: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, what: String) {
        if !ok {
            self.pass = false;
            self.info.push(format!("violated: {what}"));
        }
    }
}

fn report(tag: &str, o: &Outcome) -> bool {
    println!(
        "{} {tag}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    for line in &o.info {
        println!("     {line}");
    }
    o.pass
}

fn cos_mode(grid: &GridSpec, m: i64, k: i64) -> ScalarField {
    ScalarField::from_fn(grid, |u, v| (m as f64 * u + k as f64 * v).cos())
}

/// Eigenvalues of the Laplacian and of the linearized operator.
fn spectrum(grid: &GridSpec) -> Outcome {
    let mut o = Outcome::new();
    let n = grid.n() as i64;
    let lap = SpectralOperator::laplace(grid);
    let tcc = SpectralOperator::tcc(grid);
    let mut exact = true;
    let mut kernel = Vec::new();
    let mut negative = 0;
    for k in -(n / 2)..(n / 2) {
        for m in -(n / 2)..(n / 2) {
            let want = -2.0 * (m * m + k * k) as f64;
            exact &= lap.multiplier(m, k) == want && laplace_symbol(m, k) == want;
            let t = tcc.multiplier(m, k);
            let lam = want;
            exact &= t == 0.25 * (lam + 4.0) * (lam + 2.0);
            if t < 0.0 {
                negative += 1;
            }
            if t == 0.0 {
                kernel.push((m, k));
            }
        }
    }
    o.require(
        exact,
        "multipliers differ from -2(m²+n²) and ¼(λ+4)(λ+2)".into(),
    );
    o.require(negative == 0, format!("{negative} negative T multipliers"));
    let kernel_ok =
        kernel.len() == 8 && kernel.iter().all(|&(m, k)| matches!(m * m + k * k, 1 | 2));
    o.require(kernel_ok, format!("kernel modes {kernel:?}"));

    let entries = tcc_spectrum(n / 2 - 1).expect("spectrum");
    let gap = spectral_gap(&entries);
    o.require(gap == Some(2.0), format!("mu1 = {gap:?}"));

    // eigenvalues measured on sampled modes as Rayleigh quotients
    let (mut worst, mut pointwise): (f64, f64) = (0.0, 0.0);
    let t_norm = tcc.multipliers().iter().cloned().fold(0.0, f64::max);
    for (m, k) in [
        (0, 0),
        (1, 0),
        (1, 1),
        (2, 0),
        (2, 1),
        (3, -2),
        (5, 7),
        (n / 2 - 1, 1),
    ] {
        let f = cos_mode(grid, m, k);
        let ff = f.inner(&f).unwrap();
        let lam = -2.0 * (m * m + k * k) as f64;
        let t = 0.25 * (lam + 4.0) * (lam + 2.0);
        let lf = laplace_cc(&f).unwrap();
        let tf = tcc_apply(&f).unwrap();
        let el = (lf.inner(&f).unwrap() / ff - lam).abs() / lam.abs().max(1.0);
        let et = (tf.inner(&f).unwrap() / ff - t).abs() / t.abs().max(1.0);
        worst = worst.max(el).max(et);
        pointwise = pointwise.max((&tf - &(&f * t)).sup_norm() / t_norm);
    }
    o.require(
        worst <= 1e-12,
        format!("measured eigenvalue error {worst:e}"),
    );
    o.info.push(format!(
        "‖Tf - λf‖∞ / ‖T‖ on the sampled modes: {pointwise:.1e}"
    ));
    o.detail = format!(
        "kernel dim {} at m²+n² in {{1,2}}, mu1 = {}, no negative eigenvalue, measured eigenvalue error {worst:.1e}",
        kernel.len(),
        gap.unwrap_or(f64::NAN)
    );
    o
}

/// The Clifford torus as an equilibrium.
fn clifford(grid: &GridSpec) -> Outcome {
    let mut o = Outcome::new();
    let zero = ScalarField::zeros(grid);
    let g = velocity(&zero).unwrap().sup_norm();
    let geo = graph_geometry(&zero).unwrap();
    let w = willmore_energy(&geo);
    let dev = |f: &ScalarField, c: f64| (f - &ScalarField::constant(grid, c)).sup_norm();
    let (dh, dk, da, dl) = (
        dev(&geo.mean, 0.0),
        dev(&geo.gauss, -1.0),
        dev(&geo.a0_sq, 2.0),
        dev(&geo.lapse, 1.0),
    );
    o.require(g <= 1e-10, format!("‖G(0)‖∞ = {g:e}"));
    o.require(
        (w - TWO_PI2).abs() <= 1e-10,
        format!("W(0) - 2π² = {:e}", w - TWO_PI2),
    );
    o.require(
        dh.max(dk).max(da).max(dl) <= 1e-9,
        format!("constants off by {dh:e} {dk:e} {da:e} {dl:e}"),
    );
    o.detail = format!(
        "‖G(0)‖∞ = {g:.1e}, W - 2π² = {:.1e}, max constant error {:.1e}",
        w - TWO_PI2,
        dh.max(dk).max(da).max(dl)
    );
    o.values.push(("W(0)".into(), w));
    o
}

/// Finite-difference linearization at the Clifford torus.
fn linearization(grid: &GridSpec) -> Outcome {
    let mut o = Outcome::new();
    let h = 1e-5;
    let (mut worst_g, mut worst_h, mut worst_half_g, mut worst_half_h) = (0f64, 0f64, 0f64, 0f64);
    let mut worst_order = f64::INFINITY;
    for mode in BATTERY {
        let phi = mode.field(grid);
        let norm = phi.sup_norm();
        let t_phi = tcc_apply(&phi).unwrap();
        let h_lin = &(&laplace_cc(&phi).unwrap() + &(&phi * 4.0)) * -1.0;

        let dg = fd_velocity_derivative_central(&phi, h).unwrap();
        let eg = (&dg + &t_phi).sup_norm() / norm;
        let eg_half = (&dg + &(&t_phi * 0.5)).sup_norm() / norm;
        let dh = fd_mean_curvature_derivative_central(&phi, h).unwrap();
        let eh = (&dh - &h_lin).sup_norm() / norm;
        let eh_half = (&dh - &(&h_lin * 0.5)).sup_norm() / norm;

        let res_g: Vec<f64> = STEP_SIZES
            .iter()
            .map(|&s| linearization_residual(&phi, s).unwrap())
            .collect();
        let res_h: Vec<f64> = STEP_SIZES
            .iter()
            .map(|&s| mean_curvature_derivative_check(&phi, s).unwrap())
            .collect();
        let ord_g = convergence_order(&STEP_SIZES, &res_g, 1e-11);
        let ord_h = convergence_order(&STEP_SIZES, &res_h, 1e-11);
        // a residual already at roundoff at every step counts as converged
        let ord = ord_g
            .unwrap_or(f64::INFINITY)
            .min(ord_h.unwrap_or(f64::INFINITY));

        o.require(eg <= 1e-4, format!("{}: G error {eg:.3e}", mode.name));
        o.require(eh <= 1e-5, format!("{}: H error {eh:.3e}", mode.name));
        o.require(
            ord >= 0.9,
            format!("{}: order G {ord_g:?} H {ord_h:?}", mode.name),
        );
        worst_g = worst_g.max(eg);
        worst_h = worst_h.max(eh);
        worst_half_g = worst_half_g.max(eg_half);
        worst_half_h = worst_half_h.max(eh_half);
        worst_order = worst_order.min(ord);
        o.values.push((format!("dG {}", mode.name), eg_half));
    }
    o.detail = format!(
        "max error G {worst_g:.3e} (≤ 1e-4), H {worst_h:.3e} (≤ 1e-5), min order {worst_order:.3}"
    );
    o.info.push(format!(
        "against half the operators: G {worst_half_g:.1e}, H {worst_half_h:.1e}"
    ));
    o
}

/// Constant graphs are flat tori with radii `a`, `b`.
fn flat_tori(grid: &GridSpec) -> Outcome {
    let mut o = Outcome::new();
    let mut worst: f64 = 0.0;
    let mut worst_other_sign: f64 = 0.0;
    for c in [-0.1f64, -0.05, 0.05, 0.1] {
        let a = (c.cos() - c.sin()) / 2f64.sqrt();
        let b = (c.cos() + c.sin()) / 2f64.sqrt();
        // principal curvatures -b/a and a/b with the outward orientation
        let (k1, k2) = (-b / a, a / b);
        let mean = 0.5 * (k1 + k2);
        let gauss = k1 * k2;
        let area = 4.0 * PI * PI * a * b;
        let a0 = 0.5 * (k1 - k2) * (k1 - k2);
        let g = 2.0 * mean * (mean * mean - gauss) / (a0 * a0);

        let rho = ScalarField::constant(grid, c);
        let geo = graph_geometry(&rho).unwrap();
        let vel = velocity(&rho).unwrap();
        let dev = |f: &ScalarField, x: f64| (f - &ScalarField::constant(grid, x)).sup_norm();
        let errs = [
            dev(&geo.mean, mean),
            dev(&geo.gauss, gauss),
            (geo.total_area() - area).abs(),
            dev(&vel, g),
        ];
        let e = errs.iter().cloned().fold(0.0, f64::max);
        o.require(e <= 1e-8, format!("c = {c}: errors {errs:?}"));
        worst = worst.max(e);
        worst_other_sign = worst_other_sign.max(dev(&geo.mean, -mean));
        o.values.push((format!("H({c})"), geo.mean.get(0, 0)));
        o.values.push((format!("K({c})"), geo.gauss.get(0, 0)));
        o.values.push((format!("area({c})"), geo.total_area()));
        o.values.push((format!("G({c})"), vel.get(0, 0)));
    }
    o.detail = format!("H, K, area, G within {worst:.1e} for c in ±0.05, ±0.1");
    o.info.push(format!(
        "mean curvature against 2H = b/a - a/b: off by up to {worst_other_sign:.3e}"
    ));
    o
}

/// Equilibria from conformal images of the Clifford torus.
fn equilibria(grid: &GridSpec) -> Outcome {
    let mut o = Outcome::new();
    let (mut worst_g, mut worst_w) = (0f64, 0f64);
    let mut failed = 0;
    for seed in 0..20u64 {
        let norm = 0.005 * (seed + 1) as f64;
        let z = random_conformal_params(1000 + seed, norm).unwrap();
        let rho = match equilibrium_distance_function(&z, grid) {
            Ok(r) => r,
            Err(e) => {
                failed += 1;
                o.require(false, format!("|z| = {norm}: {e}"));
                continue;
            }
        };
        let g = velocity(&rho).unwrap().sup_norm();
        let w = willmore_energy(&graph_geometry(&rho).unwrap());
        o.require(g <= 1e-6, format!("|z| = {norm}: ‖G‖∞ = {g:e}"));
        o.require(
            (w - TWO_PI2).abs() <= 1e-6,
            format!("|z| = {norm}: W - 2π² = {:e}", w - TWO_PI2),
        );
        worst_g = worst_g.max(g);
        worst_w = worst_w.max((w - TWO_PI2).abs());
        o.values.push((format!("W(z{seed})"), w));
        o.fields.push((format!("rho(z{seed})"), rho));
    }
    let rank = df0_rank_check(1e-4, grid).unwrap();
    let tail = rank.column_norms[8].max(rank.column_norms[9]);
    o.require(rank.rank == 8, format!("rank {}", rank.rank));
    o.require(tail <= 1e-8, format!("columns 9, 10 norm {tail:e}"));
    o.detail = format!(
        "{} of 20 extracted, max ‖G‖∞ {worst_g:.1e}, max |W - 2π²| {worst_w:.1e}, rank {}, columns 9,10 {tail:.1e}",
        20 - failed,
        rank.rank
    );
    o.info.push(format!(
        "singular values {:?}",
        rank.singular_values
            .iter()
            .map(|s| format!("{s:.6}"))
            .collect::<Vec<_>>()
    ));
    for (i, s) in rank.singular_values.iter().enumerate() {
        o.values.push((format!("sigma{i}"), *s));
    }
    o
}

/// Per-trajectory measurements of a flow run.
struct Run {
    label: String,
    error: Option<String>,
    converged: bool,
    final_time: f64,
    final_residual: f64,
    max_increase: f64,
    terminal_energy: f64,
    rate: Option<f64>,
    constant_content: bool,
    seconds: f64,
    rho0_sq: f64,
    center_variation: f64,
    stable_increases: usize,
    stable_offset_increases: usize,
    terminal: Option<ScalarField>,
}

fn run_flow(label: String, rho0: ScalarField) -> Run {
    let engine = FlowEngine::new(rho0.grid(), FlowConfig::default()).unwrap();
    let start = Instant::now();
    let result = engine.run(&rho0);
    let seconds = start.elapsed().as_secs_f64();
    let rho0_sq = rho0.l2_norm().powi(2);
    let constant_content = rho0.spectrum().coeff(0, 0).norm() > 1e-12;
    let traj = match result {
        Ok(t) => t,
        Err(abort) => {
            return Run {
                label,
                error: Some(abort.to_string()),
                converged: false,
                final_time: abort.time,
                final_residual: f64::NAN,
                max_increase: f64::NAN,
                terminal_energy: f64::NAN,
                rate: None,
                constant_content,
                seconds,
                rho0_sq,
                center_variation: f64::NAN,
                stable_increases: 0,
                stable_offset_increases: 0,
                terminal: None,
            }
        }
    };
    let rate = final_decade_window(&traj).and_then(|w| decay_rate(&traj, w).ok());
    let center_variation = traj
        .center_norms
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum();
    let after = |i: usize| traj.times[i] >= 1.0;
    let stable_increases = (1..traj.times.len())
        .filter(|&i| after(i - 1) && traj.stable_norms[i] > traj.stable_norms[i - 1])
        .count();
    let terminal = traj.terminal().unwrap().clone();
    let offsets: Vec<f64> = traj
        .states
        .iter()
        .map(|s| project_center(&(s - &terminal)).unwrap().stable.l2_norm())
        .collect();
    let stable_offset_increases = (1..offsets.len())
        .filter(|&i| after(i - 1) && offsets[i] > offsets[i - 1])
        .count();
    Run {
        label,
        error: None,
        converged: traj.converged,
        final_time: traj.final_time(),
        final_residual: *traj.residuals.last().unwrap(),
        max_increase: if traj.energies.len() > 1 {
            traj.max_energy_increase()
        } else {
            0.0
        },
        terminal_energy: *traj.energies.last().unwrap(),
        rate,
        constant_content,
        seconds,
        rho0_sq,
        center_variation,
        stable_increases,
        stable_offset_increases,
        terminal: Some(terminal),
    }
}

fn flow_runs(grid: &GridSpec) -> Vec<Run> {
    let mut runs = Vec::new();
    for seed in 0..10u64 {
        let rho0 = random_band_limited(grid, seed, 0.02).unwrap();
        runs.push(run_flow(format!("seed {seed}"), rho0));
    }
    let cos2u = ScalarField::from_fn(grid, |u, _| 0.02 * (2.0 * u).cos());
    runs.push(run_flow("0.02 cos(2u)".into(), cos2u));
    runs
}

/// Convergence, energy decrease and decay rate of flow runs.
fn convergence(runs: &[Run]) -> Outcome {
    let mut o = Outcome::new();
    let mut slowest: f64 = 0.0;
    for r in runs {
        if let Some(e) = &r.error {
            o.require(false, format!("{}: aborted: {e}", r.label));
            continue;
        }
        let conv = r.converged && r.final_residual <= 1e-8 && r.final_time <= 20.0;
        o.require(
            conv,
            format!(
                "{}: converged {} at t = {}",
                r.label, r.converged, r.final_time
            ),
        );
        o.require(
            r.max_increase <= 1e-9,
            format!("{}: energy increase {:e}", r.label, r.max_increase),
        );
        let de = r.terminal_energy - TWO_PI2;
        o.require(
            de.abs() <= 1e-4,
            format!("{}: terminal W - 2π² = {de:e}", r.label),
        );
        let rate = r.rate.unwrap_or(f64::NAN);
        if r.label.contains("cos") {
            o.require(
                (rate - 6.0).abs() <= 0.6,
                format!("{}: rate {rate:.4}, want 6 ± 10%", r.label),
            );
        } else if r.constant_content {
            o.require(
                rate >= 1.8,
                format!("{}: rate {rate:.4}, want ≥ 1.8", r.label),
            );
        }
        o.require(
            r.seconds <= 120.0,
            format!("{}: {:.1} s", r.label, r.seconds),
        );
        slowest = slowest.max(r.seconds);
        o.info.push(format!(
            "{}: t = {:.3}, residual {:.1e}, W - 2π² = {de:.1e}, max record increase {:.1e}, rate {rate:.4}, {:.1} s",
            r.label, r.final_time, r.final_residual, r.max_increase, r.seconds
        ));
        o.values
            .push((format!("W_inf {}", r.label), r.terminal_energy));
        o.values.push((format!("rate {}", r.label), rate));
        if let Some(t) = &r.terminal {
            o.fields.push((format!("rho_inf {}", r.label), t.clone()));
        }
    }
    let ok = runs
        .iter()
        .filter(|r| r.error.is_none() && r.converged)
        .count();
    o.detail = format!(
        "{ok} of {} runs converged, slowest {slowest:.1} s",
        runs.len()
    );
    o
}

/// Motion of the center and stable components along flow runs.
fn center_kinematics(runs: &[Run]) -> Outcome {
    let mut o = Outcome::new();
    let (mut worst_ratio, mut increases, mut offset_increases) = (0f64, 0, 0);
    for r in runs.iter().filter(|r| r.error.is_none() && r.converged) {
        let bound = 5.0 * r.rho0_sq;
        o.require(
            r.center_variation <= bound,
            format!(
                "{}: center variation {:e} > {bound:e}",
                r.label, r.center_variation
            ),
        );
        o.require(
            r.stable_increases == 0,
            format!(
                "{}: stable norm increases {} times after t = 1",
                r.label, r.stable_increases
            ),
        );
        worst_ratio = worst_ratio.max(r.center_variation / bound);
        increases += r.stable_increases;
        offset_increases += r.stable_offset_increases;
    }
    o.detail = format!(
        "center variation at most {worst_ratio:.2e} of the bound, {increases} stable-norm increases after t = 1"
    );
    o.info.push(format!(
        "stable part of the distance to the terminal state: {offset_increases} increases after t = 1"
    ));
    o
}

/// Sup difference of two fields on the grid points they share.
fn shared_difference(a: &ScalarField, b: &ScalarField) -> f64 {
    let (na, nb) = (a.grid().n(), b.grid().n());
    let g = gcd(na, nb);
    let (sa, sb) = (na / g, nb / g);
    let mut worst: f64 = 0.0;
    for i in 0..g {
        for j in 0..g {
            worst = worst.max((a.get(i * sa, j * sa) - b.get(i * sb, j * sb)).abs());
        }
    }
    worst
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn main() {
    let mut all = true;
    let coarse = GridSpec::new(64).unwrap();
    let fine = GridSpec::new(96).unwrap();

    all &= report("1 spectrum", &spectrum(&coarse));

    let mut per_grid = Vec::new();
    let mut coarse_runs = Vec::new();
    for grid in [&coarse, &fine] {
        let n = grid.n();
        let c2 = clifford(grid);
        let c3 = linearization(grid);
        let c4 = flat_tori(grid);
        let c5 = equilibria(grid);
        let runs = flow_runs(grid);
        let c6 = convergence(&runs);
        let pass = [&c2, &c3, &c4, &c5, &c6].iter().all(|o| o.pass);
        if n == 64 {
            all &= report("2 clifford equilibrium", &c2);
            all &= report("3 linearization", &c3);
            all &= report("4 flat tori", &c4);
            all &= report("5 equilibrium manifold", &c5);
            all &= report("6 convergence and rate", &c6);
            coarse_runs = runs;
        } else {
            for (tag, o) in [("2", &c2), ("3", &c3), ("4", &c4), ("5", &c5), ("6", &c6)] {
                println!(
                    "     n = 96 criterion {tag}: {} {}",
                    if o.pass { "pass" } else { "fail" },
                    o.detail
                );
            }
        }
        per_grid.push((pass, [c2, c3, c4, c5, c6]));
    }

    all &= report("7 center kinematics", &center_kinematics(&coarse_runs));

    let mut c8 = Outcome::new();
    for (n, (pass, _)) in [64, 96].iter().zip(&per_grid) {
        c8.require(*pass, format!("criteria 2-6 fail at n = {n}"));
    }
    let (mut worst_value, mut worst_field) = (0f64, 0f64);
    let mut worst_name = String::new();
    for (a, b) in per_grid[0].1.iter().zip(&per_grid[1].1) {
        for ((name, x), (_, y)) in a.values.iter().zip(&b.values) {
            let d = (x - y).abs();
            if !(d <= 1e-6) {
                c8.require(false, format!("{name}: {x} vs {y}"));
            }
            if d > worst_value || d.is_nan() {
                worst_value = d;
                worst_name = name.clone();
            }
        }
        for ((name, x), (_, y)) in a.fields.iter().zip(&b.fields) {
            let d = shared_difference(x, y);
            c8.require(
                d <= 1e-6,
                format!("{name}: differs by {d:e} on shared points"),
            );
            worst_field = worst_field.max(d);
        }
    }
    c8.detail = format!(
        "largest value difference {worst_value:.1e} ({worst_name}), largest field difference {worst_field:.1e}"
    );
    all &= report("8 resolution independence", &c8);

    if !all {
        std::process::exit(1);
    }
}
