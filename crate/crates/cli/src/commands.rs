//! The six experiment commands. Each writes its artifacts under the output
//! directory and reports the outcome of its built-in checks.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use wflab_core::flow::{decay_rate, final_decade_window, FlowEngine, FlowTrajectory};
use wflab_core::geometry::{
    clifford_point, graph_geometry, willmore_energy, write_mesh, S3Point, Stereographic,
};
use wflab_core::linearize::{
    convergence_order, fd_mean_curvature_derivative, fd_velocity_derivative,
    linearization_residual, mean_curvature_derivative_check, BATTERY, STEP_SIZES,
};
use wflab_core::moebius::{df0_rank_check, equilibrium_distance_function, ConformalParams, DIM};
use wflab_core::perturb::{random_band_limited, random_conformal_params};
use wflab_core::spectral::{project_center, spectral_gap, tcc_spectrum, GridSpec, ScalarField};
use wflab_core::{Error, Result};

use crate::config::{Command, ExperimentConfig};

const WILLMORE_CC: f64 = 2.0 * PI * PI;

/// Artifacts, summary lines and failed checks of one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn create(&mut self, cfg: &ExperimentConfig, name: &str) -> Result<BufWriter<File>> {
        let path = cfg.output_path(name);
        let file = File::create(&path).map_err(|e| io_context(&path, e))?;
        self.artifacts.push(path);
        Ok(BufWriter::new(file))
    }
}

fn io_context(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn map_items<T, R, F>(items: Vec<T>, parallel: bool, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if parallel {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_context(&cfg.output_dir, e))?;
    match cfg.command {
        Command::Spectrum => spectrum(cfg),
        Command::Linearize => linearize(cfg),
        Command::Flow => flow(cfg),
        Command::Equilibria => equilibria(cfg),
        Command::Invariance => invariance(cfg),
        Command::Export => export(cfg),
    }
}

/// Writes `manifest.txt` with the artifact list, the outcome and the resolved config.
pub fn write_manifest(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<PathBuf> {
    let path = cfg.output_path("manifest.txt");
    let mut out = BufWriter::new(File::create(&path).map_err(|e| io_context(&path, e))?);
    writeln!(out, "[artifacts]")?;
    for a in &outcome.artifacts {
        let name = a
            .file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default();
        writeln!(out, "{name}")?;
    }
    writeln!(out, "\n[summary]")?;
    for s in &outcome.summary {
        writeln!(out, "{s}")?;
    }
    writeln!(out, "\n[status]")?;
    writeln!(out, "{}", if outcome.passed() { "pass" } else { "fail" })?;
    for f in &outcome.failures {
        writeln!(out, "failed: {f}")?;
    }
    writeln!(out, "\n[config]")?;
    write!(out, "{}", cfg.to_text())?;
    out.flush()?;
    Ok(path)
}

fn spectrum(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let entries = tcc_spectrum(cfg.max_freq)?;
    let mut out = o.create(cfg, "spectrum.csv")?;
    writeln!(out, "m,n,laplace,tcc")?;
    for e in &entries {
        writeln!(out, "{},{},{},{}", e.m, e.n, e.laplace, e.eigenvalue)?;
    }
    out.flush()?;
    let kernel = entries.iter().filter(|e| e.eigenvalue == 0.0).count();
    let negative = entries.iter().filter(|e| e.eigenvalue < 0.0).count();
    let gap = spectral_gap(&entries);
    o.summary.push(format!("kernel_dimension = {kernel}"));
    o.summary.push(format!(
        "mu1 = {}",
        gap.map_or("none".into(), |g| g.to_string())
    ));
    o.summary.push(format!("negative_eigenvalues = {negative}"));
    o.check(
        kernel == 8,
        format!("kernel dimension {kernel}, expected 8"),
    );
    o.check(negative == 0, format!("{negative} negative eigenvalues"));
    o.check(
        gap == Some(2.0),
        format!("spectral gap {gap:?}, expected 2"),
    );
    Ok(o)
}

struct ModeRow {
    name: &'static str,
    velocity: Vec<f64>,
    mean: Vec<f64>,
    velocity_ratio: f64,
    mean_ratio: f64,
}

fn linearize(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.grid_n)?;
    let rows: Vec<Result<ModeRow>> = map_items(BATTERY.to_vec(), cfg.parallel, |mode| {
        let phi = mode.field(&grid);
        let mut velocity = Vec::new();
        let mut mean = Vec::new();
        for h in STEP_SIZES {
            velocity.push(linearization_residual(&phi, h)?);
            mean.push(mean_curvature_derivative_check(&phi, h)?);
        }
        // measured multipliers, from the smallest step
        let h = STEP_SIZES[STEP_SIZES.len() - 1];
        let norm = phi.inner(&phi)?;
        let velocity_ratio = fd_velocity_derivative(&phi, h)?.inner(&phi)? / norm;
        let mean_ratio = fd_mean_curvature_derivative(&phi, h)?.inner(&phi)? / norm;
        Ok(ModeRow {
            name: mode.name,
            velocity,
            mean,
            velocity_ratio,
            mean_ratio,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let mut o = Outcome::default();
    let mut out = o.create(cfg, "linearize.csv")?;
    writeln!(out, "mode,h,velocity_residual,mean_curvature_residual")?;
    for r in &rows {
        for (k, h) in STEP_SIZES.iter().enumerate() {
            writeln!(
                out,
                "{},{:e},{:.6e},{:.6e}",
                r.name, h, r.velocity[k], r.mean[k]
            )?;
        }
    }
    out.flush()?;
    let mut out = o.create(cfg, "linearize_orders.csv")?;
    writeln!(
        out,
        "mode,velocity_order,mean_curvature_order,velocity_multiplier,mean_curvature_multiplier"
    )?;
    for r in &rows {
        // residuals at roundoff level carry no order information
        let vo = convergence_order(&STEP_SIZES, &r.velocity, 1e-11);
        let mo = convergence_order(&STEP_SIZES, &r.mean, 1e-11);
        let fmt = |x: Option<f64>| x.map_or("exact".to_string(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "{},{},{},{:.8},{:.8}",
            r.name,
            fmt(vo),
            fmt(mo),
            r.velocity_ratio,
            r.mean_ratio
        )?;
        o.check(
            vo.map_or(true, |v| v >= 0.9),
            format!("{}: velocity convergence order {}", r.name, fmt(vo)),
        );
        o.check(
            mo.map_or(true, |v| v >= 0.9),
            format!("{}: mean curvature convergence order {}", r.name, fmt(mo)),
        );
    }
    out.flush()?;
    for r in &rows {
        o.summary.push(format!(
            "{}: DG multiplier {:.6}, DH multiplier {:.6}",
            r.name, r.velocity_ratio, r.mean_ratio
        ));
    }
    Ok(o)
}

fn write_trajectory(o: &mut Outcome, cfg: &ExperimentConfig, traj: &FlowTrajectory) -> Result<()> {
    let mut out = o.create(cfg, "trajectory.csv")?;
    traj.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_field(o: &mut Outcome, cfg: &ExperimentConfig, name: &str, f: &ScalarField) -> Result<()> {
    let mut out = o.create(cfg, &format!("{name}.csv"))?;
    f.write_csv(&mut out)?;
    out.flush()?;
    if cfg.mesh {
        let geo = graph_geometry(f)?;
        let proj = Stereographic::new(S3Point::new([0.0, 0.0, 0.0, 1.0])?);
        let mut out = o.create(cfg, &format!("{name}.obj"))?;
        write_mesh(&geo, &proj, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn flow(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.grid_n)?;
    let rho0 = random_band_limited(&grid, cfg.seed, cfg.amplitude)?;
    let engine = FlowEngine::new(&grid, cfg.flow.clone())?;
    let mut o = Outcome::default();
    write_field(&mut o, cfg, "initial", &rho0)?;
    let traj = match engine.run(&rho0) {
        Ok(t) => t,
        Err(abort) => {
            write_trajectory(&mut o, cfg, &abort.partial)?;
            o.summary.push(format!(
                "aborted at step {} (t = {})",
                abort.step, abort.time
            ));
            o.failures.push(abort.to_string());
            return Ok(o);
        }
    };
    write_trajectory(&mut o, cfg, &traj)?;
    if let Some(last) = traj.terminal() {
        write_field(&mut o, cfg, "terminal", last)?;
    }
    let energy = *traj.energies.last().unwrap_or(&f64::NAN);
    let residual = *traj.residuals.last().unwrap_or(&f64::NAN);
    o.summary.push(format!("converged = {}", traj.converged));
    o.summary.push(format!("steps = {}", traj.steps));
    o.summary
        .push(format!("final_time = {}", traj.final_time()));
    o.summary.push(format!("final_residual = {residual:e}"));
    o.summary.push(format!("final_energy = {energy:.15}"));
    o.summary
        .push(format!("energy_minus_2pi2 = {:e}", energy - WILLMORE_CC));
    if traj.energies.len() > 1 {
        o.summary.push(format!(
            "max_energy_increase = {:e}",
            traj.max_energy_increase()
        ));
    }
    match final_decade_window(&traj).map(|w| (w, decay_rate(&traj, w))) {
        Some((w, Ok(rate))) => {
            o.summary.push(format!("decay_window = [{}, {}]", w.0, w.1));
            o.summary.push(format!("decay_rate = {rate:.6}"));
        }
        _ => o.summary.push("decay_rate = unavailable".into()),
    }
    o.check(
        traj.converged,
        format!("not converged by t = {}", traj.final_time()),
    );
    if cfg.amplitude > 0.0 {
        o.check(
            (energy - WILLMORE_CC).abs() <= 1e-4,
            format!("terminal energy off by {:e}", energy - WILLMORE_CC),
        );
    }
    Ok(o)
}

fn parameter_batch(cfg: &ExperimentConfig) -> Result<Vec<ConformalParams>> {
    match cfg.z {
        Some(z) => Ok(vec![z]),
        None => (0..cfg.samples as u64)
            .map(|k| random_conformal_params(cfg.seed.wrapping_add(k), cfg.z_norm))
            .collect(),
    }
}

fn format_z(z: &ConformalParams) -> String {
    z.coords()
        .iter()
        .map(|x| format!("{x:.6e}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn equilibria(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.grid_n)?;
    let batch = parameter_batch(cfg)?;
    let rows = map_items(batch, cfg.parallel, |z| {
        let report = equilibrium_distance_function(&z, &grid).and_then(|rho| {
            let geo = graph_geometry(&rho)?;
            let residual = wflab_core::flow::velocity(&rho)?.sup_norm();
            let split = project_center(&rho)?;
            Ok((
                residual,
                willmore_energy(&geo),
                split.center.l2_norm(),
                split.stable.l2_norm(),
                rho.sup_norm(),
            ))
        });
        (z, report)
    });

    let mut o = Outcome::default();
    let mut out = o.create(cfg, "equilibria.csv")?;
    writeln!(
        out,
        "z,norm,residual,energy_minus_2pi2,center_norm,stable_norm,sup_norm"
    )?;
    for (z, report) in &rows {
        match report {
            Ok((res, w, c, s, sup)) => {
                writeln!(
                    out,
                    "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                    format_z(z),
                    z.norm(),
                    res,
                    w - WILLMORE_CC,
                    c,
                    s,
                    sup
                )?;
                o.check(
                    *res <= 1e-6,
                    format!("residual {res:e} at z = {}", format_z(z)),
                );
                o.check(
                    (w - WILLMORE_CC).abs() <= 1e-6,
                    format!("energy off by {:e} at z = {}", w - WILLMORE_CC, format_z(z)),
                );
            }
            Err(e) => {
                writeln!(
                    out,
                    "{},{:.6e},error,error,error,error,error",
                    format_z(z),
                    z.norm()
                )?;
                o.failures.push(format!("z = {}: {e}", format_z(z)));
            }
        }
    }
    out.flush()?;

    let rank = df0_rank_check(cfg.eps_fd, &grid)?;
    let mut out = o.create(cfg, "df0_matrix.csv")?;
    writeln!(
        out,
        "row,{}",
        (1..=DIM)
            .map(|k| format!("z{k}"))
            .collect::<Vec<_>>()
            .join(",")
    )?;
    for r in 0..rank.matrix.nrows() {
        let row: Vec<String> = (0..DIM)
            .map(|c| format!("{:.10e}", rank.matrix[(r, c)]))
            .collect();
        writeln!(out, "Y{},{}", r + 1, row.join(","))?;
    }
    out.flush()?;
    let sv: Vec<String> = rank
        .singular_values
        .iter()
        .map(|s| format!("{s:.6e}"))
        .collect();
    o.summary.push(format!("samples = {}", rows.len()));
    o.summary.push(format!("rank = {}", rank.rank));
    o.summary
        .push(format!("singular_values = {}", sv.join(" ")));
    o.summary.push(format!(
        "column_norms_9_10 = {:e} {:e}",
        rank.column_norms[8], rank.column_norms[9]
    ));
    o.check(
        rank.rank == 8,
        format!(
            "rank {} of the conformal differential, expected 8",
            rank.rank
        ),
    );
    o.check(
        rank.column_norms[8] <= 1e-8 && rank.column_norms[9] <= 1e-8,
        "columns 9 and 10 do not vanish",
    );
    Ok(o)
}

fn invariance(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.grid_n)?;
    // (label, parameters, tolerance)
    let mut battery: Vec<(String, ConformalParams, f64)> =
        vec![("identity".into(), ConformalParams::zero(), 0.0)];
    for k in 4..DIM {
        battery.push((
            format!("rotation_{}", k + 1),
            ConformalParams::unit(k, 0.15)?,
            1e-10,
        ));
    }
    for k in 0..4 {
        battery.push((
            format!("parallel_{}", k + 1),
            ConformalParams::unit(k, 0.15)?,
            1e-6,
        ));
    }
    for k in 0..cfg.samples as u64 {
        let z = random_conformal_params(cfg.seed.wrapping_add(k), 0.15)?;
        battery.push((format!("mixed_{}", k + 1), z, 1e-6));
    }
    let rows = map_items(battery, cfg.parallel, |(label, z, tol)| {
        let dev = equilibrium_distance_function(&z, &grid)
            .and_then(|rho| graph_geometry(&rho))
            .map(|geo| willmore_energy(&geo) - WILLMORE_CC);
        (label, z, tol, dev)
    });

    let mut o = Outcome::default();
    let mut out = o.create(cfg, "invariance.csv")?;
    writeln!(out, "transformation,norm,energy_deviation,tolerance")?;
    for (label, z, tol, dev) in &rows {
        match dev {
            Ok(d) => {
                writeln!(out, "{label},{:.6e},{:.6e},{tol:e}", z.norm(), d)?;
                // the identity is exact; everything else within its tolerance
                o.check(
                    d.abs() <= *tol,
                    format!("{label}: deviation {d:e} above {tol:e}"),
                );
            }
            Err(e) => {
                writeln!(out, "{label},{:.6e},error,{tol:e}", z.norm())?;
                o.failures.push(format!("{label}: {e}"));
            }
        }
    }
    out.flush()?;

    // stereographic roundtrip on Clifford samples
    let proj = Stereographic::new(S3Point::new([0.0, 0.0, 0.0, 1.0])?);
    let mut worst = 0.0_f64;
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let p = clifford_point(grid.coord(i), grid.coord(j));
            let back = proj.inverse(proj.project(&p)?);
            worst = worst.max(p.distance(&back));
        }
    }
    o.summary.push(format!("transformations = {}", rows.len()));
    o.summary
        .push(format!("stereographic_roundtrip_error = {worst:e}"));
    o.check(
        worst <= 1e-12,
        format!("stereographic roundtrip error {worst:e}"),
    );
    Ok(o)
}

fn export(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = GridSpec::new(cfg.grid_n)?;
    let rho = if let Some(path) = &cfg.input {
        let file = File::open(path).map_err(|e| io_context(path, e))?;
        ScalarField::read_csv(BufReader::new(file))?
    } else if let Some(z) = &cfg.z {
        equilibrium_distance_function(z, &grid)?
    } else {
        random_band_limited(&grid, cfg.seed, cfg.amplitude)?
    };
    let geo = graph_geometry(&rho)?;
    let mut o = Outcome::default();
    let mut out = o.create(cfg, "field.csv")?;
    rho.write_csv(&mut out)?;
    out.flush()?;
    for (name, f) in [
        ("mean_curvature", &geo.mean),
        ("gauss_curvature", &geo.gauss),
        ("a0_squared", &geo.a0_sq),
    ] {
        let mut out = o.create(cfg, &format!("{name}.csv"))?;
        f.write_csv(&mut out)?;
        out.flush()?;
    }
    let proj = Stereographic::new(S3Point::new([0.0, 0.0, 0.0, 1.0])?);
    let mut out = o.create(cfg, "surface.obj")?;
    write_mesh(&geo, &proj, &mut out)?;
    out.flush()?;
    o.summary.push(format!("grid_n = {}", rho.grid().n()));
    o.summary
        .push(format!("willmore_energy = {:.15}", willmore_energy(&geo)));
    o.summary.push(format!("area = {:.15}", geo.total_area()));
    Ok(o)
}
