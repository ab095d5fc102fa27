use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wflab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wflab"))
        .args(args)
        .arg("--output_dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest_status(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    let mut lines = text.lines().skip_while(|l| *l != "[status]");
    lines.nth(1).unwrap().to_string()
}

#[test]
fn spectrum_reports_kernel_and_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(tmp.path(), &["spectrum"]);
    assert!(out.status.success());
    let s = stdout(&out);
    assert!(s.contains("kernel_dimension = 8"));
    assert!(s.contains("mu1 = 2"));
    let csv = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("m,n,laplace,tcc"));
    for line in lines {
        let tcc: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(tcc >= 0.0);
    }
    assert_eq!(manifest_status(tmp.path()), "pass");
}

#[test]
fn spectrum_at_lowest_frequency() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(tmp.path(), &["spectrum", "--max_freq", "1"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<i64> = line
            .split(',')
            .take(2)
            .map(|x| x.parse().unwrap())
            .collect();
        let zero = line.ends_with(",0");
        assert_eq!(
            zero,
            (1..=2).contains(&(f[0] * f[0] + f[1] * f[1])),
            "{line}"
        );
    }
}

#[test]
fn flow_from_zero_is_immediately_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(tmp.path(), &["flow", "--grid_n", "24", "--amplitude", "0"]);
    assert!(out.status.success());
    let s = stdout(&out);
    assert!(s.contains("converged = true"));
    assert!(s.contains("steps = 0"));
}

#[test]
fn flow_is_deterministic_and_converges() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "flow",
        "--grid_n",
        "24",
        "--amplitude",
        "0.02",
        "--seed",
        "7",
        "--record_every",
        "100",
    ];
    let oa = wflab(a.path(), &args);
    let ob = wflab(b.path(), &args);
    assert!(
        oa.status.success(),
        "{}",
        String::from_utf8_lossy(&oa.stderr)
    );
    assert!(ob.status.success());
    for name in ["trajectory.csv", "terminal.csv", "initial.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
    let s = stdout(&oa);
    let energy: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("energy_minus_2pi2 = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(energy.abs() < 1e-4);
    let traj = fs::read_to_string(a.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,energy,residual,center_norm,stable_norm\n"));
}

#[test]
fn large_flow_amplitude_is_a_reported_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(
        tmp.path(),
        &["flow", "--grid_n", "24", "--amplitude", "0.2"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aborted at step"));
    assert!(tmp.path().join("trajectory.csv").exists());
    assert_eq!(manifest_status(tmp.path()), "fail");
}

#[test]
fn equilibria_at_zero_and_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(
        tmp.path(),
        &["equilibria", "--grid_n", "24", "--z", "0,0,0,0,0,0,0,0,0,0"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("rank = 8"));
    let csv = fs::read_to_string(tmp.path().join("equilibria.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    for value in &row[2..] {
        assert!(value.parse::<f64>().unwrap().abs() < 1e-12, "{value}");
    }
}

#[test]
fn invariance_battery_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(
        tmp.path(),
        &["invariance", "--grid_n", "24", "--samples", "2"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("invariance.csv")).unwrap();
    assert!(csv.contains("identity,0.000000e0,0.000000e0"));
}

#[test]
fn linearize_reports_measured_multipliers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wflab(
        tmp.path(),
        &["linearize", "--grid_n", "24", "--parallel", "true"],
    );
    // the stable modes do not converge to -T_CC, so the order check fails
    assert_eq!(out.status.code(), Some(1));
    let orders = fs::read_to_string(tmp.path().join("linearize_orders.csv")).unwrap();
    let one = orders.lines().find(|l| l.starts_with("1,")).unwrap();
    let multiplier: f64 = one.split(',').nth(3).unwrap().parse().unwrap();
    assert!((multiplier + 1.0).abs() < 1e-4);
    let table = fs::read_to_string(tmp.path().join("linearize.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 13 * 3);
}

#[test]
fn export_with_config_file_and_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("export.cfg");
    fs::write(
        &cfg,
        "# surface export\ngrid_n = 16\nz = 0.05,0,0,0,0,0,0.03,0,0,0\n",
    )
    .unwrap();
    let first = tmp.path().join("first");
    let out = Command::new(env!("CARGO_BIN_EXE_wflab"))
        .args(["export", "--config"])
        .arg(&cfg)
        .arg("--output_dir")
        .arg(&first)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mesh = fs::read_to_string(first.join("surface.obj")).unwrap();
    assert_eq!(mesh.lines().filter(|l| l.starts_with("v ")).count(), 256);
    assert_eq!(mesh.lines().filter(|l| l.starts_with("f ")).count(), 512);

    let second = tmp.path().join("second");
    let field = first.join("field.csv");
    let out = wflab(&second, &["export", "--input", field.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(
        fs::read(&field).unwrap(),
        fs::read(second.join("field.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["bogus"][..],
        &["flow", "--grid_n", "31"],
        &["flow", "--nope", "1"],
    ] {
        let out = wflab(tmp.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}
