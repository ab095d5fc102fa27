use std::process::ExitCode;

use wflab::{run, write_manifest, ExperimentConfig};

const USAGE: &str = "usage: wflab <spectrum|linearize|flow|equilibria|invariance|export> [--config file] [--key value ...]";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        println!("{USAGE}");
        return if args.is_empty() {
            ExitCode::from(2)
        } else {
            ExitCode::SUCCESS
        };
    }
    let cfg = match ExperimentConfig::from_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("wflab: {e}\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("wflab {}: {e}", cfg.command.name());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_manifest(&cfg, &outcome) {
        eprintln!("wflab: writing manifest: {e}");
        return ExitCode::from(2);
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.failures {
        eprintln!("FAILED: {f}");
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
