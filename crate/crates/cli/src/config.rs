//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use wflab_core::flow::{FlowConfig, FlowLaw};
use wflab_core::moebius::ConformalParams;
use wflab_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Linearize,
    Flow,
    Equilibria,
    Invariance,
    Export,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Spectrum,
        Command::Linearize,
        Command::Flow,
        Command::Equilibria,
        Command::Invariance,
        Command::Export,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Linearize => "linearize",
            Command::Flow => "flow",
            Command::Equilibria => "equilibria",
            Command::Invariance => "invariance",
            Command::Export => "export",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown command {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub grid_n: usize,
    pub seed: u64,
    pub amplitude: f64,
    pub output_dir: PathBuf,
    pub flow: FlowConfig,
    pub z: Option<ConformalParams>,
    /// Highest frequency listed by `spectrum`.
    pub max_freq: i64,
    /// Random parameter samples drawn by `equilibria` and `invariance`.
    pub samples: usize,
    /// Norm of randomly drawn conformal parameters.
    pub z_norm: f64,
    pub eps_fd: f64,
    /// Field CSV read by `export`.
    pub input: Option<PathBuf>,
    /// Also write meshes next to field snapshots.
    pub mesh: bool,
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            grid_n: 64,
            seed: 7,
            amplitude: 0.02,
            output_dir: PathBuf::from("wflab-out"),
            flow: FlowConfig::default(),
            z: None,
            max_freq: 8,
            samples: 5,
            z_norm: 0.1,
            eps_fd: 1e-4,
            input: None,
            mesh: false,
            parallel: false,
        }
    }

    /// Builds a config from `wflab <command> [--config file] [--key value ...]`.
    pub fn from_args<I: IntoIterator<Item = String>>(args: I) -> Result<Self> {
        let mut args = args.into_iter();
        let command = args
            .next()
            .ok_or_else(|| Error::Parse("missing command".into()))
            .and_then(|c| Command::parse(&c))?;
        let mut file = None;
        let mut overrides = Vec::new();
        while let Some(flag) = args.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::Parse(format!("expected --key, got {flag:?}")))?;
            let value = args
                .next()
                .ok_or_else(|| Error::Parse(format!("missing value for --{key}")))?;
            if key == "config" {
                file = Some(PathBuf::from(value));
            } else {
                overrides.push((key.replace('-', "_"), value));
            }
        }
        let mut cfg = Self::new(command);
        if let Some(path) = file {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            for (key, value) in parse_pairs(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Parse(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "command" => {
                let c = Command::parse(value)?;
                if c != self.command {
                    return Err(Error::Parse(format!(
                        "config file is for {value:?}, not {:?}",
                        self.command.name()
                    )));
                }
            }
            "grid_n" => self.grid_n = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "amplitude" => self.amplitude = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "dt" => self.flow.dt = num(key, value)?,
            "t_end" => self.flow.t_end = num(key, value)?,
            "residual_tol" => self.flow.residual_tol = num(key, value)?,
            "a0_floor" => self.flow.a0_floor = num(key, value)?,
            "record_every" => self.flow.record_every = num(key, value)?,
            "tube_radius" => self.flow.tube_radius = num(key, value)?,
            "energy_slack" => self.flow.energy_slack = num(key, value)?,
            "law" => {
                self.flow.law = match value {
                    "moebius" => FlowLaw::Moebius,
                    "classical" => FlowLaw::Classical,
                    _ => return Err(Error::Parse(format!("unknown law {value:?}"))),
                }
            }
            "z" => self.z = Some(ConformalParams::parse(value)?),
            "max_freq" => self.max_freq = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "z_norm" => self.z_norm = num(key, value)?,
            "eps_fd" => self.eps_fd = num(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "mesh" => self.mesh = parse_bool(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            _ => return Err(Error::Parse(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        wflab_core::spectral::GridSpec::new(self.grid_n)?;
        self.flow.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.amplitude >= 0.0 && self.amplitude < self.flow.tube_radius) {
            return bad(format!(
                "amplitude {} must lie in [0, {})",
                self.amplitude, self.flow.tube_radius
            ));
        }
        if self.max_freq < 1 {
            return bad("max_freq must be at least 1".into());
        }
        if !(self.z_norm > 0.0 && self.z_norm <= wflab_core::moebius::MAX_GRAPH_PARAM) {
            return bad(format!("z_norm {} must lie in (0, 0.2]", self.z_norm));
        }
        if let Some(z) = &self.z {
            if z.norm() > wflab_core::moebius::MAX_GRAPH_PARAM {
                return bad(format!("|z| = {} exceeds 0.2", z.norm()));
            }
        }
        if !(self.eps_fd > 0.0 && self.eps_fd <= 1e-2) {
            return bad(format!("eps_fd {} must lie in (0, 1e-2]", self.eps_fd));
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        Ok(())
    }

    /// Resolved configuration as `key = value` lines, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = &self.flow;
        let law = match f.law {
            FlowLaw::Moebius => "moebius",
            FlowLaw::Classical => "classical",
        };
        let z = self.z.map(|z| {
            z.coords()
                .iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(",")
        });
        let rows: Vec<(&str, String)> = vec![
            ("command", self.command.name().into()),
            ("grid_n", self.grid_n.to_string()),
            ("seed", self.seed.to_string()),
            ("amplitude", format!("{:e}", self.amplitude)),
            ("output_dir", self.output_dir.display().to_string()),
            ("dt", format!("{:e}", f.dt)),
            ("t_end", format!("{:e}", f.t_end)),
            ("residual_tol", format!("{:e}", f.residual_tol)),
            ("a0_floor", format!("{:e}", f.a0_floor)),
            ("record_every", f.record_every.to_string()),
            ("tube_radius", format!("{:e}", f.tube_radius)),
            ("energy_slack", format!("{:e}", f.energy_slack)),
            ("law", law.into()),
            ("z", z.unwrap_or_else(|| "none".into())),
            ("max_freq", self.max_freq.to_string()),
            ("samples", self.samples.to_string()),
            ("z_norm", format!("{:e}", self.z_norm)),
            ("eps_fd", format!("{:e}", self.eps_fd)),
            (
                "input",
                self.input
                    .as_deref()
                    .map_or_else(|| "none".into(), |p| p.display().to_string()),
            ),
            ("mesh", self.mesh.to_string()),
            ("parallel", self.parallel.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse(format!("invalid boolean {value:?} for {key}"))),
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// The values `none` and empty leave the key unset.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
        }
        if out.contains_key(k) {
            return Err(Error::Parse(format!(
                "line {}: duplicate key {k:?}",
                lineno + 1
            )));
        }
        if v.is_empty() || v == "none" {
            continue;
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_args(args("flow --grid_n 32 --dt 5e-4 --law classical"))
            .unwrap();
        assert_eq!(cfg.command, Command::Flow);
        assert_eq!(cfg.grid_n, 32);
        assert_eq!(cfg.flow.dt, 5e-4);
        assert_eq!(cfg.flow.law, FlowLaw::Classical);
        assert_eq!(cfg.seed, 7);
        let cfg = ExperimentConfig::from_args(args("spectrum --max-freq 3")).unwrap();
        assert_eq!(cfg.max_freq, 3);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "",
            "bogus",
            "flow --grid_n",
            "flow grid_n 32",
            "flow --grid_n 31",
            "flow --dt 0.1",
            "flow --unknown 1",
            "flow --amplitude 0.5",
            "equilibria --z 0.3,0,0,0,0,0,0,0,0,0",
            "flow --mesh maybe",
        ] {
            assert!(ExperimentConfig::from_args(args(bad)).is_err(), "{bad}");
        }
    }

    #[test]
    fn pairs_parse_with_comments() {
        let text = "# experiment\ngrid_n = 48  # comment\n\nz = none\nseed=3\n";
        let pairs = parse_pairs(text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs["grid_n"], "48");
        assert!(parse_pairs("a = 1\na = 2").is_err());
        assert!(parse_pairs("novalue").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = ExperimentConfig::new(Command::Equilibria);
        cfg.z = Some(ConformalParams::unit(2, 0.05).unwrap());
        cfg.mesh = true;
        let text = cfg.to_text();
        let mut back = ExperimentConfig::new(Command::Equilibria);
        for (k, v) in parse_pairs(&text).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }
}
