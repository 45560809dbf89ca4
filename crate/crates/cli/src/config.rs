//! Experiment configuration: `key=value` text, one setting per line.

use std::fmt;
use std::path::{Path, PathBuf};

use manywalk::{Amplitudes, Complex64, Configuration, FermionRule, Lattice, Statistics};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PARTICLES: usize = 5;
pub const DEFAULT_STEPS: u64 = 200;
pub const DEFAULT_PRUNE_EPS: f64 = 1e-12;
pub const DEFAULT_CHECKPOINT_EVERY: u64 = 10;
pub const DEFAULT_OUTPUT_DIR: &str = "manywalk-out";

#[derive(Debug, Error, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.msg),
            None => write!(f, "{}: {}", self.key, self.msg),
        }
    }
}

fn err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `grid<M>`, `lattice2`, or a path to a lattice file.
    pub lattice: String,
    pub particles: usize,
    pub statistics: Statistics,
    pub initial_vertex: usize,
    /// `[re, im]` per chirality, normalised when the state is built.
    pub coin_amps: [[f64; 2]; 4],
    pub steps: u64,
    pub observe_every: u64,
    pub prune_eps: f64,
    pub fermion_rule: FermionRule,
    pub tracked_configuration: Option<Vec<u8>>,
    pub counting_n: Option<Vec<usize>>,
    pub output_dir: PathBuf,
    /// 0 writes a checkpoint only at the final step.
    pub checkpoint_every: u64,
    pub deterministic: bool,
    pub threads: Option<usize>,
}

/// A config under construction: `lattice` and `statistics` have no default.
#[derive(Debug, Clone)]
pub struct ConfigBuilder {
    lattice: Option<String>,
    statistics: Option<Statistics>,
    rest: ExperimentConfig,
    /// Keys read from text, with their line numbers.
    seen: Vec<(String, usize)>,
}

impl Default for ConfigBuilder {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ConfigBuilder {
            lattice: None,
            statistics: None,
            seen: Vec::new(),
            rest: ExperimentConfig {
                lattice: String::new(),
                particles: DEFAULT_PARTICLES,
                statistics: Statistics::Boson,
                initial_vertex: 1,
                coin_amps: [[0.0, 0.0], [h, 0.0], [h, 0.0], [0.0, 0.0]],
                steps: DEFAULT_STEPS,
                observe_every: 1,
                prune_eps: DEFAULT_PRUNE_EPS,
                fermion_rule: FermionRule::Equal,
                tracked_configuration: None,
                counting_n: None,
                output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
                checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
                deterministic: false,
                threads: None,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| err(key, format!("cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(key, format!("expected true or false, got {value:?}"))),
    }
}

/// `re,im;re,im;re,im;re,im`.
pub fn parse_coin_amps(value: &str) -> Result<[[f64; 2]; 4], ConfigError> {
    let parts: Vec<&str> = value.split(';').collect();
    if parts.len() != 4 {
        return Err(err(
            "coin_amps",
            format!("expected 4 re,im pairs, found {}", parts.len()),
        ));
    }
    let mut out = [[0.0; 2]; 4];
    for (slot, part) in out.iter_mut().zip(parts) {
        let nums: Vec<f64> = parse_list("coin_amps", part)?;
        if nums.len() != 2 {
            return Err(err("coin_amps", format!("{part:?} is not a re,im pair")));
        }
        *slot = [nums[0], nums[1]];
    }
    Ok(out)
}

impl ConfigBuilder {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let r = &mut self.rest;
        match key {
            "lattice" => {
                if value.is_empty() {
                    return Err(err(key, "empty value"));
                }
                self.lattice = Some(value.to_string());
            }
            "particles" => r.particles = parse_num(key, value)?,
            "statistics" => self.statistics = Some(value.parse().map_err(|e: String| err(key, e))?),
            "initial_vertex" => r.initial_vertex = parse_num(key, value)?,
            "coin_amps" => r.coin_amps = parse_coin_amps(value)?,
            "steps" => r.steps = parse_num(key, value)?,
            "observe_every" => r.observe_every = parse_num(key, value)?,
            "prune_eps" => r.prune_eps = parse_num(key, value)?,
            "fermion_rule" => r.fermion_rule = value.parse().map_err(|e: String| err(key, e))?,
            "tracked_configuration" => r.tracked_configuration = Some(parse_list(key, value)?),
            "counting_n" => r.counting_n = Some(parse_list(key, value)?),
            "output_dir" => r.output_dir = PathBuf::from(value),
            "checkpoint_every" => r.checkpoint_every = parse_num(key, value)?,
            "deterministic" => r.deterministic = parse_bool(key, value)?,
            "threads" => r.threads = Some(parse_num(key, value)?),
            _ => return Err(err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn build(self) -> Result<ExperimentConfig, ConfigError> {
        let seen = self.seen;
        let at_line = |e: ConfigError| {
            let line = seen.iter().find(|(k, _)| *k == e.key).map(|(_, l)| *l);
            ConfigError { line, ..e }
        };
        let mut cfg = self.rest;
        cfg.lattice = self.lattice.ok_or_else(|| err("lattice", "required"))?;
        cfg.statistics = self
            .statistics
            .ok_or_else(|| err("statistics", "required"))?;
        cfg.validate().map_err(at_line)?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn builder() -> ConfigBuilder {
        ConfigBuilder::default()
    }

    /// Checks the invariants that do not need the lattice.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.particles == 0 || self.particles > u8::MAX as usize {
            return Err(err("particles", "must be in 1..=255"));
        }
        if self.steps == 0 {
            return Err(err("steps", "must be at least 1"));
        }
        if self.observe_every == 0 {
            return Err(err("observe_every", "must be at least 1"));
        }
        if !(self.prune_eps >= 0.0 && self.prune_eps.is_finite()) {
            return Err(err("prune_eps", "must be a finite value >= 0"));
        }
        if self.coin_amps.iter().flatten().any(|x| !x.is_finite()) {
            return Err(err("coin_amps", "must be finite"));
        }
        if self.coin_amps.iter().flatten().all(|&x| x == 0.0) {
            return Err(err("coin_amps", "must not all be zero"));
        }
        if self.initial_vertex == 0 {
            return Err(err("initial_vertex", "vertices are numbered from 1"));
        }
        if let Some(t) = &self.tracked_configuration {
            let total: usize = t.iter().map(|&n| n as usize).sum();
            if total != self.particles {
                return Err(err(
                    "tracked_configuration",
                    format!("holds {total} particles, expected {}", self.particles),
                ));
            }
        }
        if let Some(ns) = &self.counting_n {
            if ns.iter().any(|&n| n > self.particles) {
                return Err(err(
                    "counting_n",
                    format!("values must not exceed {}", self.particles),
                ));
            }
        }
        if self.threads == Some(0) {
            return Err(err("threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn coin_amplitudes(&self) -> Amplitudes {
        self.coin_amps.map(|[re, im]| Complex64::new(re, im))
    }

    /// Resolves the lattice name or path.
    pub fn load_lattice(&self) -> Result<Lattice, ConfigError> {
        resolve_lattice(&self.lattice)
    }

    /// Cross-checks settings against the lattice.
    pub fn validate_against(&self, lattice: &Lattice) -> Result<(), ConfigError> {
        let vc = lattice.vertex_count();
        if self.initial_vertex > vc {
            return Err(err("initial_vertex", format!("outside 1..={vc}")));
        }
        if let Some(t) = &self.tracked_configuration {
            if t.len() != vc {
                return Err(err(
                    "tracked_configuration",
                    format!("needs {vc} occupations, found {}", t.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn tracked(&self) -> Option<Configuration> {
        self.tracked_configuration
            .as_deref()
            .map(Configuration::new)
    }

    /// The config as `key=value` lines that parse back to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        line("lattice", self.lattice.clone());
        line("particles", self.particles.to_string());
        line("statistics", self.statistics.to_string());
        line("initial_vertex", self.initial_vertex.to_string());
        let amps: Vec<String> = self
            .coin_amps
            .iter()
            .map(|[re, im]| format!("{re:e},{im:e}"))
            .collect();
        line("coin_amps", amps.join(";"));
        line("steps", self.steps.to_string());
        line("observe_every", self.observe_every.to_string());
        line("prune_eps", format!("{:e}", self.prune_eps));
        line("fermion_rule", self.fermion_rule.to_string());
        if let Some(t) = &self.tracked_configuration {
            line("tracked_configuration", join(t));
        }
        if let Some(ns) = &self.counting_n {
            line("counting_n", join(ns));
        }
        line("output_dir", self.output_dir.display().to_string());
        line("checkpoint_every", self.checkpoint_every.to_string());
        line("deterministic", self.deterministic.to_string());
        if let Some(t) = self.threads {
            line("threads", t.to_string());
        }
        s
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ConfigBuilder {
    /// Applies `key=value` lines; `#` starts a comment. A key may appear once.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line_no),
                    key: line.to_string(),
                    msg: "expected key=value".into(),
                });
            };
            let key = key.trim();
            if let Some((_, first)) = self.seen.iter().find(|(k, _)| k == key) {
                return Err(ConfigError {
                    line: Some(line_no),
                    key: key.to_string(),
                    msg: format!("already set on line {first}"),
                });
            }
            self.set(key, value).map_err(|e| ConfigError {
                line: Some(line_no),
                ..e
            })?;
            self.seen.push((key.to_string(), line_no));
        }
        Ok(())
    }
}

/// Parses a complete config text and applies defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut builder = ConfigBuilder::default();
    builder.apply_text(text)?;
    builder.build()
}

pub fn resolve_lattice(name: &str) -> Result<Lattice, ConfigError> {
    if name == "lattice2" {
        return Ok(Lattice::lattice2());
    }
    if let Some(side) = name
        .strip_prefix("grid")
        .and_then(|s| s.parse::<usize>().ok())
    {
        if side == 0 {
            return Err(err("lattice", "grid side must be at least 1"));
        }
        return Ok(Lattice::full_grid(side));
    }
    let path = Path::new(name);
    let text = std::fs::read_to_string(path)
        .map_err(|e| err("lattice", format!("{}: {e}", path.display())))?;
    text.parse()
        .map_err(|e| err("lattice", format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("lattice=grid5\nstatistics=boson").unwrap();
        assert_eq!(cfg.particles, 5);
        assert_eq!(cfg.steps, 200);
        assert_eq!(cfg.observe_every, 1);
        assert_eq!(cfg.prune_eps, 1e-12);
        assert_eq!(cfg.fermion_rule, FermionRule::Equal);
        assert_eq!(
            cfg.coin_amps,
            [
                [0.0, 0.0],
                [std::f64::consts::FRAC_1_SQRT_2, 0.0],
                [std::f64::consts::FRAC_1_SQRT_2, 0.0],
                [0.0, 0.0]
            ]
        );
        assert_eq!(cfg.initial_vertex, 1);
        assert!(cfg.tracked_configuration.is_none());
    }

    #[test]
    fn zero_steps_rejected() {
        let e = parse_config("lattice=grid5\nstatistics=boson\nsteps=0").unwrap_err();
        assert_eq!(e.key, "steps");
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn coin_amps_pairs() {
        let cfg =
            parse_config("lattice=grid5\nstatistics=fermion\ncoin_amps=0,0;1,0;1,0;0,0").unwrap();
        assert_eq!(
            cfg.coin_amps,
            [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]
        );
        let e =
            parse_config("lattice=grid5\nstatistics=boson\ncoin_amps=0,0;0,0;0,0;0,0").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("coin_amps", Some(3)));
        assert!(parse_config("lattice=grid5\nstatistics=boson\ncoin_amps=1,0;1,0").is_err());
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = parse_config("# header\nlattice=grid5\nstatistics=boson\ncolour=red").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("colour", Some(4)));
        assert!(e.to_string().contains("line 4"));
        let e = parse_config("lattice=grid5\nstatistics=boson\nparticles=five").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("particles", Some(3)));
        let e = parse_config("statistics=boson").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("lattice", None));
        let e = parse_config("lattice=grid5\nstatistics=anyon").unwrap_err();
        assert_eq!(e.key, "statistics");
        let e = parse_config("lattice=grid5\nlattice=grid3\nstatistics=boson").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse_config("lattice=grid5\nstatistics=boson\nprune_eps=-1").unwrap_err();
        assert_eq!((e.key.as_str(), e.line), ("prune_eps", Some(3)));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config(
            "\n# run\nlattice = lattice2 # builtin\n\nstatistics = fermion\nfermion_rule=geq\n",
        )
        .unwrap();
        assert_eq!(cfg.lattice, "lattice2");
        assert_eq!(cfg.fermion_rule, FermionRule::Geq);
    }

    #[test]
    fn text_round_trip() {
        let cfg = parse_config(
            "lattice=grid3\nstatistics=fermion\nparticles=2\ntracked_configuration=2,0,0,0,0,0,0,0,0\n\
             counting_n=1,2\nthreads=2\ndeterministic=true\ncoin_amps=0.1,0.2;0.3,-0.4;0,0;1e-3,0",
        )
        .unwrap();
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn lattice_names() {
        assert_eq!(resolve_lattice("grid5").unwrap().vertex_count(), 25);
        assert_eq!(resolve_lattice("lattice2").unwrap(), Lattice::lattice2());
        assert!(resolve_lattice("grid0").is_err());
        assert!(resolve_lattice("/nonexistent/file.lat").is_err());
    }

    #[test]
    fn cross_checks() {
        let cfg =
            parse_config("lattice=grid2\nstatistics=boson\nparticles=1\ninitial_vertex=5").unwrap();
        let lattice = cfg.load_lattice().unwrap();
        assert_eq!(
            cfg.validate_against(&lattice).unwrap_err().key,
            "initial_vertex"
        );
    }
}
