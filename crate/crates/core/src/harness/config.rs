//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys outside any section are top-level (`seed`). Inside `[run]`, the key
//! `gamma` is addressed as `run.gamma`. `#` starts a comment.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::graph::Preset;
use crate::problems::{Normalization, ObjectiveKind, OracleMode, Skew};
use crate::sim::{Algorithm, Blackout, ScheduleKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Fixed(f64),
    /// Largest stable value from a halving sweep starting at `1/(2 C_L)`.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub algorithm: Algorithm,
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<String>,

    pub topology: Preset,
    pub n: usize,
    /// Explicit `a>b` edge lists; when both are set they replace the preset.
    pub gw_edges: Option<String>,
    pub ga_edges: Option<String>,

    pub kind: ObjectiveKind,
    pub lambda: f64,
    pub normalize: Normalization,
    /// Dimension of quadratic objectives.
    pub quad_dim: usize,
    pub center_scale: f64,

    /// Directory holding IDX files; `None` selects the synthetic generator.
    pub data_path: Option<PathBuf>,
    pub classes: (u8, u8),
    pub data_limit: Option<usize>,
    pub samples: usize,
    pub data_dim: usize,
    pub separation: f64,
    pub skew: Skew,

    pub noise_mode: String,
    pub sigma: f64,
    pub batch: usize,

    pub schedule_kind: String,
    /// 0 selects `2n`.
    pub t_window: usize,
    pub slow: usize,
    pub factor: f64,

    pub d_max: usize,
    pub barrier: bool,
    pub p_drop: f64,
    pub max_consecutive: usize,
    pub blackout: Option<Blackout>,

    pub k_max: usize,
    pub gamma: Gamma,
    pub auto_steps: usize,
    pub stop_gap: Option<f64>,
    pub stop_merit: Option<f64>,
    pub stop_loss: Option<f64>,

    pub every: usize,
    pub tracking: bool,

    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "custom".into(),
            algorithm: Algorithm::RFast,
            sweep_param: None,
            sweep_values: Vec::new(),
            topology: Preset::DirectedRing,
            n: 5,
            gw_edges: None,
            ga_edges: None,
            kind: ObjectiveKind::Quadratic,
            lambda: 1e-2,
            normalize: Normalization::Mean,
            quad_dim: 5,
            center_scale: 1.0,
            data_path: None,
            classes: (0, 1),
            data_limit: None,
            samples: 1000,
            data_dim: 10,
            separation: 2.0,
            skew: Skew::Iid,
            noise_mode: "gaussian".into(),
            sigma: 0.0,
            batch: 32,
            schedule_kind: "random_fair".into(),
            t_window: 0,
            slow: 0,
            factor: 5.0,
            d_max: 0,
            barrier: false,
            p_drop: 0.0,
            max_consecutive: 10,
            blackout: None,
            k_max: 10_000,
            gamma: Gamma::Fixed(0.05),
            auto_steps: 3000,
            stop_gap: None,
            stop_merit: None,
            stop_loss: None,
            every: 10,
            tracking: false,
            seed: 1,
        }
    }
}

fn cfg_err(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = `{value}`: {what}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(key, v, "not a valid number"))
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v.is_empty() || v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(key, v, "expected true or false")),
    }
}

fn opt_str(o: &Option<f64>) -> String {
    o.map_or_else(|| "none".into(), |v| v.to_string())
}

fn parse_blackout(key: &str, v: &str) -> Result<Option<Blackout>> {
    if v.is_empty() || v == "none" {
        return Ok(None);
    }
    // from>to@start..end
    let bad = || cfg_err(key, v, "expected from>to@start..end");
    let (edge, range) = v.split_once('@').ok_or_else(bad)?;
    let (from, to) = edge.split_once('>').ok_or_else(bad)?;
    let (start, end) = range.split_once("..").ok_or_else(bad)?;
    Ok(Some(Blackout {
        from: from.trim().parse().map_err(|_| bad())?,
        to: to.trim().parse().map_err(|_| bad())?,
        start: start.trim().parse().map_err(|_| bad())?,
        end: end.trim().parse().map_err(|_| bad())?,
    }))
}

/// All keys in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "experiment.preset",
    "experiment.algorithm",
    "experiment.sweep_param",
    "experiment.sweep_values",
    "topology.preset",
    "topology.n",
    "topology.gw",
    "topology.ga",
    "problem.kind",
    "problem.lambda",
    "problem.normalize",
    "problem.dim",
    "problem.center_scale",
    "data.path",
    "data.classes",
    "data.limit",
    "data.samples",
    "data.dim",
    "data.separation",
    "partition.skew",
    "noise.mode",
    "noise.sigma",
    "noise.batch",
    "schedule.kind",
    "schedule.t_window",
    "schedule.slow",
    "schedule.factor",
    "delay.d_max",
    "delay.barrier",
    "loss.p_drop",
    "loss.max_consecutive",
    "loss.blackout",
    "run.k_max",
    "run.gamma",
    "run.auto_steps",
    "run.stop_gap",
    "run.stop_merit",
    "run.stop_loss",
    "metrics.every",
    "metrics.tracking",
];

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "experiment.preset" => self.preset = v.to_string(),
            "experiment.algorithm" => self.algorithm = v.parse()?,
            "experiment.sweep_param" => {
                self.sweep_param = (!v.is_empty() && v != "none").then(|| v.to_string())
            }
            "experiment.sweep_values" => {
                self.sweep_values = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "topology.preset" => self.topology = v.parse()?,
            "topology.n" => self.n = num(key, v)?,
            "topology.gw" => self.gw_edges = (!v.is_empty() && v != "none").then(|| v.to_string()),
            "topology.ga" => self.ga_edges = (!v.is_empty() && v != "none").then(|| v.to_string()),
            "problem.kind" => self.kind = v.parse()?,
            "problem.lambda" => self.lambda = num(key, v)?,
            "problem.normalize" => self.normalize = v.parse()?,
            "problem.dim" => self.quad_dim = num(key, v)?,
            "problem.center_scale" => self.center_scale = num(key, v)?,
            "data.path" => {
                self.data_path =
                    (!v.is_empty() && v != "none" && v != "synthetic").then(|| PathBuf::from(v))
            }
            "data.classes" => {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| cfg_err(key, v, "expected two labels like 0,1"))?;
                self.classes = (num(key, a.trim())?, num(key, b.trim())?);
            }
            "data.limit" => {
                self.data_limit = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "data.samples" => self.samples = num(key, v)?,
            "data.dim" => self.data_dim = num(key, v)?,
            "data.separation" => self.separation = num(key, v)?,
            "partition.skew" => self.skew = v.parse()?,
            "noise.mode" => {
                if !matches!(v, "full" | "gaussian" | "minibatch") {
                    return Err(cfg_err(key, v, "expected full, gaussian or minibatch"));
                }
                self.noise_mode = v.to_string()
            }
            "noise.sigma" => self.sigma = num(key, v)?,
            "noise.batch" => self.batch = num(key, v)?,
            "schedule.kind" => {
                if !matches!(v, "round_robin" | "random_fair" | "straggler") {
                    return Err(cfg_err(
                        key,
                        v,
                        "expected round_robin, random_fair or straggler",
                    ));
                }
                self.schedule_kind = v.to_string()
            }
            "schedule.t_window" => self.t_window = num(key, v)?,
            "schedule.slow" => self.slow = num(key, v)?,
            "schedule.factor" => self.factor = num(key, v)?,
            "delay.d_max" => self.d_max = num(key, v)?,
            "delay.barrier" => self.barrier = boolean(key, v)?,
            "loss.p_drop" => self.p_drop = num(key, v)?,
            "loss.max_consecutive" => self.max_consecutive = num(key, v)?,
            "loss.blackout" => self.blackout = parse_blackout(key, v)?,
            "run.k_max" => self.k_max = num(key, v)?,
            "run.gamma" => {
                self.gamma = if v == "auto" {
                    Gamma::Auto
                } else {
                    Gamma::Fixed(num(key, v)?)
                }
            }
            "run.auto_steps" => self.auto_steps = num(key, v)?,
            "run.stop_gap" => self.stop_gap = opt_num(key, v)?,
            "run.stop_merit" => self.stop_merit = opt_num(key, v)?,
            "run.stop_loss" => self.stop_loss = opt_num(key, v)?,
            "metrics.every" => self.every = num(key, v)?,
            "metrics.tracking" => self.tracking = boolean(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "experiment.preset" => self.preset.clone(),
            "experiment.algorithm" => self.algorithm.to_string(),
            "experiment.sweep_param" => self.sweep_param.clone().unwrap_or_else(|| "none".into()),
            "experiment.sweep_values" => self.sweep_values.join(","),
            "topology.preset" => self.topology.name().into(),
            "topology.n" => self.n.to_string(),
            "topology.gw" => self.gw_edges.clone().unwrap_or_else(|| "none".into()),
            "topology.ga" => self.ga_edges.clone().unwrap_or_else(|| "none".into()),
            "problem.kind" => self.kind.name().into(),
            "problem.lambda" => self.lambda.to_string(),
            "problem.normalize" => self.normalize.to_string(),
            "problem.dim" => self.quad_dim.to_string(),
            "problem.center_scale" => self.center_scale.to_string(),
            "data.path" => self
                .data_path
                .as_ref()
                .map_or_else(|| "synthetic".into(), |p| p.display().to_string()),
            "data.classes" => format!("{},{}", self.classes.0, self.classes.1),
            "data.limit" => self
                .data_limit
                .map_or_else(|| "none".into(), |l| l.to_string()),
            "data.samples" => self.samples.to_string(),
            "data.dim" => self.data_dim.to_string(),
            "data.separation" => self.separation.to_string(),
            "partition.skew" => self.skew.to_string(),
            "noise.mode" => self.noise_mode.clone(),
            "noise.sigma" => self.sigma.to_string(),
            "noise.batch" => self.batch.to_string(),
            "schedule.kind" => self.schedule_kind.clone(),
            "schedule.t_window" => self.t_window.to_string(),
            "schedule.slow" => self.slow.to_string(),
            "schedule.factor" => self.factor.to_string(),
            "delay.d_max" => self.d_max.to_string(),
            "delay.barrier" => self.barrier.to_string(),
            "loss.p_drop" => self.p_drop.to_string(),
            "loss.max_consecutive" => self.max_consecutive.to_string(),
            "loss.blackout" => self.blackout.map_or_else(
                || "none".into(),
                |b| format!("{}>{}@{}..{}", b.from, b.to, b.start, b.end),
            ),
            "run.k_max" => self.k_max.to_string(),
            "run.gamma" => match self.gamma {
                Gamma::Auto => "auto".into(),
                Gamma::Fixed(g) => g.to_string(),
            },
            "run.auto_steps" => self.auto_steps.to_string(),
            "run.stop_gap" => opt_str(&self.stop_gap),
            "run.stop_merit" => opt_str(&self.stop_merit),
            "run.stop_loss" => opt_str(&self.stop_loss),
            "metrics.every" => self.every.to_string(),
            "metrics.tracking" => self.tracking.to_string(),
            _ => return None,
        })
    }

    /// Resolves a bare name like `gamma` to its unique full key.
    pub fn resolve_key(name: &str) -> Result<&'static str> {
        if let Some(k) = KEYS.iter().find(|k| **k == name) {
            return Ok(k);
        }
        let hits: Vec<&&str> = KEYS
            .iter()
            .filter(|k| k.rsplit('.').next() == Some(name))
            .collect();
        match hits.as_slice() {
            [k] => Ok(k),
            [] => Err(Error::Config(format!("unknown key `{name}`"))),
            _ => Err(Error::Config(format!("ambiguous key `{name}`"))),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies the assignments in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let k = k.trim();
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            self.set(&key, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serializes every key, grouped by section, parseable by [`Self::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let (sec, name) = key.split_once('.').unwrap_or(("", key));
            if sec != section {
                let _ = writeln!(out, "\n[{sec}]");
                section = sec;
            }
            let _ = writeln!(out, "{name} = {}", self.get(key).expect("listed key"));
        }
        out.trim_start().to_string()
    }

    /// `RFAST_SEED`, when set, replaces the configured seed.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var("RFAST_SEED") {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("RFAST_SEED = `{s}` is not an integer")))?;
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        if self.t_window == 0 {
            2 * self.n
        } else {
            self.t_window
        }
    }

    pub fn schedule(&self) -> Result<ScheduleKind> {
        Ok(match self.schedule_kind.as_str() {
            "round_robin" => ScheduleKind::RoundRobin,
            "random_fair" => ScheduleKind::RandomFair {
                window: self.window(),
            },
            "straggler" => ScheduleKind::Straggler {
                slow: self.slow,
                factor: self.factor,
                window: self.window(),
            },
            other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
        })
    }

    pub fn oracle_mode(&self) -> Result<OracleMode> {
        Ok(match self.noise_mode.as_str() {
            "full" => OracleMode::Full,
            "gaussian" if self.sigma == 0.0 => OracleMode::Full,
            "gaussian" => OracleMode::Gaussian { sigma: self.sigma },
            "minibatch" => OracleMode::Minibatch { batch: self.batch },
            other => return Err(Error::Config(format!("unknown noise mode `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("topology.n must be positive".into()));
        }
        if self.every == 0 {
            return Err(Error::Config("metrics.every must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("noise.sigma must be nonnegative".into()));
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Config(format!("run.gamma = {g} must be positive")));
            }
        }
        if self.gw_edges.is_some() != self.ga_edges.is_some() {
            return Err(Error::Config(
                "topology.gw and topology.ga must be given together".into(),
            ));
        }
        if self.kind == ObjectiveKind::Quadratic && self.noise_mode == "minibatch" {
            return Err(Error::Config(
                "minibatch noise needs a data-driven objective".into(),
            ));
        }
        self.schedule()?.validate(self.n)
    }
}
