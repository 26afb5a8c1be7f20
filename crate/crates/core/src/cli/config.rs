//! Experiment configuration: JSON documents merged with command-line
//! overrides, then completed with per-experiment defaults.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::harness::{ClipSchedule, Schedule};
use crate::optimizers::{EpsMode, MomentumInit, OptimizerConfig, OptimizerKind, WeightDecayMode};
use crate::problems::SamplingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Toy,
    Reddi,
    Ablation,
    Shuffle,
    Mlp,
    Sweep,
    RateTrend,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Toy => "toy",
            Experiment::Reddi => "reddi",
            Experiment::Ablation => "ablation",
            Experiment::Shuffle => "shuffle",
            Experiment::Mlp => "mlp",
            Experiment::Sweep => "sweep",
            Experiment::RateTrend => "rate-trend",
        }
    }
}

/// Problem selector for the generic `sweep` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Toy,
    Reddi,
    Shuffle,
    Smooth,
}

impl FromStr for ProblemKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(ProblemKind::Toy),
            "reddi" => Ok(ProblemKind::Reddi),
            "shuffle" => Ok(ProblemKind::Shuffle),
            "smooth" | "smooth-nonconvex" => Ok(ProblemKind::Smooth),
            _ => Err(LabError::UnknownName { kind: "problem", name: s.to_string() }),
        }
    }
}

/// Where the MLP experiment gets its data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DataSource {
    Synthetic,
    Idx { images: PathBuf, labels: PathBuf },
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic => f.write_str("synthetic"),
            DataSource::Idx { images, labels } => write!(f, "idx:{},{}", images.display(), labels.display()),
        }
    }
}

impl FromStr for DataSource {
    type Err = LabError;

    /// `synthetic` or `idx:<images>,<labels>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "synthetic" {
            return Ok(DataSource::Synthetic);
        }
        let paths = s
            .strip_prefix("idx:")
            .ok_or_else(|| LabError::UnknownName { kind: "data source", name: s.to_string() })?;
        let (images, labels) = paths
            .split_once(',')
            .ok_or_else(|| LabError::config("data", "expected `idx:<images>,<labels>`"))?;
        Ok(DataSource::Idx { images: images.into(), labels: labels.into() })
    }
}

impl TryFrom<String> for DataSource {
    type Error = LabError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DataSource> for String {
    fn from(d: DataSource) -> String {
        d.to_string()
    }
}

/// A complete experiment description. Grid-valued fields (`beta2`, `lr`,
/// `steps`, `seeds`, `sampling`) span the cells of the run grid; an empty
/// `beta2` grid means each optimizer keeps its own default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub problem: ProblemKind,
    pub optimizers: Vec<OptimizerKind>,
    pub beta1: Option<f64>,
    pub beta2: Vec<f64>,
    pub eps: Option<f64>,
    pub eps_mode: Option<EpsMode>,
    pub m_init: Option<MomentumInit>,
    pub bias_correction: Option<bool>,
    pub weight_decay: Option<f64>,
    pub wd_mode: Option<WeightDecayMode>,
    pub window: Option<usize>,
    /// Base learning rates; each replaces the α of `schedule`.
    pub lr: Vec<f64>,
    pub schedule: Schedule,
    /// Clipping for `adopt-clipped`; other optimizers never clip.
    pub clip: ClipSchedule,
    pub k: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub steps: Vec<u64>,
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub sampling: Vec<SamplingMode>,
    pub data: DataSource,
    pub dim: usize,
    pub sigma: f64,
    pub start: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub out: PathBuf,
}

/// Values that may be absent in a document or on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialConfig {
    pub experiment: Option<Experiment>,
    pub problem: Option<ProblemKind>,
    pub optimizers: Option<Vec<OptimizerKind>>,
    pub beta1: Option<f64>,
    pub beta2: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub eps_mode: Option<EpsMode>,
    pub m_init: Option<MomentumInit>,
    pub bias_correction: Option<bool>,
    pub weight_decay: Option<f64>,
    pub wd_mode: Option<WeightDecayMode>,
    pub window: Option<usize>,
    pub lr: Option<Vec<f64>>,
    pub schedule: Option<Schedule>,
    pub clip: Option<ClipSchedule>,
    pub k: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub steps: Option<Vec<u64>>,
    pub seeds: Option<Vec<u64>>,
    pub base_seed: Option<u64>,
    pub sampling: Option<Vec<SamplingMode>>,
    pub data: Option<DataSource>,
    pub dim: Option<usize>,
    pub sigma: Option<f64>,
    pub start: Option<f64>,
    pub hidden: Option<usize>,
    pub batch_size: Option<usize>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),+ $(,)?) => {
        PartialConfig { $($field: $top.$field.or($base.$field)),+ }
    };
}

impl PartialConfig {
    /// Fields set in `top` win over those in `self`.
    pub fn merge(self, top: PartialConfig) -> PartialConfig {
        let base = self;
        overlay!(
            base, top, experiment, problem, optimizers, beta1, beta2, eps, eps_mode, m_init, bias_correction,
            weight_decay, wd_mode, window, lr, schedule, clip, k, c, steps, seeds, base_seed, sampling, data, dim,
            sigma, start, hidden, batch_size, out,
        )
    }
}

fn json_error(e: serde_json::Error) -> LabError {
    // serde reports the offending key or value in its message
    LabError::config("config", e.to_string())
}

/// Parse a JSON document, apply `flags` over it, fill experiment defaults and
/// validate. `env_seed` is the base seed used when neither source sets one.
pub fn parse_config(text: Option<&str>, flags: PartialConfig, env_seed: Option<u64>) -> Result<ExperimentConfig> {
    let file: PartialConfig = match text {
        Some(t) if !t.trim().is_empty() => serde_json::from_str(t).map_err(json_error)?,
        _ => PartialConfig::default(),
    };
    let merged = file.merge(flags);
    let config = resolve(merged, env_seed)?;
    config.validate()?;
    Ok(config)
}

/// Canonical JSON form; [`parse_config`] reads it back unchanged.
pub fn render(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

fn resolve(p: PartialConfig, env_seed: Option<u64>) -> Result<ExperimentConfig> {
    use OptimizerKind::*;
    let experiment = p.experiment.ok_or_else(|| LabError::config("experiment", "missing"))?;
    let toy_schedule = Schedule::ToyDecay(0.01, 0.01);
    // (optimizers, β₁, β₂ grid, schedule, steps, seeds)
    let (optimizers, beta1, beta2, schedule, steps, seeds): (Vec<_>, Option<f64>, Vec<f64>, _, Vec<u64>, Vec<u64>) =
        match experiment {
            Experiment::Toy => {
                (vec![Adam, AmsGrad, Adopt], Some(0.9), vec![0.1, 0.5, 0.9, 0.999], toy_schedule, vec![200_000], vec![1, 2, 3])
            }
            Experiment::Reddi => (vec![Adam, AmsGrad, Adopt], Some(0.9), vec![0.999], toy_schedule, vec![100_000], vec![1, 2, 3]),
            Experiment::Ablation => (
                vec![Adopt, AdoptDecorrelateOnly, AdoptChangeOrderOnly, Adam],
                Some(0.9),
                vec![0.999],
                toy_schedule,
                vec![200_000],
                vec![1, 2, 3],
            ),
            Experiment::Shuffle => (vec![Adopt], Some(0.0), vec![0.0], Schedule::InvSqrt(0.01), vec![100_000], vec![1, 2, 3]),
            Experiment::Mlp => (vec![Adopt, Adam], None, vec![], Schedule::InvSqrt(0.01), vec![2000], vec![1, 2, 3]),
            Experiment::Sweep => (vec![Adopt], None, vec![], toy_schedule, vec![10_000], vec![1, 2, 3]),
            Experiment::RateTrend => {
                (vec![Adopt], None, vec![], Schedule::Constant(0.5), vec![100, 1000, 10_000], (1..=20).collect())
            }
        };
    let lr = match experiment {
        Experiment::Mlp => vec![1.0, 0.1, 0.01, 0.001],
        _ => vec![],
    };
    let (weight_decay, wd_mode) = match experiment {
        Experiment::Mlp => (Some(1e-4), Some(WeightDecayMode::Coupled)),
        _ => (None, None),
    };
    let sampling = match experiment {
        Experiment::Shuffle => vec![SamplingMode::WithReplacement, SamplingMode::WithoutReplacement],
        _ => vec![SamplingMode::WithReplacement],
    };
    Ok(ExperimentConfig {
        experiment,
        problem: p.problem.unwrap_or(ProblemKind::Toy),
        optimizers: p.optimizers.unwrap_or(optimizers),
        beta1: p.beta1.or(beta1),
        beta2: p.beta2.unwrap_or(beta2),
        eps: p.eps,
        eps_mode: p.eps_mode,
        m_init: p.m_init,
        bias_correction: p.bias_correction,
        weight_decay: p.weight_decay.or(weight_decay),
        wd_mode: p.wd_mode.or(wd_mode),
        window: p.window,
        lr: p.lr.unwrap_or(lr),
        schedule: p.schedule.unwrap_or(schedule),
        clip: p.clip.unwrap_or_default(),
        k: p.k.unwrap_or(if experiment == Experiment::Ablation { 50.0 } else { 10.0 }),
        c: p.c.unwrap_or(3.0),
        steps: p.steps.unwrap_or(steps),
        seeds: p.seeds.unwrap_or(seeds),
        base_seed: p.base_seed.or(env_seed).unwrap_or(0),
        sampling: p.sampling.unwrap_or(sampling),
        data: p.data.unwrap_or(DataSource::Synthetic),
        dim: p.dim.unwrap_or(10),
        sigma: p.sigma.unwrap_or(0.5),
        start: p.start.unwrap_or(2.0),
        hidden: p.hidden.unwrap_or(32),
        batch_size: p.batch_size.unwrap_or(64),
        out: p.out.unwrap_or_else(|| PathBuf::from("results")),
    })
}

impl ExperimentConfig {
    /// Optimizer hyperparameters for one cell: the rule's defaults with every
    /// explicitly configured field applied on top.
    pub fn optimizer_config(&self, kind: OptimizerKind, beta2: Option<f64>) -> OptimizerConfig {
        let mut c = OptimizerConfig::defaults_for(kind);
        if let Some(b) = self.beta1 {
            c.beta1 = b;
        }
        if let Some(b) = beta2 {
            c.beta2 = b;
        }
        if let Some(e) = self.eps {
            c.epsilon = e;
        }
        if let Some(m) = self.eps_mode {
            c.eps_mode = m;
        }
        if let Some(m) = self.m_init {
            c.m_init = m;
        }
        if let Some(b) = self.bias_correction {
            c.bias_correction = b;
        }
        if let Some(w) = self.weight_decay {
            c.weight_decay = w;
            if self.wd_mode.is_none() && c.wd_mode == WeightDecayMode::None {
                c.wd_mode = WeightDecayMode::Coupled;
            }
        }
        if let Some(m) = self.wd_mode {
            c.wd_mode = m;
        }
        if let Some(n) = self.window {
            c.adashift_window = n;
        }
        c
    }

    /// The β₂ grid, with `None` standing for "optimizer default".
    pub fn beta2_grid(&self) -> Vec<Option<f64>> {
        if self.beta2.is_empty() {
            vec![None]
        } else {
            self.beta2.iter().copied().map(Some).collect()
        }
    }

    /// Schedules for each configured base learning rate.
    pub fn schedules(&self) -> Vec<Schedule> {
        if self.lr.is_empty() {
            vec![self.schedule]
        } else {
            self.lr.iter().map(|&a| self.schedule.with_alpha(a)).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty() {
            return Err(LabError::config("optimizer", "at least one optimizer is required"));
        }
        if self.seeds.is_empty() {
            return Err(LabError::config("seeds", "at least one seed is required"));
        }
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(LabError::config("steps", "every step count must be at least 1"));
        }
        if self.sampling.is_empty() {
            return Err(LabError::config("sampling", "at least one sampling mode is required"));
        }
        for &kind in &self.optimizers {
            for b2 in self.beta2_grid() {
                self.optimizer_config(kind, b2).validate()?;
            }
        }
        for s in self.schedules() {
            s.validate().map_err(|_| LabError::config("lr", format!("invalid schedule {s}")))?;
        }
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(LabError::config("k", format!("{} must be at least 1", self.k)));
        }
        if !(self.c > 2.0 && self.c.is_finite()) {
            return Err(LabError::config("C", format!("{} must exceed 2", self.c)));
        }
        if self.dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(LabError::config("dim", "dimensions and batch size must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(LabError::config("sigma", format!("{} must be nonnegative", self.sigma)));
        }
        if !self.start.is_finite() {
            return Err(LabError::config("start", "must be finite"));
        }
        Ok(())
    }
}
