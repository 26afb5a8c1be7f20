//! Command-line interface.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{LabError, Result};
use crate::exec::Parallelism;
use crate::harness::{ClipSchedule, Schedule};
use crate::optimizers::{EpsMode, MomentumInit, OptimizerKind};
use crate::problems::SamplingMode;
pub use commands::{execute, plan_cells, write_outputs, ExperimentOutcome};
pub use config::{parse_config, render, DataSource, Experiment, ExperimentConfig, PartialConfig, ProblemKind};

/// Environment variable consulted for the base seed when no config sets it.
pub const SEED_ENV: &str = "ADOPT_LAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "adopt-lab", version, about = "Adaptive optimizer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// β₂ × optimizer grid on the stochastic toy problem.
    Toy(Flags),
    /// Online counterexample with periodic large gradients.
    Reddi(Flags),
    /// ADOPT with each of its two modifications removed.
    Ablation(Flags),
    /// ADOPT on a finite sum under both sampling modes.
    Shuffle(Flags),
    /// MLP training with a learning-rate sweep.
    Mlp(Flags),
    /// Generic grid over any problem.
    Sweep(Flags),
    /// Convergence metric against the horizon on the smooth problem.
    RateTrend(Flags),
}

/// Flags shared by every subcommand; each overrides the `--config` document.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated optimizer names.
    #[arg(long, value_delimiter = ',')]
    pub optimizer: Option<Vec<OptimizerKind>>,
    #[arg(long)]
    pub beta1: Option<f64>,
    /// One value or a comma-separated grid.
    #[arg(long, value_delimiter = ',')]
    pub beta2: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub eps_mode: Option<EpsMode>,
    #[arg(long)]
    pub m_init: Option<MomentumInit>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Base learning rate(s) replacing the schedule's α.
    #[arg(long, value_delimiter = ',')]
    pub lr: Option<Vec<f64>>,
    /// `const:<α>`, `invsqrt:<α>` or `toy:<α>,<a>`.
    #[arg(long)]
    pub schedule: Option<Schedule>,
    /// `none`, `const:<c>` or `quarter:<c>`.
    #[arg(long)]
    pub clip: Option<ClipSchedule>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// One horizon or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `with`, `without` or both comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub sampling: Option<Vec<SamplingMode>>,
    /// `synthetic` or `idx:<images>,<labels>`.
    #[arg(long)]
    pub data: Option<DataSource>,
    /// MLP hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Problem for `sweep`: toy, reddi, shuffle or smooth.
    #[arg(long)]
    pub problem: Option<ProblemKind>,
    /// Run cells one after another.
    #[arg(long)]
    pub serial: bool,
}

impl Flags {
    fn partial(&self, experiment: Experiment) -> PartialConfig {
        PartialConfig {
            experiment: Some(experiment),
            problem: self.problem,
            optimizers: self.optimizer.clone(),
            beta1: self.beta1,
            beta2: self.beta2.clone(),
            eps: self.eps,
            eps_mode: self.eps_mode,
            m_init: self.m_init,
            weight_decay: self.weight_decay,
            lr: self.lr.clone(),
            schedule: self.schedule,
            clip: self.clip,
            k: self.k,
            c: self.c,
            steps: self.steps.clone(),
            seeds: self.seeds.clone(),
            sampling: self.sampling.clone(),
            data: self.data.clone(),
            out: self.out.clone(),
            hidden: self.hidden,
            batch_size: self.batch_size,
            ..Default::default()
        }
    }
}

macro_rules! clap_from_str {
    ($($ty:ty),+) => {$(
        impl clap::builder::ValueParserFactory for $ty {
            type Parser = fn(&str) -> std::result::Result<$ty, String>;
            fn value_parser() -> Self::Parser {
                |s| s.parse::<$ty>().map_err(|e| e.to_string())
            }
        }
    )+};
}

clap_from_str!(OptimizerKind, SamplingMode, EpsMode, MomentumInit, Schedule, ClipSchedule, DataSource, ProblemKind);

impl Command {
    fn split(&self) -> (Experiment, &Flags) {
        match self {
            Command::Toy(f) => (Experiment::Toy, f),
            Command::Reddi(f) => (Experiment::Reddi, f),
            Command::Ablation(f) => (Experiment::Ablation, f),
            Command::Shuffle(f) => (Experiment::Shuffle, f),
            Command::Mlp(f) => (Experiment::Mlp, f),
            Command::Sweep(f) => (Experiment::Sweep, f),
            Command::RateTrend(f) => (Experiment::RateTrend, f),
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| LabError::config(SEED_ENV, format!("`{s}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Resolve the configuration for a parsed command line.
pub fn load_config(command: &Command) -> Result<(ExperimentConfig, Parallelism)> {
    let (experiment, flags) = command.split();
    let text = flags.config.as_ref().map(std::fs::read_to_string).transpose()?;
    let config = parse_config(text.as_deref(), flags.partial(experiment), env_seed()?)?;
    let parallelism = if flags.serial { Parallelism::Serial } else { Parallelism::Parallel };
    Ok((config, parallelism))
}

/// Exit statuses: 0 when every run finished finite, 1 when some run failed,
/// 2 for configuration or I/O errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (config, parallelism) = match load_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = match execute(&config, parallelism) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let dir = match write_outputs(&outcome, &config.out) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    print_groups(&outcome);
    println!("wrote {}", dir.display());
    let failed = outcome.failed();
    if failed.is_empty() {
        0
    } else {
        eprintln!("{} of {} runs failed:", failed.len(), outcome.cells.len());
        for c in failed {
            eprintln!("  {}: {}", c.cell, c.error.as_deref().unwrap_or(""));
        }
        1
    }
}

fn print_groups(outcome: &ExperimentOutcome) {
    for g in &outcome.groups {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut line = format!(
            "{:<48} final {:>9}  converged {:>8}",
            g.group,
            fmt(g.median_final_value),
            g.median_convergence_step.map_or("-".to_string(), |s| s.to_string()),
        );
        if let Some(m) = g.mean_metric {
            line.push_str(&format!("  metric {m:.4e}"));
        }
        for (k, v) in &g.mean_extra {
            line.push_str(&format!("  {k} {v:.4}"));
        }
        println!("{line}");
    }
    for (k, v) in &outcome.notes {
        println!("{k}: {v}");
    }
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    run(std::env::args_os())
}
