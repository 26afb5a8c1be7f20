//! Named experiments: expand a config into a grid of cells, run them through
//! the sweep executor and write per-cell series plus experiment summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::config::{DataSource, Experiment, ExperimentConfig, ProblemKind};
use crate::error::{LabError, Result};
use crate::exec::{map_slice, Parallelism};
use crate::harness::{
    run_observed, sweep, ClipSchedule, ConvergenceCriterion, ProblemSpec, RunRecord,
    RunSpec, RunSummary,
};
use crate::models::{accuracy, load_idx_dataset, synth_gaussian_classes, Dataset, MlpSpec};
use crate::problems::{adopt_drift_enumeration, SamplingMode, SHUFFLE_COMPONENTS};

/// Synthetic MLP data: three Gaussian classes in 16 dimensions.
pub const SYNTH_DIM: usize = 16;
pub const SYNTH_CLASSES: usize = 3;
pub const SYNTH_PER_CLASS: usize = 100;
pub const SYNTH_SEPARATION: f64 = 6.0;
pub const IDX_CLASSES: usize = 10;
/// Accuracy is logged every this many MLP steps.
pub const ACCURACY_EVERY: u64 = 100;

/// One point of the experiment grid.
#[derive(Debug, Clone)]
pub struct Cell {
    pub id: String,
    /// Grid coordinates other than the seed, e.g. optimizer and β₂.
    pub labels: BTreeMap<String, String>,
    pub spec: RunSpec,
}

impl Cell {
    /// Identifier shared by all seeds of the same grid point.
    pub fn group(&self) -> String {
        self.labels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
    }
}

/// Outcome of one cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub cell: String,
    pub group: String,
    pub labels: BTreeMap<String, String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    /// Experiment-specific scalars such as final accuracy or drift.
    pub extra: BTreeMap<String, f64>,
    #[serde(skip)]
    pub record: Option<RunRecord>,
    /// `(step, accuracy)` pairs for the MLP experiment.
    #[serde(skip)]
    pub accuracy: Vec<(u64, f64)>,
}

impl CellResult {
    pub fn final_value(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.final_value)
    }
}

/// Seed-aggregated statistics for one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub labels: BTreeMap<String, String>,
    pub runs: usize,
    pub failed: usize,
    pub median_final_value: Option<f64>,
    /// Median over seeds, counting runs that never converged as absent;
    /// reported only when every seed converged.
    pub median_convergence_step: Option<u64>,
    pub mean_metric: Option<f64>,
    pub mean_extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub groups: Vec<GroupSummary>,
    /// Experiment-level results such as the best α per optimizer.
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> Vec<&CellResult> {
        self.cells.iter().filter(|c| c.error.is_some()).collect()
    }

    pub fn group(&self, labels: &[(&str, &str)]) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| labels.iter().all(|(k, v)| g.labels.get(*k).map(String::as_str) == Some(*v)))
    }
}

fn labels(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn cell_id(labels: &BTreeMap<String, String>, order: &[&str], seed: u64) -> String {
    let mut parts: Vec<String> = order.iter().filter_map(|k| labels.get(*k).map(|v| format!("{k}-{v}"))).collect();
    parts.push(format!("seed-{seed}"));
    parts.join("_").replace(['/', ' '], "-")
}

const ID_ORDER: [&str; 7] = ["optimizer", "sampling", "beta2", "lr", "steps", "problem", "k"];

fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Synthetic => {
            synth_gaussian_classes(SYNTH_PER_CLASS, SYNTH_DIM, SYNTH_CLASSES, SYNTH_SEPARATION, config.base_seed)
        }
        DataSource::Idx { images, labels } => load_idx_dataset(images, labels, IDX_CLASSES),
    }
}

fn problem_for(config: &ExperimentConfig, sampling: SamplingMode, data: Option<&Arc<Dataset>>) -> Result<ProblemSpec> {
    Ok(match config.experiment {
        Experiment::Toy | Experiment::Ablation => ProblemSpec::Toy { k: config.k },
        Experiment::Reddi => ProblemSpec::Reddi { c: config.c },
        Experiment::Shuffle => ProblemSpec::Shuffle { sampling },
        Experiment::RateTrend => {
            ProblemSpec::SmoothNonconvex { dim: config.dim, sigma: config.sigma, start: config.start }
        }
        Experiment::Mlp => {
            let data = data.ok_or_else(|| LabError::config("data", "dataset not loaded"))?;
            ProblemSpec::Mlp {
                spec: MlpSpec::new(data.input_dim(), config.hidden, data.num_classes())?,
                batch_size: config.batch_size,
                sampling,
                data: Arc::clone(data),
            }
        }
        Experiment::Sweep => match config.problem {
            ProblemKind::Toy => ProblemSpec::Toy { k: config.k },
            ProblemKind::Reddi => ProblemSpec::Reddi { c: config.c },
            ProblemKind::Shuffle => ProblemSpec::Shuffle { sampling },
            ProblemKind::Smooth => {
                ProblemSpec::SmoothNonconvex { dim: config.dim, sigma: config.sigma, start: config.start }
            }
        },
    })
}

/// Expand `config` into its run grid: optimizer × sampling × β₂ × α × T ×
/// seed, in that nesting order.
pub fn plan_cells(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    let data = match config.experiment {
        Experiment::Mlp => Some(Arc::new(load_dataset(config)?)),
        _ => None,
    };
    let multi_sampling = config.sampling.len() > 1 || config.experiment == Experiment::Shuffle;
    let multi_lr = config.lr.len() > 1 || config.experiment == Experiment::Mlp;
    let multi_steps = config.steps.len() > 1;
    let mut cells = Vec::new();
    for &kind in &config.optimizers {
        for &sampling in &config.sampling {
            let problem = problem_for(config, sampling, data.as_ref())?;
            for beta2 in config.beta2_grid() {
                for schedule in config.schedules() {
                    for &steps in &config.steps {
                        // rate-trend scales the constant step size with the horizon
                        let schedule = match config.experiment {
                            Experiment::RateTrend => {
                                schedule.with_alpha(schedule.alpha() / (steps as f64).sqrt())
                            }
                            _ => schedule,
                        };
                        let mut pairs = vec![("optimizer", kind.name().to_string())];
                        if multi_sampling {
                            pairs.push(("sampling", sampling.label().to_string()));
                        }
                        if let Some(b) = beta2 {
                            pairs.push(("beta2", b.to_string()));
                        }
                        if multi_lr {
                            pairs.push(("lr", schedule.alpha().to_string()));
                        }
                        if multi_steps {
                            pairs.push(("steps", steps.to_string()));
                        }
                        let labels = labels(&pairs);
                        for &seed in &config.seeds {
                            let spec = RunSpec {
                                problem: problem.clone(),
                                optimizer: kind,
                                config: config.optimizer_config(kind, beta2),
                                schedule,
                                clip: if kind.uses_clipping() { config.clip } else { ClipSchedule::NoClip },
                                steps,
                                theta0: None,
                                seed,
                                base_seed: config.base_seed,
                            };
                            cells.push(Cell { id: cell_id(&labels, &ID_ORDER, seed), labels: labels.clone(), spec });
                        }
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// A run's record paired with its (step, accuracy) log.
type CellRun = (Result<RunRecord>, Vec<(u64, f64)>);

fn run_cells(config: &ExperimentConfig, cells: &[Cell], parallelism: Parallelism) -> Vec<CellRun> {
    if config.experiment != Experiment::Mlp {
        let specs: Vec<RunSpec> = cells.iter().map(|c| c.spec.clone()).collect();
        return sweep(&specs, parallelism).into_iter().map(|r| (r, Vec::new())).collect();
    }
    map_slice(cells, parallelism, |cell| {
        let ProblemSpec::Mlp { spec, data, .. } = &cell.spec.problem else {
            unreachable!("mlp cells carry an mlp problem")
        };
        let mut trace = Vec::new();
        let result = cell.spec.problem.build().and_then(|mut oracle| {
            run_observed(oracle.as_mut(), &cell.spec, ACCURACY_EVERY, &mut |t, theta| {
                trace.push((t, accuracy(spec, theta, data).unwrap_or(f64::NAN)));
            })
        });
        (result, trace)
    })
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Median of an integer sample; even counts take the lower middle value.
fn median_step(mut xs: Vec<u64>) -> Option<u64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_unstable();
    Some(xs[(xs.len() - 1) / 2])
}

fn summarize_groups(cells: &[CellResult]) -> Vec<GroupSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut by_group: BTreeMap<String, Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        if !by_group.contains_key(&c.group) {
            order.push(c.group.clone());
        }
        by_group.entry(c.group.clone()).or_default().push(c);
    }
    order
        .into_iter()
        .map(|g| {
            let members = &by_group[&g];
            let ok: Vec<&RunSummary> = members.iter().filter_map(|c| c.summary.as_ref()).collect();
            let steps: Vec<u64> = ok.iter().filter_map(|s| s.convergence_step).collect();
            let metrics: Vec<f64> = ok.iter().filter_map(|s| s.metric).collect();
            let mut mean_extra = BTreeMap::new();
            for key in members.iter().flat_map(|c| c.extra.keys()).collect::<std::collections::BTreeSet<_>>() {
                let vals: Vec<f64> = members.iter().filter_map(|c| c.extra.get(key).copied()).collect();
                mean_extra.insert(key.clone(), vals.iter().sum::<f64>() / vals.len() as f64);
            }
            GroupSummary {
                group: g.clone(),
                labels: members[0].labels.clone(),
                runs: members.len(),
                failed: members.len() - ok.len(),
                median_final_value: median(ok.iter().map(|s| s.final_value).collect()),
                median_convergence_step: (steps.len() == members.len()).then(|| median_step(steps)).flatten(),
                mean_metric: (!metrics.is_empty()).then(|| metrics.iter().sum::<f64>() / metrics.len() as f64),
                mean_extra,
            }
        })
        .collect()
}

/// Run every cell of `config` without touching the filesystem.
pub fn execute(config: &ExperimentConfig, parallelism: Parallelism) -> Result<ExperimentOutcome> {
    let cells = plan_cells(config)?;
    let results = run_cells(config, &cells, parallelism);
    let criterion = ConvergenceCriterion::default();
    let mut out = Vec::with_capacity(cells.len());
    for (cell, (result, trace)) in cells.iter().zip(results) {
        let mut extra = BTreeMap::new();
        let (summary, error, record) = match result {
            Ok(rec) => {
                if let ProblemSpec::Shuffle { .. } = cell.spec.problem {
                    let start = cell.spec.theta0.clone().unwrap_or_else(|| cell.spec.problem.initial_point(cell.spec.seed));
                    let travelled = rec.final_value() - start[0];
                    let lr_sum: f64 = rec.rows.iter().map(|r| r.lr).sum();
                    extra.insert("drift".to_string(), travelled / lr_sum);
                }
                if let Some(&(_, acc)) = trace.last() {
                    extra.insert("final_accuracy".to_string(), acc);
                }
                (Some(rec.summary(cell.spec.problem.optimum(), criterion)), None, Some(rec))
            }
            Err(e) => (None, Some(e.to_string()), None),
        };
        out.push(CellResult {
            cell: cell.id.clone(),
            group: cell.group(),
            labels: cell.labels.clone(),
            seed: cell.spec.seed,
            error,
            summary,
            extra,
            record,
            accuracy: trace,
        });
    }
    let groups = summarize_groups(&out);
    let notes = experiment_notes(config, &groups);
    Ok(ExperimentOutcome { experiment: config.experiment.name().to_string(), config: config.clone(), cells: out, groups, notes })
}

fn experiment_notes(config: &ExperimentConfig, groups: &[GroupSummary]) -> BTreeMap<String, serde_json::Value> {
    let mut notes = BTreeMap::new();
    match config.experiment {
        Experiment::Shuffle => {
            for &mode in &config.sampling {
                let predicted = adopt_drift_enumeration(&SHUFFLE_COMPONENTS, mode, config.eps.unwrap_or(1e-6));
                notes.insert(format!("predicted_drift_{}", mode.label()), predicted.into());
            }
        }
        Experiment::Mlp => {
            // best base learning rate per optimizer by mean final accuracy
            for kind in &config.optimizers {
                let best = groups
                    .iter()
                    .filter(|g| g.labels.get("optimizer").map(String::as_str) == Some(kind.name()))
                    .filter_map(|g| Some((g.mean_extra.get("final_accuracy").copied()?, g)))
                    .filter(|(acc, _)| acc.is_finite())
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((acc, g)) = best {
                    notes.insert(
                        format!("best_{}", kind.name()),
                        serde_json::json!({ "lr": g.labels.get("lr"), "accuracy": acc }),
                    );
                }
            }
        }
        _ => {}
    }
    notes
}

/// Header of the experiment-level table.
pub const SUMMARY_HEADER: [&str; 10] = [
    "cell", "optimizer", "sampling", "beta2", "lr", "steps", "seed", "status", "final_value", "convergence_step",
];

fn summary_csv(outcome: &ExperimentOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let extra_keys: Vec<String> = outcome
        .cells
        .iter()
        .flat_map(|c| c.extra.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut header: Vec<String> = SUMMARY_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(extra_keys.iter().cloned());
    w.write_record(&header)?;
    for c in &outcome.cells {
        let label = |k: &str| c.labels.get(k).cloned().unwrap_or_default();
        let sampling = c
            .record
            .as_ref()
            .and_then(|r| r.config.pointer("/problem/sampling").and_then(|v| v.as_str()).map(str::to_string))
            .unwrap_or_else(|| label("sampling"));
        let mut row = vec![
            c.cell.clone(),
            label("optimizer"),
            sampling,
            label("beta2"),
            label("lr"),
            c.summary.as_ref().map(|s| s.steps.to_string()).unwrap_or_default(),
            c.seed.to_string(),
            if c.error.is_some() { "failed".into() } else { "ok".into() },
            c.final_value().map(|v| v.to_string()).unwrap_or_default(),
            c.summary.as_ref().and_then(|s| s.convergence_step).map(|v| v.to_string()).unwrap_or_default(),
        ];
        row.extend(extra_keys.iter().map(|k| c.extra.get(k).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn accuracy_csv(trace: &[(u64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "accuracy"])?;
    for (t, a) in trace {
        w.write_record([t.to_string(), a.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Write `<out>/<experiment>/<cell>/{series.csv,summary.json}` and the
/// experiment-level `summary.json` and `summary.csv`. Returns the experiment
/// directory.
pub fn write_outputs(outcome: &ExperimentOutcome, out: &Path) -> Result<PathBuf> {
    let dir = out.join(&outcome.experiment);
    fs::create_dir_all(&dir)?;
    for c in &outcome.cells {
        let cell_dir = dir.join(&c.cell);
        fs::create_dir_all(&cell_dir)?;
        if let Some(rec) = &c.record {
            fs::write(cell_dir.join("series.csv"), rec.to_csv()?)?;
        }
        if !c.accuracy.is_empty() {
            fs::write(cell_dir.join("accuracy.csv"), accuracy_csv(&c.accuracy)?)?;
        }
        fs::write(cell_dir.join("summary.json"), to_json(c)?)?;
    }
    fs::write(dir.join("summary.json"), to_json(outcome)?)?;
    fs::write(dir.join("summary.csv"), summary_csv(outcome)?)?;
    if outcome.config.experiment == Experiment::RateTrend {
        fs::write(dir.join("trend.csv"), trend_csv(outcome)?)?;
    }
    Ok(dir)
}

/// `(T, seed-averaged metric)` pairs of a rate-trend outcome, in grid order.
pub fn rate_trend_points(outcome: &ExperimentOutcome) -> Vec<(u64, f64)> {
    outcome
        .config
        .steps
        .iter()
        .filter_map(|&t| {
            let vals: Vec<f64> = outcome
                .cells
                .iter()
                .filter(|c| c.summary.as_ref().map(|s| s.steps) == Some(t))
                .filter_map(|c| c.summary.as_ref()?.metric)
                .collect();
            (!vals.is_empty()).then(|| (t, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}

fn trend_csv(outcome: &ExperimentOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["steps", "mean_metric"])?;
    for (t, m) in rate_trend_points(outcome) {
        w.write_record([t.to_string(), m.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
