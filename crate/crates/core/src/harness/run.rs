//! The optimizer loop and the sweep executor.

use std::sync::Arc;

use serde::Serialize;

use super::record::{RunRecord, StepRow};
use super::rng::{rng_stream, LabRng};
use super::schedule::{clip_at, lr_at, ClipSchedule, Schedule};
use crate::error::{LabError, Result};
use crate::exec::{map_slice, Parallelism};
use crate::models::{mlp_init, Dataset, MlpOracle, MlpSpec};
use crate::optimizers::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::problems::{
    project, FiniteSumShuffle, GradientOracle, ReddiOnline, SamplingMode, SmoothNonconvex, ToyProblem,
};
use crate::vectors::ParamVector;

/// Iterates are stored in full only up to this dimension.
pub const FULL_THETA_MAX_DIM: usize = 4;

/// A problem description from which a fresh oracle can be built per run.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Toy { k: f64 },
    Reddi { c: f64 },
    Shuffle { sampling: SamplingMode },
    SmoothNonconvex { dim: usize, sigma: f64, start: f64 },
    Mlp {
        spec: MlpSpec,
        batch_size: usize,
        sampling: SamplingMode,
        #[serde(skip)]
        data: Arc<Dataset>,
    },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::Toy { .. } | ProblemSpec::Reddi { .. } | ProblemSpec::Shuffle { .. } => 1,
            ProblemSpec::SmoothNonconvex { dim, .. } => *dim,
            ProblemSpec::Mlp { spec, .. } => spec.param_count(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn GradientOracle>> {
        Ok(match self {
            ProblemSpec::Toy { k } => Box::new(ToyProblem::new(*k)?),
            ProblemSpec::Reddi { c } => Box::new(ReddiOnline::new(*c)?),
            ProblemSpec::Shuffle { sampling } => Box::new(FiniteSumShuffle::new(*sampling)),
            ProblemSpec::SmoothNonconvex { dim, sigma, .. } => Box::new(SmoothNonconvex::new(*dim, *sigma)?),
            ProblemSpec::Mlp { spec, batch_size, sampling, data } => {
                Box::new(MlpOracle::new(*spec, Arc::clone(data), *batch_size, *sampling)?)
            }
        })
    }

    /// Scalar solution of the box-constrained problems.
    pub fn optimum(&self) -> Option<f64> {
        match self {
            ProblemSpec::Toy { .. } | ProblemSpec::Reddi { .. } => Some(-1.0),
            ProblemSpec::Shuffle { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Default starting point; the MLP draws its initialization from `seed`.
    pub fn initial_point(&self, seed: u64) -> ParamVector {
        match self {
            ProblemSpec::SmoothNonconvex { dim, start, .. } => ParamVector::filled(*dim, *start),
            ProblemSpec::Mlp { spec, .. } => mlp_init(spec, seed),
            _ => ParamVector::scalar(0.0),
        }
    }
}

/// Everything needed to execute one run deterministically.
#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerKind,
    pub config: OptimizerConfig,
    pub schedule: Schedule,
    pub clip: ClipSchedule,
    pub steps: u64,
    /// Overrides [`ProblemSpec::initial_point`].
    pub theta0: Option<ParamVector>,
    pub seed: u64,
    pub base_seed: u64,
}

impl RunSpec {
    pub fn new(problem: ProblemSpec, optimizer: OptimizerKind, schedule: Schedule, steps: u64, seed: u64) -> Self {
        RunSpec {
            problem,
            optimizer,
            config: OptimizerConfig::defaults_for(optimizer),
            schedule,
            clip: if optimizer.uses_clipping() { ClipSchedule::default() } else { ClipSchedule::NoClip },
            steps,
            theta0: None,
            seed,
            base_seed: 0,
        }
    }

    pub fn rng(&self) -> LabRng {
        rng_stream(self.base_seed, self.seed)
    }
}

/// Execute `spec` with a freshly built oracle.
pub fn run_experiment(spec: &RunSpec) -> Result<RunRecord> {
    let mut oracle = spec.problem.build()?;
    run_with_oracle(oracle.as_mut(), spec)
}

/// Execute `spec` against a caller-supplied oracle.
///
/// ADOPT-style optimizers first receive one gradient at `θ₀` to seed their
/// second moment; that call is not counted among the `steps` updates. Each of
/// the `T` steps then samples `g_t` at `θ_{t−1}`, applies the update with
/// `α_t` and `c_t`, and projects onto the oracle's box when it has one.
pub fn run_with_oracle(oracle: &mut dyn GradientOracle, spec: &RunSpec) -> Result<RunRecord> {
    run_observed(oracle, spec, 0, &mut |_, _| {})
}

/// [`run_with_oracle`] that also hands the iterate to `observe` after every
/// `every`-th step and after the last one. `every = 0` disables the hook.
pub fn run_observed(
    oracle: &mut dyn GradientOracle,
    spec: &RunSpec,
    every: u64,
    observe: &mut dyn FnMut(u64, &ParamVector),
) -> Result<RunRecord> {
    if spec.steps == 0 {
        return Err(LabError::config("steps", "must be at least 1"));
    }
    spec.schedule.validate()?;
    let dim = oracle.dim();
    let mut theta = spec.theta0.clone().unwrap_or_else(|| spec.problem.initial_point(spec.seed));
    if theta.dim() != dim {
        return Err(LabError::DimensionMismatch { expected: dim, got: theta.dim() });
    }
    let mut optimizer = Optimizer::new(spec.optimizer, spec.config, dim)?;
    let mut rng = spec.rng();
    let feasible = oracle.feasible_box();
    let uses_clip = spec.optimizer.uses_clipping();
    let at_step = |step: u64| {
        move |e: LabError| match e {
            LabError::NonFinite { what, .. } => LabError::NonFinite { what, step },
            other => other,
        }
    };

    if optimizer.needs_init_gradient() {
        let g0 = oracle.sample(&theta, &mut rng)?;
        theta = optimizer
            .step(&theta, &g0, lr_at(&spec.schedule, 1), clip_at(&spec.clip, 1))
            .map_err(at_step(0))?;
    }

    let keep_full = dim <= FULL_THETA_MAX_DIM;
    let mut rows = Vec::with_capacity(spec.steps as usize);
    let mut thetas = keep_full.then(|| Vec::with_capacity(spec.steps as usize));

    for t in 1..=spec.steps {
        let lr = lr_at(&spec.schedule, t);
        let clip = clip_at(&spec.clip, t);
        let loss = oracle.loss(&theta);
        let true_grad_norm = oracle.true_gradient(&theta).map(|g| g.norm2());
        let g = oracle.sample(&theta, &mut rng)?;
        let mut next = optimizer.step(&theta, &g, lr, clip).map_err(at_step(t))?;
        if let Some(b) = feasible {
            next = project(&next, b);
        }
        theta = next;

        rows.push(StepRow {
            step: t,
            theta_or_norm: if dim == 1 { theta[0] } else { theta.norm2() },
            loss,
            grad_norm: g.norm2(),
            true_grad_norm,
            lr,
            clip: uses_clip.then_some(clip),
        });
        if let Some(ts) = thetas.as_mut() {
            ts.push(theta.as_slice().to_vec());
        }
        if every > 0 && (t % every == 0 || t == spec.steps) {
            observe(t, &theta);
        }
    }

    Ok(RunRecord {
        config: serde_json::to_value(spec)?,
        seed: spec.seed,
        base_seed: spec.base_seed,
        rows,
        thetas,
        final_theta_norm: theta.norm2(),
        final_theta: theta.into_vec(),
    })
}

/// Run every spec, returning records in input order. A failing run yields an
/// `Err` in its own slot and does not affect the others.
pub fn sweep(specs: &[RunSpec], parallelism: Parallelism) -> Vec<Result<RunRecord>> {
    map_slice(specs, parallelism, run_experiment)
}
