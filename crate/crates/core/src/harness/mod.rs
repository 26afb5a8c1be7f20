//! Experiment execution: seeded RNG streams, schedules, the optimizer loop
//! and run records.

pub mod record;
pub mod rng;
pub mod run;
pub mod schedule;

pub use record::{
    convergence_metric, detect_convergence, first_sustained_entry, ConvergenceCriterion, RunRecord, RunSummary,
    StepRow, CSV_HEADER,
};
pub use rng::{rng_stream, splitmix64, stream_seed, LabRng};
pub use run::{run_experiment, run_observed, run_with_oracle, sweep, ProblemSpec, RunSpec, FULL_THETA_MAX_DIM};
pub use schedule::{clip_at, lr_at, ClipSchedule, Schedule};
