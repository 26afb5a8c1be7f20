//! Adaptive gradient optimizers with a reproducible experiment harness.
//!
//! The crate provides ADOPT and its clipped and ablated variants next to the
//! Adam family, RMSprop, AdaGrad and AdaShift, a set of stochastic problems on
//! which their convergence differs, and a sweep runner that executes runs in
//! parallel (feature `parallel`) or sequentially with identical output.

pub mod cli;
pub mod error;
pub mod exec;
pub mod harness;
pub mod models;
pub mod optimizers;
pub mod problems;
pub mod vectors;

pub use error::{LabError, Result};
pub use exec::Parallelism;
pub use optimizers::{Optimizer, OptimizerConfig, OptimizerKind};
pub use vectors::ParamVector;
