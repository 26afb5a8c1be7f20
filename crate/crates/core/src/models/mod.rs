//! A small classifier surface for nonconvex experiments.

pub mod data;
pub mod mlp;

pub use data::{dataset_from_idx, load_idx_dataset, parse_idx, synth_gaussian_classes, Dataset, IdxArray};
pub use mlp::{
    accuracy, finite_diff_check, finite_diff_max_rel_error, mlp_init, mlp_loss, mlp_loss_and_grad, predict,
    MlpOracle, MlpSpec,
};
