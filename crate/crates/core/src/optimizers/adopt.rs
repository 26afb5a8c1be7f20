//! ADOPT, its clipped form, and the two single-change ablations.
//!
//! Every rule here seeds `v₀ = g₀⊙g₀` from the first gradient it receives and
//! leaves the iterate unchanged on that call. ADOPT then normalizes each new
//! gradient by the *previous* second moment before folding it into the
//! momentum, and only afterwards absorbs the gradient into `v`.

use serde::{Deserialize, Serialize};

use super::{finish_step, prepare_gradient, MomentumInit, OptimizerConfig, OptimizerState};
use crate::error::Result;
use crate::vectors::ParamVector;

/// Ablations that keep only one of ADOPT's two changes to Adam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    /// Adam-order momentum over raw gradients, normalized by the stale `v_{t−1}`.
    DecorrelateOnly,
    /// Normalize-then-average momentum, but with the current `v_t`.
    ChangeOrderOnly,
}

/// Consume `g₀` into `v₀` if that has not happened yet. Returns true when the
/// call was the seeding call.
fn seed_second_moment(state: &mut OptimizerState, g: &ParamVector) -> Result<bool> {
    if state.v0_initialized {
        return Ok(false);
    }
    state.v = g.hadamard(g)?;
    state.v0_initialized = true;
    Ok(true)
}

fn adopt_core(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
    clip: f64,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    if seed_second_moment(state, &g)? {
        return finish_step(state, cfg, theta, theta.clone(), lr);
    }
    state.t += 1;

    let normalized = g.div(&cfg.denominator(&state.v))?.clip_elementwise(clip);
    state.m = if cfg.m_init == MomentumInit::FullFirstStep && !state.momentum_started {
        normalized
    } else {
        state.m.lincomb(cfg.beta1, &normalized, 1.0 - cfg.beta1)?
    };
    state.momentum_started = true;

    let next = theta.lincomb(1.0, &state.m, -lr)?;
    state.v = state.v.lincomb(cfg.beta2, &g.hadamard(&g)?, 1.0 - cfg.beta2)?;
    finish_step(state, cfg, theta, next, lr)
}

/// Vanilla ADOPT. `cfg.m_init` selects between `m₁ = g₁/max{√v₀, ε}` and
/// `m₀ = 0`.
pub fn adopt_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    adopt_core(state, cfg, theta, g, lr, f64::INFINITY)
}

/// ADOPT with the normalized gradient clipped element-wise to `[−c_t, c_t]`
/// before the momentum update.
pub fn adopt_clipped_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
    clip: f64,
) -> Result<ParamVector> {
    debug_assert!(clip >= 0.0, "clip bound must be nonnegative");
    adopt_core(state, cfg, theta, g, lr, clip)
}

/// Both ablations start from `m₀ = 0`, as Adam does.
pub fn adopt_ablation_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
    variant: AblationVariant,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    if seed_second_moment(state, &g)? {
        return finish_step(state, cfg, theta, theta.clone(), lr);
    }
    state.t += 1;
    let g_sq = g.hadamard(&g)?;

    let next = match variant {
        AblationVariant::DecorrelateOnly => {
            state.m = state.m.lincomb(cfg.beta1, &g, 1.0 - cfg.beta1)?;
            let step = state.m.div(&cfg.denominator(&state.v))?;
            state.v = state.v.lincomb(cfg.beta2, &g_sq, 1.0 - cfg.beta2)?;
            theta.lincomb(1.0, &step, -lr)?
        }
        AblationVariant::ChangeOrderOnly => {
            state.v = state.v.lincomb(cfg.beta2, &g_sq, 1.0 - cfg.beta2)?;
            let normalized = g.div(&cfg.denominator(&state.v))?;
            state.m = state.m.lincomb(cfg.beta1, &normalized, 1.0 - cfg.beta1)?;
            theta.lincomb(1.0, &state.m, -lr)?
        }
    };
    state.momentum_started = true;
    finish_step(state, cfg, theta, next, lr)
}
