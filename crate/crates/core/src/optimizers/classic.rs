//! SGD, AdaGrad, RMSprop, the Adam family, Adamax and AdaShift.

use super::{finish_step, prepare_gradient, OptimizerConfig, OptimizerState};
use crate::error::Result;
use crate::vectors::ParamVector;

/// Bias-correction divisor `1 − βᵗ`, or 1 when correction is off or would
/// divide by zero (β = 1).
fn bias_divisor(enabled: bool, beta: f64, t: u64) -> f64 {
    let d = 1.0 - beta.powi(t.min(i32::MAX as u64) as i32);
    if enabled && d > 0.0 {
        d
    } else {
        1.0
    }
}

pub fn sgd_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    state.t += 1;
    let next = theta.lincomb(1.0, &g, -lr)?;
    finish_step(state, cfg, theta, next, lr)
}

/// `v ← v + g⊙g`, `θ ← θ − lr·g/√(v + ε²)`.
pub fn adagrad_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    state.t += 1;
    state.v = state.v.add(&g.hadamard(&g)?)?;
    let step = g.div(&cfg.denominator(&state.v))?;
    let next = theta.lincomb(1.0, &step, -lr)?;
    finish_step(state, cfg, theta, next, lr)
}

/// `v ← β₂v + (1−β₂)g⊙g`, `θ ← θ − lr·g/√(v + ε²)`.
pub fn rmsprop_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    state.t += 1;
    state.v = state.v.lincomb(cfg.beta2, &g.hadamard(&g)?, 1.0 - cfg.beta2)?;
    let step = g.div(&cfg.denominator(&state.v))?;
    let next = theta.lincomb(1.0, &step, -lr)?;
    finish_step(state, cfg, theta, next, lr)
}

/// Adam, AMSGrad (`amsgrad = true`) and AdamW (decoupled weight decay in the
/// config). AMSGrad's running maximum is taken over the raw `v`; bias
/// correction, when enabled, is applied to whichever second moment is used.
pub fn adam_family_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
    amsgrad: bool,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    state.t += 1;
    state.m = state.m.lincomb(cfg.beta1, &g, 1.0 - cfg.beta1)?;
    state.v = state.v.lincomb(cfg.beta2, &g.hadamard(&g)?, 1.0 - cfg.beta2)?;
    let second = if amsgrad {
        state.v_hat = state.v_hat.max_elementwise(&state.v)?;
        &state.v_hat
    } else {
        &state.v
    };
    let m_hat = state.m.scale(1.0 / bias_divisor(cfg.bias_correction, cfg.beta1, state.t));
    let v_hat = second.scale(1.0 / bias_divisor(cfg.bias_correction, cfg.beta2, state.t));
    let step = m_hat.div(&cfg.denominator(&v_hat))?;
    let next = theta.lincomb(1.0, &step, -lr)?;
    finish_step(state, cfg, theta, next, lr)
}

/// Infinity-norm Adam: `u ← max(β₂u, |g|)`, `θ ← θ − lr·m̂/(u + ε)`, with
/// `m̂` always bias-corrected.
pub fn adamax_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    state.t += 1;
    state.m = state.m.lincomb(cfg.beta1, &g, 1.0 - cfg.beta1)?;
    state.u = state.u.scale(cfg.beta2).max_elementwise(&g.abs())?;
    let m_hat = state.m.scale(1.0 / bias_divisor(true, cfg.beta1, state.t));
    let step = m_hat.div(&state.u.add_scalar(cfg.epsilon))?;
    let next = theta.lincomb(1.0, &step, -lr)?;
    finish_step(state, cfg, theta, next, lr)
}

/// AdaShift without block-wise learning rates. The second moment is fed the
/// gradient from `n` steps ago and the momentum is a normalized, truncated
/// EMA over the newest `n` gradients. Until `n + 1` gradients have been seen
/// the iterate does not move.
pub fn adashift_step(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    let g = prepare_gradient(state, cfg, theta, g)?;
    state.t += 1;
    let n = cfg.adashift_window;
    state.grad_buffer.push_back(g);
    if state.grad_buffer.len() <= n {
        return finish_step(state, cfg, theta, theta.clone(), lr);
    }
    let oldest = state.grad_buffer.pop_front().expect("buffer holds n + 1 gradients");
    state.v = state.v.lincomb(cfg.beta2, &oldest.hadamard(&oldest)?, 1.0 - cfg.beta2)?;

    let mut m = ParamVector::zeros(state.dim());
    let mut weight_sum = 0.0;
    // newest gradient carries β₁⁰
    for (k, past) in state.grad_buffer.iter().rev().enumerate() {
        let w = cfg.beta1.powi(k as i32);
        m = m.lincomb(1.0, past, w)?;
        weight_sum += w;
    }
    state.m = m.scale(1.0 / weight_sum);

    let step = state.m.div(&cfg.denominator(&state.v))?;
    let next = theta.lincomb(1.0, &step, -lr)?;
    finish_step(state, cfg, theta, next, lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{EpsMode, OptimizerKind};
    use approx::assert_relative_eq;

    fn s(x: f64) -> ParamVector {
        ParamVector::scalar(x)
    }

    #[test]
    fn sgd_examples() {
        let cfg = OptimizerConfig::defaults_for(OptimizerKind::Sgd);
        let mut st = OptimizerState::new(1);
        assert_eq!(sgd_step(&mut st, &cfg, &s(1.0), &s(2.0), 0.1).unwrap(), s(0.8));
        assert_eq!(st.t, 1);
        assert_eq!(sgd_step(&mut st, &cfg, &s(1.0), &s(0.0), 0.1).unwrap(), s(1.0));
        let mut st = OptimizerState::new(2);
        let theta = ParamVector::zeros(2);
        let g = ParamVector::new(vec![1.0, -1.0]).unwrap();
        assert_eq!(sgd_step(&mut st, &cfg, &theta, &g, 1.0).unwrap().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn adagrad_trace() {
        let cfg = OptimizerConfig { epsilon: 0.0, ..OptimizerConfig::defaults_for(OptimizerKind::AdaGrad) };
        let mut st = OptimizerState::new(1);
        let th = adagrad_step(&mut st, &cfg, &s(0.0), &s(2.0), 1.0).unwrap();
        assert_eq!(st.v, s(4.0));
        assert_eq!(th, s(-1.0));

        let mut st = OptimizerState::new(1);
        let th1 = adagrad_step(&mut st, &cfg, &s(0.0), &s(1.0), 0.5).unwrap();
        assert_eq!(th1, s(-0.5));
        let th2 = adagrad_step(&mut st, &cfg, &th1, &s(1.0), 0.5).unwrap();
        assert_relative_eq!(th2[0], -0.5 - 0.5 / 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn adagrad_zero_gradient() {
        let cfg = OptimizerConfig::defaults_for(OptimizerKind::AdaGrad);
        let mut st = OptimizerState::new(1);
        st.v = s(3.0);
        assert_eq!(adagrad_step(&mut st, &cfg, &s(0.4), &s(0.0), 1.0).unwrap(), s(0.4));
        assert_eq!(st.v, s(3.0));
    }

    #[test]
    fn rmsprop_examples() {
        let cfg = OptimizerConfig { beta2: 0.0, epsilon: 0.0, ..OptimizerConfig::defaults_for(OptimizerKind::RmsProp) };
        let mut st = OptimizerState::new(3);
        let g = ParamVector::new(vec![3.0, -0.2, 7.0]).unwrap();
        let th = rmsprop_step(&mut st, &cfg, &ParamVector::zeros(3), &g, 0.1).unwrap();
        assert_eq!(th.as_slice(), &[-0.1, 0.1, -0.1]);

        let cfg = OptimizerConfig { beta2: 0.9, epsilon: 1e-8, ..cfg };
        let mut st = OptimizerState::new(1);
        let th = rmsprop_step(&mut st, &cfg, &s(0.0), &s(1.0), 0.1).unwrap();
        assert_relative_eq!(st.v[0], 0.1, max_relative = 1e-15);
        assert_relative_eq!(th[0], -0.1 / (0.1f64 + 1e-16).sqrt(), max_relative = 1e-15);

        let th = rmsprop_step(&mut st, &cfg, &s(0.5), &s(0.0), 0.1).unwrap();
        assert_eq!(th, s(0.5));
        assert_relative_eq!(st.v[0], 0.09, max_relative = 1e-15);
    }

    #[test]
    fn adam_first_step_without_bias_correction() {
        let cfg = OptimizerConfig { bias_correction: false, ..OptimizerConfig::defaults_for(OptimizerKind::Adam) };
        let mut st = OptimizerState::new(1);
        let th = adam_family_step(&mut st, &cfg, &s(0.0), &s(1.0), 0.1, false).unwrap();
        assert_relative_eq!(st.m[0], 0.1, max_relative = 1e-15);
        assert_relative_eq!(st.v[0], 0.001, max_relative = 1e-12);
        assert_relative_eq!(th[0], -0.1 * 0.1 / (0.001f64 + 1e-16).sqrt(), max_relative = 1e-12);
        assert!((th[0] + 0.3162).abs() < 1e-4);
    }

    #[test]
    fn adam_first_step_with_bias_correction() {
        let cfg = OptimizerConfig::defaults_for(OptimizerKind::Adam);
        let mut st = OptimizerState::new(1);
        let th = adam_family_step(&mut st, &cfg, &s(0.0), &s(1.0), 0.1, false).unwrap();
        assert_relative_eq!(th[0], -0.1, max_relative = 1e-7);
    }

    #[test]
    fn amsgrad_keeps_the_maximum() {
        let cfg = OptimizerConfig { beta1: 0.0, beta2: 0.0, ..OptimizerConfig::defaults_for(OptimizerKind::AmsGrad) };
        let mut st = OptimizerState::new(1);
        adam_family_step(&mut st, &cfg, &s(0.0), &s(0.5f64.sqrt()), 0.1, true).unwrap();
        assert_relative_eq!(st.v_hat[0], 0.5, max_relative = 1e-15);
        adam_family_step(&mut st, &cfg, &s(0.0), &s(0.2f64.sqrt()), 0.1, true).unwrap();
        assert_relative_eq!(st.v[0], 0.2, max_relative = 1e-15);
        assert_relative_eq!(st.v_hat[0], 0.5, max_relative = 1e-15);
    }

    #[test]
    fn adamax_examples() {
        let cfg = OptimizerConfig::defaults_for(OptimizerKind::Adamax);
        let mut st = OptimizerState::new(1);
        adamax_step(&mut st, &cfg, &s(0.0), &s(3.0), 0.1).unwrap();
        assert_eq!(st.u, s(3.0));
        for _ in 0..3 {
            adamax_step(&mut st, &cfg, &s(0.0), &s(0.0), 0.1).unwrap();
        }
        assert_relative_eq!(st.u[0], 3.0 * 0.999f64.powi(3), max_relative = 1e-15);

        let mut st = OptimizerState::new(1);
        let th = adamax_step(&mut st, &cfg, &s(0.0), &s(1.0), 0.1).unwrap();
        // m̂ = 0.1 / (1 − 0.9) = 1, u = 1
        assert_relative_eq!(th[0], -0.1 / (1.0 + 1e-8), max_relative = 1e-12);
    }

    #[test]
    fn adashift_window_one_matches_decorrelated_rmsprop() {
        let cfg = OptimizerConfig {
            beta1: 0.0,
            beta2: 0.9,
            epsilon: 1e-3,
            adashift_window: 1,
            eps_mode: EpsMode::InsideSqrt,
            ..OptimizerConfig::defaults_for(OptimizerKind::AdaShift)
        };
        let mut st = OptimizerState::new(1);
        let th = adashift_step(&mut st, &cfg, &s(0.0), &s(2.0), 0.1).unwrap();
        assert_eq!(th, s(0.0));
        let th = adashift_step(&mut st, &cfg, &th, &s(-1.0), 0.1).unwrap();
        let expected = 0.1 * 1.0 / (0.1f64 * 4.0 + 1e-6).sqrt();
        assert_relative_eq!(th[0], expected, max_relative = 1e-14);
        // next step: v absorbs g_{t−1} = −1
        let th2 = adashift_step(&mut st, &cfg, &th, &s(3.0), 0.1).unwrap();
        let v = 0.9 * 0.4 + 0.1 * 1.0;
        assert_relative_eq!(th2[0], th[0] - 0.1 * 3.0 / (v + 1e-6f64).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn adashift_truncated_momentum() {
        let cfg = OptimizerConfig {
            beta1: 0.9,
            adashift_window: 2,
            ..OptimizerConfig::defaults_for(OptimizerKind::AdaShift)
        };
        let mut st = OptimizerState::new(1);
        let mut th = s(0.0);
        for (i, g) in [5.0, 1.0].into_iter().enumerate() {
            th = adashift_step(&mut st, &cfg, &th, &s(g), 0.1).unwrap();
            assert_eq!(th, s(0.0), "warm-up step {i} moved θ");
        }
        adashift_step(&mut st, &cfg, &th, &s(2.0), 0.1).unwrap();
        // buffer [g_{t−1}, g_t] = [1, 2]
        assert_relative_eq!(st.m[0], (2.0 + 0.9 * 1.0) / 1.9, max_relative = 1e-15);
        assert_eq!(st.grad_buffer.len(), 2);
    }
}
