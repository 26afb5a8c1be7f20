//! Optimizer invariant checks shared by the property suite and the
//! acceptance gate.

#![allow(dead_code)]

use adopt_lab::harness::{clip_at, ClipSchedule};
use adopt_lab::optimizers::{EpsMode, MomentumInit, Optimizer, OptimizerConfig, OptimizerKind, WeightDecayMode};
use adopt_lab::ParamVector;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub type Check = std::result::Result<(), TestCaseError>;

/// `len` gradients of dimension `dim` with entries in `[-100, 100]`.
pub fn gradient_stream() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4, 1usize..=60)
        .prop_flat_map(|(dim, len)| prop::collection::vec(prop::collection::vec(-100.0f64..100.0, dim), len))
}

/// Like [`gradient_stream`] but with every magnitude in `[0.1, 10]`, so that
/// ε = 0 never meets an exactly zero second moment.
pub fn nonzero_gradient_stream() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4, 2usize..=60).prop_flat_map(|(dim, len)| {
        prop::collection::vec(
            prop::collection::vec((0.1f64..10.0, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m }), dim),
            len,
        )
    })
}

fn pv(x: &[f64]) -> ParamVector {
    ParamVector::new(x.to_vec()).unwrap()
}

/// Drive `opt` through `grads` at constant `lr`, calling `inspect` after each
/// update with the new iterate.
fn drive(
    opt: &mut Optimizer,
    grads: &[Vec<f64>],
    lr: f64,
    clip: &ClipSchedule,
    mut inspect: impl FnMut(&Optimizer, &ParamVector) -> Check,
) -> std::result::Result<Vec<ParamVector>, TestCaseError> {
    let mut theta = ParamVector::zeros(grads[0].len());
    let mut out = Vec::with_capacity(grads.len());
    let mut t = 0;
    for g in grads {
        if opt.needs_init_gradient() {
            theta = opt.step(&theta, &pv(g), lr, f64::INFINITY).map_err(|e| TestCaseError::fail(e.to_string()))?;
            continue;
        }
        t += 1;
        theta = opt.step(&theta, &pv(g), lr, clip_at(clip, t)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        inspect(opt, &theta)?;
        out.push(theta.clone());
    }
    Ok(out)
}

pub fn amsgrad_vhat_monotone(grads: &[Vec<f64>]) -> Check {
    let mut opt = Optimizer::with_defaults(OptimizerKind::AmsGrad, grads[0].len()).unwrap();
    let mut prev = ParamVector::zeros(grads[0].len());
    drive(&mut opt, grads, 0.01, &ClipSchedule::NoClip, |o, _| {
        let s = o.state();
        for i in 0..prev.dim() {
            prop_assert!(s.v_hat[i] >= prev[i], "v̂ decreased at {i}");
            prop_assert!(s.v_hat[i] >= s.v[i]);
        }
        prev = s.v_hat.clone();
        Ok(())
    })?;
    Ok(())
}

pub fn adagrad_v_monotone(grads: &[Vec<f64>]) -> Check {
    let mut opt = Optimizer::with_defaults(OptimizerKind::AdaGrad, grads[0].len()).unwrap();
    let mut prev = ParamVector::zeros(grads[0].len());
    drive(&mut opt, grads, 0.01, &ClipSchedule::NoClip, |o, _| {
        for i in 0..prev.dim() {
            prop_assert!(o.state().v[i] >= prev[i]);
        }
        prev = o.state().v.clone();
        Ok(())
    })?;
    Ok(())
}

/// Largest relative deviation between the trajectories driven by `g` and
/// `s·g` for ADOPT with ε = 0 and `√(v + ε²)`.
pub fn adopt_scale_deviation(grads: &[Vec<f64>], s: f64, m_init: MomentumInit) -> std::result::Result<f64, TestCaseError> {
    let config = OptimizerConfig {
        epsilon: 0.0,
        eps_mode: EpsMode::InsideSqrt,
        m_init,
        ..OptimizerConfig::defaults_for(OptimizerKind::Adopt)
    };
    let scaled: Vec<Vec<f64>> = grads.iter().map(|g| g.iter().map(|x| s * x).collect()).collect();
    let dim = grads[0].len();
    let mut a = Optimizer::new(OptimizerKind::Adopt, config, dim).unwrap();
    let mut b = Optimizer::new(OptimizerKind::Adopt, config, dim).unwrap();
    let ta = drive(&mut a, grads, 0.1, &ClipSchedule::NoClip, |_, _| Ok(()))?;
    let tb = drive(&mut b, &scaled, 0.1, &ClipSchedule::NoClip, |_, _| Ok(()))?;
    let mut worst: f64 = 0.0;
    for (x, y) in ta.iter().zip(&tb) {
        let diff = x.sub(y).unwrap().norm2();
        worst = worst.max(diff / x.norm2().max(1e-300));
    }
    Ok(worst)
}

pub fn adopt_scale_invariant(grads: &[Vec<f64>]) -> Check {
    for m_init in [MomentumInit::FullFirstStep, MomentumInit::ZeroInit] {
        for s in [1e-3, 1e3] {
            let dev = adopt_scale_deviation(grads, s, m_init)?;
            prop_assert!(dev < 1e-9, "s = {s}, {m_init:?}: deviation {dev:e}");
        }
    }
    Ok(())
}

pub fn clipped_infinite_equals_zero_init(grads: &[Vec<f64>]) -> Check {
    let dim = grads[0].len();
    let zero_init = OptimizerConfig {
        m_init: MomentumInit::ZeroInit,
        ..OptimizerConfig::defaults_for(OptimizerKind::Adopt)
    };
    let mut vanilla = Optimizer::new(OptimizerKind::Adopt, zero_init, dim).unwrap();
    let mut clipped = Optimizer::new(OptimizerKind::AdoptClipped, zero_init, dim).unwrap();
    let a = drive(&mut vanilla, grads, 0.05, &ClipSchedule::NoClip, |_, _| Ok(()))?;
    let b = drive(&mut clipped, grads, 0.05, &ClipSchedule::NoClip, |_, _| Ok(()))?;
    for (x, y) in a.iter().zip(&b) {
        let bits = |v: &ParamVector| v.iter().map(|e| e.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(x), bits(y));
    }
    prop_assert_eq!(vanilla.state(), clipped.state());
    Ok(())
}

pub fn clip_bound_holds(grads: &[Vec<f64>], c: f64) -> Check {
    let dim = grads[0].len();
    let schedule = ClipSchedule::PowerQuarter(c);
    let mut opt = Optimizer::with_defaults(OptimizerKind::AdoptClipped, dim).unwrap();
    let mut t = 0;
    drive(&mut opt, grads, 0.05, &schedule, |o, _| {
        t += 1;
        let bound = clip_at(&schedule, t);
        prop_assert!(o.state().m.power_norm(f64::INFINITY) <= bound * (1.0 + 1e-12));
        Ok(())
    })?;
    Ok(())
}

/// Replays ADOPT beside a shadow recurrence that snapshots `v` before each
/// gradient is incorporated and checks the realized update against it.
pub fn adopt_denominator_is_stale(grads: &[Vec<f64>], beta1: f64, beta2: f64) -> Check {
    let dim = grads[0].len();
    let config = OptimizerConfig { beta1, beta2, ..OptimizerConfig::defaults_for(OptimizerKind::Adopt) };
    let mut opt = Optimizer::new(OptimizerKind::Adopt, config, dim).unwrap();
    let mut theta = ParamVector::zeros(dim);
    let lr = 0.05;
    theta = opt.step(&theta, &pv(&grads[0]), lr, f64::INFINITY).unwrap();
    let mut first = true;
    let mut m = vec![0.0; dim];
    for g in &grads[1..] {
        let v_before = opt.state().v.clone();
        let next = opt.step(&theta, &pv(g), lr, f64::INFINITY).unwrap();
        for i in 0..dim {
            let normalized = g[i] / v_before[i].sqrt().max(config.epsilon);
            m[i] = if first { normalized } else { beta1 * m[i] + (1.0 - beta1) * normalized };
            let expected = theta[i] - lr * m[i];
            prop_assert!(
                (next[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                "coordinate {i}: {} vs {expected}",
                next[i]
            );
            let v_after = beta2 * v_before[i] + (1.0 - beta2) * g[i] * g[i];
            prop_assert!((opt.state().v[i] - v_after).abs() <= 1e-12 * v_after.max(1.0));
        }
        first = false;
        theta = next;
    }
    Ok(())
}

pub fn zero_gradient_fixed_point(theta0: &[f64], steps: usize) -> Check {
    for kind in OptimizerKind::ALL {
        let config = OptimizerConfig {
            weight_decay: 0.0,
            wd_mode: WeightDecayMode::None,
            ..OptimizerConfig::defaults_for(kind)
        };
        let mut opt = Optimizer::new(kind, config, theta0.len()).unwrap();
        let zero = ParamVector::zeros(theta0.len());
        let mut theta = pv(theta0);
        if opt.needs_init_gradient() {
            theta = opt.step(&theta, &zero, 0.1, f64::INFINITY).unwrap();
        }
        for t in 1..=steps as u64 {
            theta = opt.step(&theta, &zero, 0.1, clip_at(&ClipSchedule::default(), t)).unwrap();
        }
        prop_assert_eq!(theta.as_slice(), theta0, "{} moved", kind);
    }
    Ok(())
}

/// Runs `check` over `cases` generated inputs with a fixed seed.
pub fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Check,
) -> std::result::Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, check).map_err(|e| e.to_string())
}
