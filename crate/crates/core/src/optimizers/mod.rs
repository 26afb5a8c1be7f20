//! First-order update rules sharing one interface: take the gradient sampled
//! at the current iterate and return the next iterate.
//!
//! Each rule is a free function over an [`OptimizerState`] and an
//! [`OptimizerConfig`]; [`Optimizer`] bundles the three and dispatches on
//! [`OptimizerKind`]. All step functions reject mismatched dimensions and
//! abort with [`LabError::NonFinite`] as soon as a NaN or infinity appears in
//! the iterate or the moment estimates.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::vectors::ParamVector;

mod adopt;
mod classic;

pub use adopt::{adopt_ablation_step, adopt_clipped_step, adopt_step, AblationVariant};
pub use classic::{
    adagrad_step, adam_family_step, adamax_step, adashift_step, rmsprop_step, sgd_step,
};

/// How `ε` enters the normalizing denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsMode {
    /// `max{√v, ε}`
    MaxFloor,
    /// `√(v + ε²)`
    InsideSqrt,
}

/// Momentum initialization for ADOPT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumInit {
    /// The first update sets `m₁` to the full normalized gradient.
    FullFirstStep,
    /// `m₀ = 0` and the first update is an ordinary EMA step.
    ZeroInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDecayMode {
    None,
    /// `λθ` is added to the gradient before the update rule sees it.
    Coupled,
    /// `θ ← θ − lr·λ·θ` is applied next to the adaptive update.
    Decoupled,
}

macro_rules! string_enum {
    ($ty:ident, $kind:literal, { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = LabError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(LabError::UnknownName { kind: $kind, name: s.to_string() }),
                }
            }
        }
    };
}

string_enum!(EpsMode, "eps mode", { MaxFloor => "max-floor", InsideSqrt => "inside-sqrt" });
string_enum!(MomentumInit, "momentum init", { FullFirstStep => "full-first-step", ZeroInit => "zero-init" });
string_enum!(WeightDecayMode, "weight decay mode", {
    None => "none",
    Coupled => "coupled",
    Decoupled => "decoupled",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OptimizerKind {
    Sgd,
    AdaGrad,
    RmsProp,
    Adam,
    AmsGrad,
    AdamW,
    Adamax,
    AdaShift,
    Adopt,
    AdoptClipped,
    AdoptDecorrelateOnly,
    AdoptChangeOrderOnly,
}

string_enum!(OptimizerKind, "optimizer", {
    Sgd => "sgd",
    AdaGrad => "adagrad",
    RmsProp => "rmsprop",
    Adam => "adam",
    AmsGrad => "amsgrad",
    AdamW => "adamw",
    Adamax => "adamax",
    AdaShift => "adashift",
    Adopt => "adopt",
    AdoptClipped => "adopt-clipped",
    AdoptDecorrelateOnly => "adopt-decorrelate",
    AdoptChangeOrderOnly => "adopt-change-order",
});

impl TryFrom<String> for OptimizerKind {
    type Error = LabError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OptimizerKind> for String {
    fn from(k: OptimizerKind) -> String {
        k.name().to_string()
    }
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 12] = [
        OptimizerKind::Sgd,
        OptimizerKind::AdaGrad,
        OptimizerKind::RmsProp,
        OptimizerKind::Adam,
        OptimizerKind::AmsGrad,
        OptimizerKind::AdamW,
        OptimizerKind::Adamax,
        OptimizerKind::AdaShift,
        OptimizerKind::Adopt,
        OptimizerKind::AdoptClipped,
        OptimizerKind::AdoptDecorrelateOnly,
        OptimizerKind::AdoptChangeOrderOnly,
    ];

    /// ADOPT and its ablations consume one gradient at `θ₀` to seed `v₀`.
    pub fn needs_init_gradient(self) -> bool {
        matches!(
            self,
            OptimizerKind::Adopt
                | OptimizerKind::AdoptClipped
                | OptimizerKind::AdoptDecorrelateOnly
                | OptimizerKind::AdoptChangeOrderOnly
        )
    }

    pub fn uses_clipping(self) -> bool {
        self == OptimizerKind::AdoptClipped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub eps_mode: EpsMode,
    /// Adam family only.
    pub bias_correction: bool,
    /// ADOPT only.
    pub m_init: MomentumInit,
    pub weight_decay: f64,
    pub wd_mode: WeightDecayMode,
    /// AdaShift window `n`.
    pub adashift_window: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eps_mode: EpsMode::InsideSqrt,
            bias_correction: true,
            m_init: MomentumInit::ZeroInit,
            weight_decay: 0.0,
            wd_mode: WeightDecayMode::None,
            adashift_window: 10,
        }
    }
}

impl OptimizerConfig {
    /// Conventional defaults for each rule. ADOPT variants use β₂ = 0.9999,
    /// ε = 1e-6 and the `max{√v, ε}` floor.
    pub fn defaults_for(kind: OptimizerKind) -> Self {
        let base = OptimizerConfig::default();
        match kind {
            OptimizerKind::Sgd => OptimizerConfig { beta1: 0.0, ..base },
            OptimizerKind::AdaGrad => OptimizerConfig { beta1: 0.0, epsilon: 1e-10, ..base },
            OptimizerKind::RmsProp => OptimizerConfig { beta1: 0.0, beta2: 0.99, ..base },
            OptimizerKind::Adam | OptimizerKind::AmsGrad | OptimizerKind::Adamax => base,
            OptimizerKind::AdamW => OptimizerConfig {
                weight_decay: 1e-2,
                wd_mode: WeightDecayMode::Decoupled,
                ..base
            },
            OptimizerKind::AdaShift => OptimizerConfig { bias_correction: false, ..base },
            OptimizerKind::Adopt => OptimizerConfig {
                beta2: 0.9999,
                epsilon: 1e-6,
                eps_mode: EpsMode::MaxFloor,
                bias_correction: false,
                m_init: MomentumInit::FullFirstStep,
                ..base
            },
            OptimizerKind::AdoptClipped
            | OptimizerKind::AdoptDecorrelateOnly
            | OptimizerKind::AdoptChangeOrderOnly => OptimizerConfig {
                beta2: 0.9999,
                epsilon: 1e-6,
                eps_mode: EpsMode::MaxFloor,
                bias_correction: false,
                m_init: MomentumInit::ZeroInit,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(LabError::config("beta1", format!("{} is outside [0, 1)", self.beta1)));
        }
        if !(0.0..=1.0).contains(&self.beta2) {
            return Err(LabError::config("beta2", format!("{} is outside [0, 1]", self.beta2)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(LabError::config("eps", format!("{} must be finite and nonnegative", self.epsilon)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(LabError::config(
                "weight_decay",
                format!("{} must be finite and nonnegative", self.weight_decay),
            ));
        }
        if self.adashift_window == 0 {
            return Err(LabError::config("adashift_window", "must be at least 1"));
        }
        Ok(())
    }

    /// Normalizing denominator for the configured ε convention.
    pub(crate) fn denominator(&self, v: &ParamVector) -> ParamVector {
        match self.eps_mode {
            EpsMode::MaxFloor => v.sqrt().max_scalar(self.epsilon),
            EpsMode::InsideSqrt => v.add_scalar(self.epsilon * self.epsilon).sqrt(),
        }
    }
}

/// Mutable per-run optimizer state. `t` counts gradients consumed by update
/// steps; ADOPT's `v₀` seeding call does not advance it.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub t: u64,
    pub m: ParamVector,
    pub v: ParamVector,
    /// AMSGrad running maximum of `v`.
    pub v_hat: ParamVector,
    /// Adamax infinity-norm accumulator.
    pub u: ParamVector,
    /// AdaShift FIFO of recent gradients, oldest first.
    pub grad_buffer: VecDeque<ParamVector>,
    pub v0_initialized: bool,
    pub momentum_started: bool,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        OptimizerState {
            t: 0,
            m: ParamVector::zeros(dim),
            v: ParamVector::zeros(dim),
            v_hat: ParamVector::zeros(dim),
            u: ParamVector::zeros(dim),
            grad_buffer: VecDeque::new(),
            v0_initialized: false,
            momentum_started: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    fn is_finite(&self) -> bool {
        self.m.is_finite()
            && self.v.is_finite()
            && self.v_hat.is_finite()
            && self.u.is_finite()
            && self.grad_buffer.iter().all(ParamVector::is_finite)
    }
}

/// Shared entry checks: dimensions agree and coupled weight decay is folded
/// into the gradient.
pub(crate) fn prepare_gradient(
    state: &OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    g: &ParamVector,
) -> Result<ParamVector> {
    for dim in [theta.dim(), g.dim()] {
        if dim != state.dim() {
            return Err(LabError::DimensionMismatch { expected: state.dim(), got: dim });
        }
    }
    match cfg.wd_mode {
        WeightDecayMode::Coupled if cfg.weight_decay > 0.0 => g.lincomb(1.0, theta, cfg.weight_decay),
        _ => Ok(g.clone()),
    }
}

/// Shared exit: decoupled weight decay and the non-finite abort.
pub(crate) fn finish_step(
    state: &OptimizerState,
    cfg: &OptimizerConfig,
    theta: &ParamVector,
    next: ParamVector,
    lr: f64,
) -> Result<ParamVector> {
    let next = match cfg.wd_mode {
        WeightDecayMode::Decoupled if cfg.weight_decay > 0.0 => {
            next.lincomb(1.0, theta, -lr * cfg.weight_decay)?
        }
        _ => next,
    };
    if !state.is_finite() {
        return Err(LabError::NonFinite { what: "optimizer state", step: state.t });
    }
    if !next.is_finite() {
        return Err(LabError::NonFinite { what: "parameters", step: state.t });
    }
    Ok(next)
}

/// An update rule together with its hyperparameters and state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, config: OptimizerConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(LabError::EmptyVector);
        }
        Ok(Optimizer { kind, config, state: OptimizerState::new(dim) })
    }

    pub fn with_defaults(kind: OptimizerKind, dim: usize) -> Result<Self> {
        Self::new(kind, OptimizerConfig::defaults_for(kind), dim)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// True until ADOPT-style optimizers have seen their `g₀`.
    pub fn needs_init_gradient(&self) -> bool {
        self.kind.needs_init_gradient() && !self.state.v0_initialized
    }

    /// Advance one step. `clip` is the bound `c_t` and is only read by the
    /// clipped ADOPT rule.
    pub fn step(&mut self, theta: &ParamVector, g: &ParamVector, lr: f64, clip: f64) -> Result<ParamVector> {
        let (s, c) = (&mut self.state, &self.config);
        match self.kind {
            OptimizerKind::Sgd => sgd_step(s, c, theta, g, lr),
            OptimizerKind::AdaGrad => adagrad_step(s, c, theta, g, lr),
            OptimizerKind::RmsProp => rmsprop_step(s, c, theta, g, lr),
            OptimizerKind::Adam | OptimizerKind::AdamW => adam_family_step(s, c, theta, g, lr, false),
            OptimizerKind::AmsGrad => adam_family_step(s, c, theta, g, lr, true),
            OptimizerKind::Adamax => adamax_step(s, c, theta, g, lr),
            OptimizerKind::AdaShift => adashift_step(s, c, theta, g, lr),
            OptimizerKind::Adopt => adopt_step(s, c, theta, g, lr),
            OptimizerKind::AdoptClipped => adopt_clipped_step(s, c, theta, g, lr, clip),
            OptimizerKind::AdoptDecorrelateOnly => {
                adopt_ablation_step(s, c, theta, g, lr, AblationVariant::DecorrelateOnly)
            }
            OptimizerKind::AdoptChangeOrderOnly => {
                adopt_ablation_step(s, c, theta, g, lr, AblationVariant::ChangeOrderOnly)
            }
        }
    }
}
