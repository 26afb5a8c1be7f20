//! Stochastic gradient oracles for the analytic test problems, box projection
//! and finite-sum sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::exec::{map_range, Parallelism};
use crate::harness::rng::{rng_stream, LabRng};
use crate::vectors::ParamVector;

/// Coordinate-wise feasible interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    pub lo: f64,
    pub hi: f64,
}

impl FeasibleBox {
    pub const UNIT: FeasibleBox = FeasibleBox { lo: -1.0, hi: 1.0 };

    pub fn contains(&self, theta: &ParamVector) -> bool {
        theta.iter().all(|&x| self.lo <= x && x <= self.hi)
    }
}

/// Clamp every coordinate into the box.
pub fn project(theta: &ParamVector, feasible: FeasibleBox) -> ParamVector {
    debug_assert!(feasible.lo <= feasible.hi);
    theta.map(|x| x.clamp(feasible.lo, feasible.hi))
}

/// A stochastic problem: sample gradients at a query point.
pub trait GradientOracle: Send {
    fn dim(&self) -> usize;

    fn sample(&mut self, theta: &ParamVector, rng: &mut LabRng) -> Result<ParamVector>;

    fn true_gradient(&self, _theta: &ParamVector) -> Option<ParamVector> {
        None
    }

    fn loss(&self, _theta: &ParamVector) -> Option<f64> {
        None
    }

    fn feasible_box(&self) -> Option<FeasibleBox> {
        None
    }

    /// Whether `E[sample(θ)] = true_gradient(θ)`.
    fn is_unbiased(&self) -> bool {
        true
    }
}

fn check_dim(expected: usize, theta: &ParamVector) -> Result<()> {
    if theta.dim() != expected {
        return Err(LabError::DimensionMismatch { expected, got: theta.dim() });
    }
    Ok(())
}

/// Gradient of the online counterexample `f_t(θ) = Cθ` if `t mod 3 = 1`,
/// `−θ` otherwise.
pub fn reddi_online_grad(t: u64, c: f64) -> f64 {
    debug_assert!(t >= 1);
    if t % 3 == 1 {
        c
    } else {
        -1.0
    }
}

/// Online linear counterexample on `[−1, 1]`; the optimum is `θ = −1`.
#[derive(Debug, Clone)]
pub struct ReddiOnline {
    c: f64,
    t: u64,
}

impl ReddiOnline {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_nan() || c <= 2.0 {
            return Err(LabError::config("C", format!("{c} must exceed 2")));
        }
        Ok(ReddiOnline { c, t: 0 })
    }
}

impl GradientOracle for ReddiOnline {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&mut self, theta: &ParamVector, _rng: &mut LabRng) -> Result<ParamVector> {
        check_dim(1, theta)?;
        self.t += 1;
        Ok(ParamVector::scalar(reddi_online_grad(self.t, self.c)))
    }

    /// Gradient of the cycle average `(C − 2)/3 · θ`.
    fn true_gradient(&self, _theta: &ParamVector) -> Option<ParamVector> {
        Some(ParamVector::scalar((self.c - 2.0) / 3.0))
    }

    fn loss(&self, theta: &ParamVector) -> Option<f64> {
        Some((self.c - 2.0) / 3.0 * theta[0])
    }

    fn feasible_box(&self) -> Option<FeasibleBox> {
        Some(FeasibleBox::UNIT)
    }
}

/// One draw of the toy gradient: `k²` with probability `1/k`, else `−k`.
/// Uses a single uniform comparison per draw.
pub fn toy_stochastic_grad(k: f64, rng: &mut LabRng) -> f64 {
    debug_assert!(k >= 1.0);
    let u: f64 = rng.gen();
    if u < 1.0 / k {
        k * k
    } else {
        -k
    }
}

/// `f(θ) = θ` on `[−1, 1]` seen through the heavy-tailed two-point gradient.
/// The true gradient is 1 for every `k` and `E[g²] = k³ + k² − k`.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    k: f64,
}

impl ToyProblem {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(LabError::config("k", format!("{k} must be at least 1")));
        }
        Ok(ToyProblem { k })
    }

    pub fn second_moment(&self) -> f64 {
        let k = self.k;
        k * k * k + k * k - k
    }
}

impl GradientOracle for ToyProblem {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&mut self, theta: &ParamVector, rng: &mut LabRng) -> Result<ParamVector> {
        check_dim(1, theta)?;
        Ok(ParamVector::scalar(toy_stochastic_grad(self.k, rng)))
    }

    fn true_gradient(&self, _theta: &ParamVector) -> Option<ParamVector> {
        Some(ParamVector::scalar(1.0))
    }

    fn loss(&self, theta: &ParamVector) -> Option<f64> {
        Some(theta[0])
    }

    fn feasible_box(&self) -> Option<FeasibleBox> {
        Some(FeasibleBox::UNIT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// Independent uniform draws.
    #[serde(rename = "with", alias = "with-replacement")]
    WithReplacement,
    /// A fresh uniform permutation of the components every epoch.
    #[serde(rename = "without", alias = "without-replacement")]
    WithoutReplacement,
}

impl SamplingMode {
    pub fn label(self) -> &'static str {
        match self {
            SamplingMode::WithReplacement => "with",
            SamplingMode::WithoutReplacement => "without",
        }
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with" | "with-replacement" => Ok(SamplingMode::WithReplacement),
            "without" | "without-replacement" => Ok(SamplingMode::WithoutReplacement),
            _ => Err(LabError::UnknownName { kind: "sampling mode", name: s.to_string() }),
        }
    }
}

/// Index sampler over `n` finite-sum components.
#[derive(Debug, Clone)]
pub struct ComponentSampler {
    n: usize,
    mode: SamplingMode,
    epoch: Vec<usize>,
    cursor: usize,
}

impl ComponentSampler {
    pub fn new(n: usize, mode: SamplingMode) -> Self {
        assert!(n >= 1, "need at least one component");
        ComponentSampler { n, mode, epoch: (0..n).collect(), cursor: n }
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn next_index(&mut self, rng: &mut LabRng) -> usize {
        match self.mode {
            SamplingMode::WithReplacement => rng.gen_range(0..self.n),
            SamplingMode::WithoutReplacement => {
                if self.cursor == self.n {
                    self.epoch.shuffle(rng);
                    self.cursor = 0;
                }
                let i = self.epoch[self.cursor];
                self.cursor += 1;
                i
            }
        }
    }
}

/// Component gradients of the shuffling counterexample `f = Σ f_i` with
/// `f₁ = 1.9θ`, `f₂ = f₃ = −θ`.
pub const SHUFFLE_COMPONENTS: [f64; 3] = [1.9, -1.0, -1.0];

/// Next component gradient of the finite sum under `sampler`'s mode.
pub fn finite_sum_shuffle_grad(sampler: &mut ComponentSampler, rng: &mut LabRng) -> f64 {
    SHUFFLE_COMPONENTS[sampler.next_index(rng)]
}

/// Shuffling counterexample on `[−1, 1]`; `∇f = −0.1`, so the optimum is
/// `θ = 1`. Without-replacement draws are biased, hence not declared
/// unbiased.
#[derive(Debug, Clone)]
pub struct FiniteSumShuffle {
    sampler: ComponentSampler,
}

impl FiniteSumShuffle {
    pub fn new(mode: SamplingMode) -> Self {
        FiniteSumShuffle { sampler: ComponentSampler::new(SHUFFLE_COMPONENTS.len(), mode) }
    }

    pub fn mode(&self) -> SamplingMode {
        self.sampler.mode()
    }
}

impl GradientOracle for FiniteSumShuffle {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&mut self, theta: &ParamVector, rng: &mut LabRng) -> Result<ParamVector> {
        check_dim(1, theta)?;
        Ok(ParamVector::scalar(finite_sum_shuffle_grad(&mut self.sampler, rng)))
    }

    fn true_gradient(&self, _theta: &ParamVector) -> Option<ParamVector> {
        Some(ParamVector::scalar(SHUFFLE_COMPONENTS.iter().sum()))
    }

    fn loss(&self, theta: &ParamVector) -> Option<f64> {
        Some(SHUFFLE_COMPONENTS.iter().sum::<f64>() * theta[0])
    }

    fn feasible_box(&self) -> Option<FeasibleBox> {
        Some(FeasibleBox::UNIT)
    }

    fn is_unbiased(&self) -> bool {
        false
    }
}

/// Expected per-step normalized update `−g_t / max{|g_{t−1}|, ε}` of ADOPT
/// with `β₁ = β₂ = 0` on a finite sum, by exhaustive enumeration of every
/// consecutive gradient pair and its probability under `mode`.
///
/// For without-replacement sampling, each step's predecessor is either the
/// previous element of the same permutation or the last element of the
/// previous (independent) permutation; all `n!²` permutation pairs are
/// enumerated.
pub fn adopt_drift_enumeration(components: &[f64], mode: SamplingMode, eps: f64) -> f64 {
    let n = components.len();
    let update = |prev: f64, cur: f64| -cur / prev.abs().max(eps);
    match mode {
        SamplingMode::WithReplacement => {
            let mut total = 0.0;
            for &prev in components {
                for &cur in components {
                    total += update(prev, cur);
                }
            }
            total / (n * n) as f64
        }
        SamplingMode::WithoutReplacement => {
            let perms = permutations(n);
            let mut total = 0.0;
            for a in &perms {
                for b in &perms {
                    let mut prev = components[a[n - 1]];
                    for &i in b {
                        total += update(prev, components[i]);
                        prev = components[i];
                    }
                }
            }
            total / (perms.len() * perms.len() * n) as f64
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `f(θ) = Σ log(1 + θ_i²)` with uniform `[−σ, σ]` gradient noise. Its
/// gradient is bounded by `1 + σ` per coordinate.
#[derive(Debug, Clone)]
pub struct SmoothNonconvex {
    dim: usize,
    sigma: f64,
}

impl SmoothNonconvex {
    pub fn new(dim: usize, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::config("dim", "must be at least 1"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(LabError::config("sigma", format!("{sigma} must be nonnegative")));
        }
        Ok(SmoothNonconvex { dim, sigma })
    }

    fn exact_gradient(theta: &ParamVector) -> ParamVector {
        theta.map(|x| 2.0 * x / (1.0 + x * x))
    }
}

pub fn smooth_nonconvex_grad(theta: &ParamVector, sigma: f64, rng: &mut LabRng) -> ParamVector {
    let exact = SmoothNonconvex::exact_gradient(theta);
    if sigma == 0.0 {
        return exact;
    }
    let noisy = exact.iter().map(|g| g + rng.gen_range(-sigma..=sigma)).collect();
    ParamVector::new(noisy).expect("dimension preserved")
}

impl GradientOracle for SmoothNonconvex {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&mut self, theta: &ParamVector, rng: &mut LabRng) -> Result<ParamVector> {
        check_dim(self.dim, theta)?;
        Ok(smooth_nonconvex_grad(theta, self.sigma, rng))
    }

    fn true_gradient(&self, theta: &ParamVector) -> Option<ParamVector> {
        Some(SmoothNonconvex::exact_gradient(theta))
    }

    fn loss(&self, theta: &ParamVector) -> Option<f64> {
        Some(theta.iter().map(|x| (1.0 + x * x).ln()).sum())
    }
}

/// Per-coordinate Monte Carlo estimates of `E[g]` and `E[g²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMoments {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    /// Standard error of each mean estimate.
    pub std_error: Vec<f64>,
}

const MOMENT_CHUNKS: usize = 64;

/// Draw `samples` gradients at `theta` from clones of `oracle`. Work is split
/// into fixed chunks with their own streams, so the estimate depends only on
/// `seed`, never on `parallelism`.
pub fn gradient_moments<O>(
    oracle: &O,
    theta: &ParamVector,
    samples: usize,
    seed: u64,
    parallelism: Parallelism,
) -> Result<GradientMoments>
where
    O: GradientOracle + Clone + Sync,
{
    let dim = oracle.dim();
    let chunks = MOMENT_CHUNKS.min(samples.max(1));
    let partial = map_range(chunks, parallelism, |c| -> Result<(Vec<f64>, Vec<f64>)> {
        let n = samples / chunks + usize::from(c < samples % chunks);
        let mut local = oracle.clone();
        let mut rng = rng_stream(seed, c as u64);
        let (mut sum, mut sum_sq) = (vec![0.0; dim], vec![0.0; dim]);
        for _ in 0..n {
            let g = local.sample(theta, &mut rng)?;
            for (i, &x) in g.iter().enumerate() {
                sum[i] += x;
                sum_sq[i] += x * x;
            }
        }
        Ok((sum, sum_sq))
    });
    let (mut sum, mut sum_sq) = (vec![0.0; dim], vec![0.0; dim]);
    for chunk in partial {
        let (s, q) = chunk?;
        for i in 0..dim {
            sum[i] += s[i];
            sum_sq[i] += q[i];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let second_moment: Vec<f64> = sum_sq.iter().map(|q| q / n).collect();
    let std_error = mean
        .iter()
        .zip(&second_moment)
        .map(|(m, q)| ((q - m * m).max(0.0) / n).sqrt())
        .collect();
    Ok(GradientMoments { samples, mean, second_moment, std_error })
}
