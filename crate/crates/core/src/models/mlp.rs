//! One-hidden-layer ReLU perceptron with softmax cross-entropy and manual
//! backpropagation.
//!
//! Parameters live in a single flat [`ParamVector`] laid out as
//! `W₁ (hidden × input, row-major) | b₁ | W₂ (output × hidden) | b₂`.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{LabError, Result};
use crate::exec::{map_range, Parallelism};
use crate::harness::rng::{rng_stream, LabRng};
use crate::problems::{ComponentSampler, GradientOracle, SamplingMode};
use crate::vectors::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(LabError::config("mlp", "layer sizes must be positive"));
        }
        Ok(MlpSpec { input_dim, hidden_dim, output_dim })
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.hidden_dim + self.hidden_dim + self.hidden_dim * self.output_dim + self.output_dim
    }

    pub fn w1(&self) -> Range<usize> {
        0..self.input_dim * self.hidden_dim
    }

    pub fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden_dim
    }

    pub fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden_dim * self.output_dim
    }

    pub fn b2(&self) -> Range<usize> {
        let s = self.w2().end;
        s..s + self.output_dim
    }

    fn check(&self, params: &ParamVector, data: &Dataset) -> Result<()> {
        if params.dim() != self.param_count() {
            return Err(LabError::DimensionMismatch { expected: self.param_count(), got: params.dim() });
        }
        if data.input_dim() != self.input_dim {
            return Err(LabError::DimensionMismatch { expected: self.input_dim, got: data.input_dim() });
        }
        if data.num_classes() != self.output_dim {
            return Err(LabError::DimensionMismatch { expected: self.output_dim, got: data.num_classes() });
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init(spec: &MlpSpec, seed: u64) -> ParamVector {
    let mut rng = rng_stream(seed, 0);
    let mut p = vec![0.0; spec.param_count()];
    let mut fill = |range: Range<usize>, fan_in: usize, fan_out: usize, rng: &mut LabRng| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in &mut p[range] {
            *w = rng.gen_range(-bound..=bound);
        }
    };
    fill(spec.w1(), spec.input_dim, spec.hidden_dim, &mut rng);
    fill(spec.w2(), spec.hidden_dim, spec.output_dim, &mut rng);
    ParamVector::new(p).expect("param_count is positive")
}

struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn forward(spec: &MlpSpec, p: &[f64], x: &[f64]) -> Forward {
    let (w1, b1, w2, b2) = (&p[spec.w1()], &p[spec.b1()], &p[spec.w2()], &p[spec.b2()]);
    let hidden: Vec<f64> = (0..spec.hidden_dim)
        .map(|h| {
            let row = &w1[h * spec.input_dim..(h + 1) * spec.input_dim];
            let z = b1[h] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            z.max(0.0)
        })
        .collect();
    let logits = (0..spec.output_dim)
        .map(|o| {
            let row = &w2[o * spec.hidden_dim..(o + 1) * spec.hidden_dim];
            b2[o] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>()
        })
        .collect();
    Forward { hidden, logits }
}

/// Numerically stable softmax and `−log p_label`.
fn softmax_xent(logits: &[f64], label: usize) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    (exps.into_iter().map(|e| e / sum).collect(), loss)
}

fn check_batch(data: &Dataset, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(LabError::InvalidBatch("batch is empty".into()));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= data.len()) {
        return Err(LabError::InvalidBatch(format!("sample index {i} out of range")));
    }
    Ok(())
}

/// Mean softmax cross-entropy over `batch`.
pub fn mlp_loss(spec: &MlpSpec, params: &ParamVector, data: &Dataset, batch: &[usize]) -> Result<f64> {
    spec.check(params, data)?;
    check_batch(data, batch)?;
    let mut total = 0.0;
    for &i in batch {
        let fwd = forward(spec, params.as_slice(), data.input(i));
        total += softmax_xent(&fwd.logits, data.label(i)).1;
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(LabError::NonFinite { what: "activations", step: 0 });
    }
    Ok(loss)
}

/// Mean softmax cross-entropy over `batch` and its exact gradient.
pub fn mlp_loss_and_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    data: &Dataset,
    batch: &[usize],
) -> Result<(f64, ParamVector)> {
    spec.check(params, data)?;
    check_batch(data, batch)?;
    let p = params.as_slice();
    let w2 = &p[spec.w2()];
    let mut grad = vec![0.0; spec.param_count()];
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;

    for &i in batch {
        let x = data.input(i);
        let fwd = forward(spec, p, x);
        let (probs, loss) = softmax_xent(&fwd.logits, data.label(i));
        if !loss.is_finite() {
            return Err(LabError::NonFinite { what: "activations", step: 0 });
        }
        total += loss;

        // dL/dlogits = softmax − onehot
        let mut d_logits = probs;
        d_logits[data.label(i)] -= 1.0;

        let mut d_hidden = vec![0.0; spec.hidden_dim];
        for (o, &d) in d_logits.iter().enumerate() {
            let d = d * scale;
            grad[spec.b2().start + o] += d;
            let row = spec.w2().start + o * spec.hidden_dim;
            for h in 0..spec.hidden_dim {
                grad[row + h] += d * fwd.hidden[h];
                d_hidden[h] += d * w2[o * spec.hidden_dim + h];
            }
        }
        for (h, &dh) in d_hidden.iter().enumerate() {
            // ReLU subgradient at 0 is 0
            if fwd.hidden[h] <= 0.0 {
                continue;
            }
            grad[spec.b1().start + h] += dh;
            let row = spec.w1().start + h * spec.input_dim;
            for (j, &xj) in x.iter().enumerate() {
                grad[row + j] += dh * xj;
            }
        }
    }
    Ok((total * scale, ParamVector::new(grad).expect("param_count is positive")))
}

/// Largest relative disagreement between `grad` and central differences of
/// `f` with step `h`, measured as `|fd − g| / max(|fd|, |g|, 1e-12)`.
pub fn finite_diff_max_rel_error<F>(f: F, params: &ParamVector, grad: &ParamVector, h: f64, parallelism: Parallelism) -> f64
where
    F: Fn(&ParamVector) -> f64 + Sync + Send,
{
    debug_assert!(h > 0.0);
    let base = params.as_slice();
    let errors = map_range(params.dim(), parallelism, |i| {
        let mut plus = base.to_vec();
        let mut minus = base.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fd = (f(&ParamVector::new(plus).unwrap()) - f(&ParamVector::new(minus).unwrap())) / (2.0 * h);
        let g = grad[i];
        (fd - g).abs() / fd.abs().max(g.abs()).max(1e-12)
    });
    errors.into_iter().fold(0.0, f64::max)
}

/// Gradient check of [`mlp_loss_and_grad`] against central differences.
pub fn finite_diff_check(spec: &MlpSpec, params: &ParamVector, data: &Dataset, batch: &[usize], h: f64) -> Result<f64> {
    let (_, grad) = mlp_loss_and_grad(spec, params, data, batch)?;
    let f = |p: &ParamVector| mlp_loss(spec, p, data, batch).unwrap_or(f64::NAN);
    Ok(finite_diff_max_rel_error(f, params, &grad, h, Parallelism::Parallel))
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn predict(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> usize {
    let logits = forward(spec, params.as_slice(), x).logits;
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = c;
        }
    }
    best
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(spec: &MlpSpec, params: &ParamVector, data: &Dataset) -> Result<f64> {
    spec.check(params, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let hits = map_range(data.len(), Parallelism::Parallel, |i| {
        usize::from(predict(spec, params, data.input(i)) == data.label(i))
    });
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

/// Mini-batch gradient oracle over a shared dataset. Exposes the full-batch
/// loss and gradient as the "true" objective.
#[derive(Debug, Clone)]
pub struct MlpOracle {
    spec: MlpSpec,
    data: Arc<Dataset>,
    batch_size: usize,
    sampler: ComponentSampler,
    everything: Vec<usize>,
}

impl MlpOracle {
    pub fn new(spec: MlpSpec, data: Arc<Dataset>, batch_size: usize, sampling: SamplingMode) -> Result<Self> {
        if batch_size == 0 {
            return Err(LabError::config("batch_size", "must be positive"));
        }
        if data.is_empty() {
            return Err(LabError::InvalidBatch("dataset is empty".into()));
        }
        spec.check(&ParamVector::zeros(spec.param_count()), &data)?;
        let everything = (0..data.len()).collect();
        let sampler = ComponentSampler::new(data.len(), sampling);
        Ok(MlpOracle { spec, data, batch_size, sampler, everything })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }
}

impl GradientOracle for MlpOracle {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn sample(&mut self, theta: &ParamVector, rng: &mut LabRng) -> Result<ParamVector> {
        let batch: Vec<usize> = (0..self.batch_size).map(|_| self.sampler.next_index(rng)).collect();
        Ok(mlp_loss_and_grad(&self.spec, theta, &self.data, &batch)?.1)
    }

    fn true_gradient(&self, theta: &ParamVector) -> Option<ParamVector> {
        mlp_loss_and_grad(&self.spec, theta, &self.data, &self.everything).ok().map(|(_, g)| g)
    }

    fn loss(&self, theta: &ParamVector) -> Option<f64> {
        mlp_loss(&self.spec, theta, &self.data, &self.everything).ok()
    }
}
