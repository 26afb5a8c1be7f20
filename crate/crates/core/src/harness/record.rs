//! Per-run time series, their CSV/JSON forms and the diagnostics computed
//! from them.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Column order of the series CSV.
pub const CSV_HEADER: [&str; 7] = ["step", "theta_or_norm", "loss", "grad_norm", "true_grad_norm", "lr", "clip"];

/// One optimizer step. `loss` and `true_grad_norm` are evaluated at the point
/// where `g_t` was sampled (`θ_{t−1}`); `theta_or_norm` is the iterate after
/// the step, or its Euclidean norm for vector problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub theta_or_norm: f64,
    pub loss: Option<f64>,
    pub grad_norm: f64,
    pub true_grad_norm: Option<f64>,
    pub lr: f64,
    pub clip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Echo of the run specification.
    pub config: serde_json::Value,
    pub seed: u64,
    pub base_seed: u64,
    pub rows: Vec<StepRow>,
    /// Full iterates, only kept for problems of dimension ≤ 4.
    pub thetas: Option<Vec<Vec<f64>>>,
    pub final_theta: Vec<f64>,
    pub final_theta_norm: f64,
}

impl RunRecord {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    /// `theta_or_norm` after the final step.
    pub fn final_value(&self) -> f64 {
        self.rows.last().map_or(self.final_theta_norm, |r| r.theta_or_norm)
    }

    pub fn theta_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.theta_or_norm).collect()
    }

    /// The record truncated to its first `steps` rows.
    pub fn prefix(&self, steps: usize) -> RunRecord {
        let steps = steps.min(self.rows.len());
        RunRecord {
            rows: self.rows[..steps].to_vec(),
            thetas: self.thetas.as_ref().map(|t| t[..steps].to_vec()),
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.theta_or_norm.to_string(),
                opt(r.loss),
                r.grad_norm.to_string(),
                opt(r.true_grad_norm),
                r.lr.to_string(),
                opt(r.clip),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    /// Summary with convergence detection against `target` when given.
    pub fn summary(&self, target: Option<f64>, criterion: ConvergenceCriterion) -> RunSummary {
        RunSummary {
            config: self.config.clone(),
            seed: self.seed,
            base_seed: self.base_seed,
            steps: self.rows.len() as u64,
            final_theta: (self.final_theta.len() <= 4).then(|| self.final_theta.clone()),
            final_theta_norm: self.final_theta_norm,
            final_value: self.final_value(),
            convergence_step: target.and_then(|t| detect_convergence(self, t, criterion.tol, criterion.window)),
            metric: convergence_metric(self).ok(),
        }
    }
}

/// Tolerance band and dwell time for declaring convergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriterion {
    pub tol: f64,
    pub window: usize,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        ConvergenceCriterion { tol: 0.05, window: 1000 }
    }
}

/// JSON summary written next to each series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: serde_json::Value,
    pub seed: u64,
    pub base_seed: u64,
    pub steps: u64,
    pub final_theta: Option<Vec<f64>>,
    pub final_theta_norm: f64,
    pub final_value: f64,
    pub convergence_step: Option<u64>,
    pub metric: Option<f64>,
}

/// `min_t ‖∇f(θ_{t−1})‖²`: the single-run estimate of
/// `min_t E[‖∇f(θ_{t−1})‖^{4/3}]^{3/2}`. Averaging it across seeds
/// approximates the expectation.
pub fn convergence_metric(record: &RunRecord) -> Result<f64> {
    if record.rows.is_empty() {
        return Err(LabError::MissingSeries("true_grad_norm"));
    }
    record.rows.iter().try_fold(f64::INFINITY, |best, r| {
        let n = r.true_grad_norm.ok_or(LabError::MissingSeries("true_grad_norm"))?;
        Ok(best.min(n * n))
    })
}

/// Step index at which `|θ_t − target| ≤ tol` begins to hold for `window`
/// consecutive steps, if it ever does.
pub fn detect_convergence(record: &RunRecord, target: f64, tol: f64, window: usize) -> Option<u64> {
    let steps: Vec<u64> = record.rows.iter().map(|r| r.step).collect();
    first_sustained_entry(&record.theta_series(), target, tol, window).map(|i| steps[i])
}

/// Index form of [`detect_convergence`] over a plain series.
pub fn first_sustained_entry(series: &[f64], target: f64, tol: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    let mut start = None;
    for (i, &x) in series.iter().enumerate() {
        if (x - target).abs() <= tol {
            let s = *start.get_or_insert(i);
            if i + 1 - s >= window {
                return Some(s);
            }
        } else {
            start = None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(values: &[f64], grad: Option<&[f64]>) -> RunRecord {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| StepRow {
                step: i as u64 + 1,
                theta_or_norm: v,
                loss: None,
                grad_norm: 0.0,
                true_grad_norm: grad.map(|g| g[i]),
                lr: 0.1,
                clip: None,
            })
            .collect();
        RunRecord {
            config: serde_json::Value::Null,
            seed: 0,
            base_seed: 0,
            rows,
            thetas: None,
            final_theta: vec![*values.last().unwrap()],
            final_theta_norm: values.last().unwrap().abs(),
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(convergence_metric(&record(&[0.0; 5], Some(&[1.0; 5]))).unwrap(), 1.0);
        assert_eq!(convergence_metric(&record(&[0.0; 3], Some(&[2.0, 0.0, 3.0]))).unwrap(), 0.0);
        assert!(matches!(convergence_metric(&record(&[0.0; 3], None)), Err(LabError::MissingSeries(_))));
    }

    #[test]
    fn metric_of_prefix_dominates() {
        let r = record(&[0.0; 6], Some(&[3.0, 2.5, 2.9, 0.4, 1.0, 0.2]));
        for k in 1..=6 {
            assert!(convergence_metric(&r.prefix(k)).unwrap() >= convergence_metric(&r).unwrap());
        }
    }

    #[test]
    fn convergence_detection() {
        assert_eq!(detect_convergence(&record(&[-1.0; 10], None), -1.0, 0.05, 3), Some(1));
        assert_eq!(detect_convergence(&record(&[0.5; 10], None), -1.0, 0.05, 3), None);
        let mut series = vec![0.3; 499];
        series.extend(vec![-0.98; 200]);
        assert_eq!(detect_convergence(&record(&series, None), -1.0, 0.05, 100), Some(500));
        // a dip too short to count
        let series = [0.0, -1.0, -1.0, 0.0, -1.0, -1.0, -1.0];
        assert_eq!(detect_convergence(&record(&series, None), -1.0, 0.05, 3), Some(5));
    }

    #[test]
    fn csv_layout() {
        let mut r = record(&[0.25, -0.5], Some(&[1.0, 1.0]));
        r.rows[1].clip = Some(2.0);
        r.rows[0].loss = Some(0.25);
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,theta_or_norm,loss,grad_norm,true_grad_norm,lr,clip");
        assert_eq!(lines[1], "1,0.25,0.25,0,1,0.1,");
        assert_eq!(lines[2], "2,-0.5,,0,1,0.1,2");
    }
}
