//! Classification datasets: synthetic Gaussian classes and IDX ingestion.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};
use crate::harness::rng::rng_stream;

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, input_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 {
            return Err(LabError::InvalidBatch("input_dim and num_classes must be positive".into()));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(LabError::DimensionMismatch { expected: labels.len() * input_dim, got: inputs.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(LabError::InvalidBatch(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Dataset { inputs, labels, input_dim, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// `n_per_class` points per class from unit-variance isotropic Gaussians
/// centred at `separation · e_{c mod dim}`. Samples are grouped by class.
pub fn synth_gaussian_classes(
    n_per_class: usize,
    dim: usize,
    num_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || dim == 0 || num_classes == 0 {
        return Err(LabError::config("dataset", "sizes must be positive"));
    }
    if separation.is_nan() || separation <= 0.0 {
        return Err(LabError::config("separation", format!("{separation} must be positive")));
    }
    let mut rng = rng_stream(seed, 0);
    let mut inputs = Vec::with_capacity(n_per_class * num_classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * num_classes);
    for c in 0..num_classes {
        for _ in 0..n_per_class {
            for j in 0..dim {
                let centre = if j == c % dim { separation } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                inputs.push(centre + z);
            }
            labels.push(c);
        }
    }
    Dataset::new(inputs, labels, dim, num_classes)
}

const IDX_UBYTE: u8 = 0x08;

/// An unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Serialize back to the on-disk layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, IDX_UBYTE, self.dims.len() as u8];
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

/// Parse an IDX file: a big-endian magic `00 00 08 <rank>`, `rank`
/// big-endian `u32` dimension sizes, then the row-major payload.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(LabError::Length { expected: 4, found: bytes.len() });
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE || bytes[3] == 0 {
        return Err(LabError::Format(format!(
            "bad magic {:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(LabError::Length { expected: header, found: bytes.len() });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| LabError::Format("dimension product overflows".into()))?;
    let expected = header + payload;
    if bytes.len() != expected {
        return Err(LabError::Length { expected, found: bytes.len() });
    }
    Ok(IdxArray { dims, data: bytes[header..].to_vec() })
}

/// Build a dataset from an images file (rank ≥ 2) and a labels file
/// (rank 1). Pixels are scaled to `[0, 1]`.
pub fn dataset_from_idx(images: &IdxArray, labels: &IdxArray, num_classes: usize) -> Result<Dataset> {
    if images.dims.len() < 2 {
        return Err(LabError::Format("images file must have rank ≥ 2".into()));
    }
    if labels.dims.len() != 1 {
        return Err(LabError::Format("labels file must have rank 1".into()));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(LabError::DimensionMismatch { expected: n, got: labels.dims[0] });
    }
    let input_dim = images.dims[1..].iter().product();
    let inputs = images.data.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = labels.data.iter().map(|&l| l as usize).collect();
    Dataset::new(inputs, labels, input_dim, num_classes)
}

pub fn load_idx_dataset(images: &Path, labels: &Path, num_classes: usize) -> Result<Dataset> {
    let images = parse_idx(&std::fs::read(images)?)?;
    let labels = parse_idx(&std::fs::read(labels)?)?;
    dataset_from_idx(&images, &labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_labels_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 2, 5, 9];
        let idx = parse_idx(&bytes).unwrap();
        assert_eq!(idx.dims, vec![2]);
        assert_eq!(idx.data, vec![5, 9]);
    }

    #[test]
    fn minimal_images_file() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 64, 128, 255];
        let idx = parse_idx(&bytes).unwrap();
        assert_eq!(idx.dims, vec![1, 2, 2]);
        assert_eq!(idx.data.len(), 4);
        let labels = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 3]).unwrap();
        let ds = dataset_from_idx(&idx, &labels, 10).unwrap();
        assert_eq!(ds.input(0), &[0.0, 64.0 / 255.0, 128.0 / 255.0, 1.0]);
        assert_eq!(ds.label(0), 3);
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 5, 9];
        assert!(matches!(parse_idx(&bytes), Err(LabError::Length { expected: 11, found: 10 })));
        assert!(matches!(parse_idx(&[0, 0, 8, 3, 0, 0]), Err(LabError::Length { .. })));
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        assert!(matches!(parse_idx(&[0, 0, 9, 1, 0, 0, 0, 0]), Err(LabError::Format(_))));
        assert!(matches!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0]), Err(LabError::Format(_))));
    }

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let a = synth_gaussian_classes(50, 4, 3, 6.0, 11).unwrap();
        let b = synth_gaussian_classes(50, 4, 3, 6.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_histogram(), vec![50, 50, 50]);
        assert_ne!(a, synth_gaussian_classes(50, 4, 3, 6.0, 12).unwrap());
    }

    #[test]
    fn synthetic_classes_are_nearest_centroid_separable() {
        let ds = synth_gaussian_classes(100, 16, 2, 6.0, 3).unwrap();
        let mut centroids = vec![vec![0.0; 16]; 2];
        for i in 0..ds.len() {
            for (j, x) in ds.input(i).iter().enumerate() {
                centroids[ds.label(i)][j] += x / 100.0;
            }
        }
        let correct = (0..ds.len())
            .filter(|&i| {
                let d: Vec<f64> = centroids
                    .iter()
                    .map(|c| c.iter().zip(ds.input(i)).map(|(a, b)| (a - b).powi(2)).sum())
                    .collect();
                (d[0] > d[1]) as usize == ds.label(i)
            })
            .count();
        assert!(correct as f64 / ds.len() as f64 >= 0.99, "{correct}/200");
    }

    proptest! {
        #[test]
        fn idx_round_trip(
            dims in prop::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<u8> = (0..n).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let arr = IdxArray { dims, data };
            let bytes = arr.to_bytes();
            let parsed = parse_idx(&bytes).unwrap();
            prop_assert_eq!(parsed.to_bytes(), bytes);
            prop_assert_eq!(parsed, arr);
        }
    }
}
