//! Dense parameter vectors and the element-wise kernel the optimizers are
//! written in.
//!
//! A [`ParamVector`] is a value: every operation returns a new vector and
//! leaves its inputs untouched. Binary operations check dimensions and return
//! [`LabError::DimensionMismatch`] on disagreement.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// A non-empty dense vector of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(LabError::EmptyVector);
        }
        Ok(ParamVector(data))
    }

    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "ParamVector dimension must be at least 1");
        ParamVector(vec![value; dim])
    }

    pub fn scalar(value: f64) -> Self {
        ParamVector(vec![value])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamVector {
        ParamVector(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> Result<ParamVector> {
        self.check_dim(other)?;
        Ok(ParamVector(
            self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// Element-wise product `a ⊙ b`.
    pub fn hadamard(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Element-wise `max(v_i, s)`.
    pub fn max_scalar(&self, s: f64) -> ParamVector {
        debug_assert!(s >= 0.0, "max_scalar floor must be nonnegative");
        self.map(|x| x.max(s))
    }

    /// Element-wise `min(max(v_i, -c), c)`. `c = +inf` is the identity.
    pub fn clip_elementwise(&self, c: f64) -> ParamVector {
        debug_assert!(c >= 0.0, "clip bound must be nonnegative");
        if c == f64::INFINITY {
            return self.clone();
        }
        self.map(|x| x.max(-c).min(c))
    }

    /// `(Σ |v_i|^p)^{1/p}`, with `p = f64::INFINITY` giving `max |v_i|`.
    pub fn power_norm(&self, p: f64) -> f64 {
        debug_assert!(p > 0.0, "norm exponent must be positive");
        if p == f64::INFINITY {
            self.0.iter().fold(0.0, |acc, x| acc.max(x.abs()))
        } else if p == 2.0 {
            self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
        } else if p == 1.0 {
            self.0.iter().map(|x| x.abs()).sum()
        } else {
            self.0.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }

    pub fn norm2(&self) -> f64 {
        self.power_norm(2.0)
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> ParamVector {
        self.map(|x| s * x)
    }

    pub fn add_scalar(&self, s: f64) -> ParamVector {
        self.map(|x| x + s)
    }

    /// `a·self + b·other`, the exponential-moving-average building block.
    pub fn lincomb(&self, a: f64, other: &ParamVector, b: f64) -> Result<ParamVector> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn sqrt(&self) -> ParamVector {
        self.map(f64::sqrt)
    }

    pub fn abs(&self) -> ParamVector {
        self.map(f64::abs)
    }

    pub fn max_elementwise(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, f64::max)
    }

    /// Element-wise reciprocal. A zero entry is a contract violation: callers
    /// floor with [`max_scalar`](Self::max_scalar) or add `ε²` first.
    pub fn recip(&self) -> Result<ParamVector> {
        if let Some(index) = self.0.iter().position(|&x| x == 0.0) {
            return Err(LabError::ZeroReciprocal { index });
        }
        Ok(self.map(f64::recip))
    }

    /// `self ⊘ denom`, written as a Hadamard product with the reciprocal.
    pub fn div(&self, denom: &ParamVector) -> Result<ParamVector> {
        self.check_dim(denom)?;
        self.hadamard(&denom.recip()?)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = LabError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVector::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Vec<f64> {
        v.0
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(pv(&[2.0, -3.0]).hadamard(&pv(&[2.0, -3.0])).unwrap(), pv(&[4.0, 9.0]));
        assert_eq!(pv(&[1.0, 0.0]).hadamard(&pv(&[5.0, 7.0])).unwrap(), pv(&[5.0, 0.0]));
        assert_eq!(pv(&[0.5, 4.0]).hadamard(&pv(&[2.0, 0.25])).unwrap(), pv(&[1.0, 1.0]));
    }

    #[test]
    fn hadamard_dimension_mismatch() {
        let err = pv(&[1.0]).hadamard(&pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, LabError::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn empty_vector_rejected() {
        assert!(matches!(ParamVector::new(vec![]), Err(LabError::EmptyVector)));
    }

    #[test]
    fn max_scalar_examples() {
        assert_eq!(pv(&[4.0, 1e-12]).max_scalar(1e-6), pv(&[4.0, 1e-6]));
        assert_eq!(pv(&[0.0, 0.0]).max_scalar(0.0), pv(&[0.0, 0.0]));
        assert_eq!(pv(&[2.0, 3.0]).max_scalar(5.0), pv(&[5.0, 5.0]));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(pv(&[3.0, -0.5]).clip_elementwise(1.0), pv(&[1.0, -0.5]));
        assert_eq!(pv(&[3.0, -0.5]).clip_elementwise(f64::INFINITY), pv(&[3.0, -0.5]));
        assert_eq!(pv(&[-7.0, 7.0]).clip_elementwise(0.0), pv(&[0.0, 0.0]));
    }

    #[test]
    fn power_norm_examples() {
        assert_eq!(pv(&[3.0, 4.0]).power_norm(2.0), 5.0);
        assert_eq!(pv(&[-2.0, 1.0]).power_norm(f64::INFINITY), 2.0);
        assert_eq!(pv(&[1.0, 1.0, 1.0]).power_norm(1.0), 3.0);
        assert!((pv(&[1.0, 1.0]).power_norm(0.5) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn recip_of_zero_is_an_error() {
        assert!(matches!(
            pv(&[1.0, 0.0]).recip(),
            Err(LabError::ZeroReciprocal { index: 1 })
        ));
        assert_eq!(pv(&[6.0]).div(&pv(&[3.0])).unwrap(), pv(&[2.0]));
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..16).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e6f64..1e6, n),
                prop::collection::vec(-1e6f64..1e6, n),
            )
        })
    }

    proptest! {
        #[test]
        fn hadamard_commutes((a, b) in vec_pair()) {
            let (a, b) = (pv(&a), pv(&b));
            prop_assert_eq!(a.hadamard(&b).unwrap(), b.hadamard(&a).unwrap());
        }

        #[test]
        fn clip_is_idempotent_and_bounded(
            v in prop::collection::vec(-1e6f64..1e6, 1..16),
            c in 0.0f64..1e3,
        ) {
            let v = pv(&v);
            let once = v.clip_elementwise(c);
            prop_assert_eq!(once.clip_elementwise(c), once.clone());
            prop_assert!(once.power_norm(f64::INFINITY) <= c);
        }

        #[test]
        fn max_scalar_zero_is_identity_on_nonnegative(
            v in prop::collection::vec(0.0f64..1e6, 1..16),
        ) {
            let v = pv(&v);
            prop_assert_eq!(v.max_scalar(0.0), v);
        }
    }
}
