//! Dense real signal vectors and the sign-invariant distance.
//!
//! Squared measurements lose the sign of the signal, so every distance to a
//! reference vector is taken as the minimum over both sign choices.

use crate::error::{Error, Result};

/// A dense real vector: the unknown signal, an estimate, or a solver iterate.
///
/// Entries are validated to be finite at construction and the dimension is at
/// least 1. Instances are immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVec {
    entries: Vec<f64>,
}

impl SignalVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVector);
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntries);
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            entries: vec![0.0; dim],
        }
    }

    /// First standard basis vector scaled by `scale`.
    pub fn scaled_e1(dim: usize, scale: f64) -> Self {
        let mut entries = vec![0.0; dim];
        entries[0] = scale;
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn dot(&self, other: &SignalVec) -> f64 {
        dot(&self.entries, &other.entries)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> SignalVec {
        SignalVec {
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn flipped(&self) -> SignalVec {
        self.scaled(-1.0)
    }
}

impl std::ops::Index<usize> for SignalVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sign-invariant distance `min{‖a − b‖, ‖a + b‖}`.
///
/// The sign of the signal is unidentifiable from squared measurements, so this
/// is the natural error metric. Always nonnegative.
pub fn sign_invariant_distance(a: &SignalVec, b: &SignalVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    Ok(minus.min(plus).sqrt())
}
