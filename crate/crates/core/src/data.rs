//! Measurements, measurement sets, and index subsets.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::signal::SignalVec;

/// One magnitude-only measurement: a covariate vector and its response.
///
/// `true_corruption` keeps the injected corruption for synthetic data (zero if
/// clean), so that `response - true_corruption` always equals the clean
/// squared inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub covariate: Vec<f64>,
    pub response: f64,
    pub true_corruption: f64,
    pub index: usize,
}

/// A set of `n` measurements of common dimension `d`, plus the ground-truth
/// set of corrupted indices (synthetic data only).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    items: Vec<Measurement>,
    d: usize,
    corrupted_indices: BTreeSet<usize>,
}

impl MeasurementSet {
    pub fn new(
        items: Vec<Measurement>,
        d: usize,
        corrupted_indices: BTreeSet<usize>,
    ) -> Result<Self> {
        let n = items.len();
        for (pos, item) in items.iter().enumerate() {
            if item.covariate.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: item.covariate.len(),
                });
            }
            if item.index != pos {
                return Err(Error::InvalidParameter(format!(
                    "measurement at position {pos} carries index {}",
                    item.index
                )));
            }
        }
        if corrupted_indices.iter().any(|&i| i >= n) {
            return Err(Error::InvalidIndexSet { n });
        }
        Ok(Self {
            items,
            d,
            corrupted_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn items(&self) -> &[Measurement] {
        &self.items
    }

    pub fn get(&self, index: usize) -> &Measurement {
        &self.items[index]
    }

    pub fn corrupted_indices(&self) -> &BTreeSet<usize> {
        &self.corrupted_indices
    }

    pub fn responses(&self) -> impl Iterator<Item = f64> + '_ {
        self.items.iter().map(|m| m.response)
    }

    pub(crate) fn with_modified(
        &self,
        items: Vec<Measurement>,
        corrupted_indices: BTreeSet<usize>,
    ) -> Self {
        Self {
            items,
            d: self.d,
            corrupted_indices,
        }
    }
}

/// Sorted set of measurement indices; strictly increasing, all within `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    /// Builds from indices that must already be strictly increasing and < `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        let in_range = indices.last().is_none_or(|&last| last < n);
        if !increasing || !in_range {
            return Err(Error::InvalidIndexSet { n });
        }
        Ok(Self { indices })
    }

    /// Builds from arbitrary unique indices, sorting them first.
    pub fn from_unsorted(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        Self::new(indices, n)
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

/// Builds a synthetic set directly from covariates and a ground truth signal.
/// Responses are the exact squared inner products; nothing is corrupted.
pub fn clean_set_from_covariates(
    covariates: Vec<Vec<f64>>,
    theta_star: &SignalVec,
) -> Result<MeasurementSet> {
    let d = theta_star.dim();
    let items = covariates
        .into_iter()
        .enumerate()
        .map(|(index, covariate)| {
            let ip: f64 = covariate
                .iter()
                .zip(theta_star.as_slice())
                .map(|(x, t)| x * t)
                .sum();
            Measurement {
                covariate,
                response: ip * ip,
                true_corruption: 0.0,
                index,
            }
        })
        .collect();
    MeasurementSet::new(items, d, BTreeSet::new())
}
