//! Corruption-regime quantities: the proportion ε, the rate factor Δ(k, n),
//! the favorable-regime predicate, and the ψ diagnostic.
//!
//! All logarithms are natural. Δ(0, n) is defined as 0 by continuity.

use crate::error::{Error, Result};

/// Corruption count `k` out of `n` samples. The proportion ε = k/n is always
/// recomputed, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeParams {
    k: usize,
    n: usize,
}

impl RegimeParams {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::InvalidRegime { k, n });
        }
        Ok(Self { k, n })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// Absolute constants used by the ψ diagnostic and the error bound. The
/// underlying analysis leaves them abstract; the documented default is
/// (1, 1, 1) and every consumer treats ψ as a reported diagnostic, never a
/// correctness gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        }
    }
}

/// Δ(k, n) = ε · √(ln ε⁻¹) · ln²(εn), with Δ(0, n) := 0.
///
/// Since ε = k/n, the argument εn is exactly k, which is what gets logged.
pub fn delta(regime: RegimeParams) -> f64 {
    if regime.k() == 0 {
        return 0.0;
    }
    let eps = regime.epsilon();
    let log_k = (regime.k() as f64).ln();
    eps * (1.0 / eps).ln().sqrt() * log_k * log_k
}

/// Finite-probe surrogate for membership in the favorable corruption regime:
/// every probe point must have ε < 1/2 and Δ must be non-increasing over the
/// last half of the probe. This is a heuristic check of a limit statement,
/// not a proof.
pub fn in_favorable_regime(sequence_probe: &[RegimeParams]) -> Result<bool> {
    if sequence_probe.is_empty() {
        return Err(Error::EmptyProbe);
    }
    if sequence_probe.windows(2).any(|w| w[0].n() >= w[1].n()) {
        return Err(Error::ProbeNotIncreasing);
    }
    if sequence_probe.iter().any(|r| r.epsilon() >= 0.5) {
        return Ok(false);
    }
    let deltas: Vec<f64> = sequence_probe.iter().map(|&r| delta(r)).collect();
    let tail = &deltas[deltas.len() / 2..];
    Ok(tail.windows(2).all(|w| w[1] <= w[0]))
}

/// ψ(k, n, η) = √((C₁ + max|ηᵢ|)(1 + Δ)) / ((1 − 3ε)(C₂ − Δ) − C₃Δ).
///
/// Errors when the denominator is not positive, i.e. the regime is outside
/// the range where the bound says anything.
pub fn psi_diagnostic(
    regime: RegimeParams,
    eta_max: f64,
    constants: BoundConstants,
) -> Result<f64> {
    if eta_max < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "eta_max must be nonnegative, got {eta_max}"
        )));
    }
    let eps = regime.epsilon();
    let d = delta(regime);
    let denominator = (1.0 - 3.0 * eps) * (constants.c2 - d) - constants.c3 * d;
    if denominator <= 0.0 {
        return Err(Error::RegimeOutsideApplicability { denominator });
    }
    let numerator = ((constants.c1 + eta_max) * (1.0 + d)).sqrt();
    Ok(numerator / denominator)
}
