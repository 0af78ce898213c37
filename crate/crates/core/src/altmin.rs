//! Trimmed alternating minimization: preprocessing, residual-based subset
//! selection, oracle calls, and the β-stopping rule.
//!
//! The outer loop starts from θ¹ = 0, alternates between picking the n − 2k
//! smallest-residual measurements of the trimmed set and re-solving the
//! subset least squares with the oracle, and stops as soon as the average
//! per-sample decrease on the current subset falls below β.

use crate::data::{IndexSet, MeasurementSet};
use crate::datagen::RngSeed;
use crate::error::{Error, Result};
use crate::objective::loss_raw;
use crate::oracle::{run_oracle, OracleConfig};
use crate::regime::{delta, BoundConstants, RegimeParams};
use crate::signal::{sign_invariant_distance, SignalVec};

#[derive(Debug, Clone)]
pub struct AltMinConfig {
    /// Assumed corruption count; the selection keeps n − 2k measurements.
    pub k: usize,
    /// Stop threshold. `None` resolves to ε² = (k/n)², or 1e-12 when k = 0
    /// so a stopping rule survives the uncorrupted case.
    pub beta: Option<f64>,
    /// Outer-iteration safety cap. `None` resolves to `iteration_bound`.
    pub max_outer_iters: Option<usize>,
    /// Oracle knobs. `None` resolves to `OracleConfig::for_dim(d)`.
    pub oracle: Option<OracleConfig>,
    /// Ground truth for per-iteration distance logging (synthetic data only).
    pub truth: Option<SignalVec>,
}

impl AltMinConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            beta: None,
            max_outer_iters: None,
            oracle: None,
            truth: None,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_max_outer_iters(mut self, cap: usize) -> Self {
        self.max_outer_iters = Some(cap);
        self
    }

    pub fn with_oracle(mut self, oracle: OracleConfig) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn with_truth(mut self, truth: SignalVec) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn effective_beta(&self, n: usize) -> f64 {
        match self.beta {
            Some(beta) => beta,
            None if self.k == 0 => 1e-12,
            None => {
                let eps = self.k as f64 / n as f64;
                eps * eps
            }
        }
    }

    fn validate(&self, data: &MeasurementSet) -> Result<()> {
        let n = data.len();
        if 2 * self.k >= n {
            return Err(Error::InvalidParameter(format!(
                "need 2k < n, got k = {}, n = {n}",
                self.k
            )));
        }
        if self.effective_beta(n) <= 0.0 {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    BetaStop,
    IterCap,
    OracleError(String),
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::BetaStop => write!(f, "beta_stop"),
            Termination::IterCap => write!(f, "iter_cap"),
            Termination::OracleError(msg) => write!(f, "oracle_error: {msg}"),
        }
    }
}

/// One completed outer iteration, for the run log.
#[derive(Debug, Clone, Copy)]
pub struct OuterIteration {
    pub outer_iter: usize,
    pub subset_loss: f64,
    pub decrease: f64,
    pub dist_to_truth: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AltMinResult {
    pub theta_hat: SignalVec,
    pub u_hat: IndexSet,
    pub outer_iters: usize,
    pub termination: Termination,
    /// Subset loss f_{Uᵗ}(θᵗ) at the start of each outer iteration. Entries
    /// drop by at least β between completed iterations, except possibly the
    /// final pair.
    pub loss_history: Vec<f64>,
    pub outer_log: Vec<OuterIteration>,
    /// Set when preprocessing found more negative responses than k and had
    /// to proceed with fewer than n − k measurements (mis-specified k).
    pub preprocess_flagged: bool,
    pub oracle_iters_total: usize,
}

/// Preprocessing: drop every negative response, then drop the largest
/// remaining responses until n − k measurements survive. If negatives alone
/// exceed the budget k, all of them are still dropped and the flag in the
/// returned pair is set.
pub fn preprocess(data: &MeasurementSet, k: usize) -> Result<(IndexSet, bool)> {
    let n = data.len();
    if k >= n {
        return Err(Error::InvalidRegime { k, n });
    }
    let negatives: Vec<usize> = (0..n).filter(|&i| data.get(i).response < 0.0).collect();
    let mut kept: Vec<usize> = (0..n).filter(|&i| data.get(i).response >= 0.0).collect();
    if negatives.len() >= k {
        return Ok((IndexSet::new(kept, n)?, negatives.len() > k));
    }
    let budget = k - negatives.len();
    // stable sort keeps ascending-index order among equal responses
    kept.sort_by(|&a, &b| {
        data.get(b)
            .response
            .partial_cmp(&data.get(a).response)
            .unwrap()
    });
    kept.drain(..budget);
    IndexSet::from_unsorted(kept, n).map(|s| (s, false))
}

fn residual(data: &MeasurementSet, index: usize, theta: &[f64]) -> f64 {
    let m = data.get(index);
    let s: f64 = m.covariate.iter().zip(theta).map(|(x, t)| x * t).sum();
    let r = m.response - s * s;
    r * r
}

fn select_smallest(
    data: &MeasurementSet,
    s_tilde: &IndexSet,
    theta: &[f64],
    size: usize,
) -> Result<IndexSet> {
    if s_tilde.len() < size {
        return Err(Error::SubsetTooSmall {
            needed: size,
            got: s_tilde.len(),
        });
    }
    let mut scored: Vec<(f64, usize)> = s_tilde
        .iter()
        .map(|i| (residual(data, i, theta), i))
        .collect();
    // residual ties break by ascending index, deterministically
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(size);
    IndexSet::from_unsorted(scored.into_iter().map(|(_, i)| i).collect(), data.len())
}

/// The subset-argmin of the separable selection problem: the n − 2k indices
/// of S̃ with the smallest per-sample residuals (yᵢ − ⟨xᵢ, θ⟩²)².
pub fn select_subset(
    data: &MeasurementSet,
    s_tilde: &IndexSet,
    theta: &SignalVec,
    k: usize,
) -> Result<IndexSet> {
    let n = data.len();
    if 2 * k >= n {
        return Err(Error::InvalidParameter(format!(
            "need 2k < n, got k = {k}, n = {n}"
        )));
    }
    select_smallest(data, s_tilde, theta.as_slice(), n - 2 * k)
}

/// Outer-iteration bound ⌈Σᵢ yᵢ² / (4(n − 2k)β)⌉; the default safety cap for
/// `run_altmin`. This is the looser of the two printed variants.
pub fn iteration_bound(data: &MeasurementSet, cfg: &AltMinConfig) -> usize {
    bound_with_denom(data, cfg, data.len() - 2 * cfg.k)
}

/// Companion bound ⌈Σᵢ yᵢ² / (4(n − k)β)⌉; smaller, reported for comparison.
pub fn iteration_bound_tight(data: &MeasurementSet, cfg: &AltMinConfig) -> usize {
    bound_with_denom(data, cfg, data.len() - cfg.k)
}

fn bound_with_denom(data: &MeasurementSet, cfg: &AltMinConfig, denom_count: usize) -> usize {
    let sum_sq: f64 = data.responses().map(|y| y * y).sum();
    if sum_sq == 0.0 {
        return 0;
    }
    let beta = cfg.effective_beta(data.len());
    (sum_sq / (4.0 * denom_count as f64 * beta)).ceil() as usize
}

/// Runs the alternating minimization. Oracle failures do not panic or abort:
/// they terminate the loop and are recorded in `termination`.
///
/// Randomness: the oracle call of outer iteration t draws from stream
/// `rng_seed.stream + t`, so callers should leave stream space above the one
/// they pass in.
pub fn run_altmin(
    data: &MeasurementSet,
    cfg: &AltMinConfig,
    rng_seed: RngSeed,
) -> Result<AltMinResult> {
    cfg.validate(data)?;
    let n = data.len();
    let d = data.dim();
    let beta = cfg.effective_beta(n);
    let (s_tilde, flagged) = preprocess(data, cfg.k)?;
    let target_size = (n - 2 * cfg.k).min(s_tilde.len());
    if target_size == 0 {
        return Err(Error::InvalidParameter(
            "preprocessing removed every measurement".into(),
        ));
    }
    let max_outer = cfg
        .max_outer_iters
        .unwrap_or_else(|| iteration_bound(data, cfg));
    let oracle_cfg = cfg
        .oracle
        .clone()
        .unwrap_or_else(|| OracleConfig::for_dim(d));

    let mut theta = SignalVec::zeros(d);
    let mut loss_history = Vec::new();
    let mut outer_log = Vec::new();
    let mut oracle_iters_total = 0usize;

    if max_outer == 0 {
        let u = select_smallest(data, &s_tilde, theta.as_slice(), target_size)?;
        return Ok(AltMinResult {
            theta_hat: theta,
            u_hat: u,
            outer_iters: 0,
            termination: Termination::IterCap,
            loss_history,
            outer_log,
            preprocess_flagged: flagged,
            oracle_iters_total,
        });
    }

    let mut t = 1usize;
    loop {
        let subset = select_smallest(data, &s_tilde, theta.as_slice(), target_size)?;
        let loss_before = loss_raw(data, subset.as_slice(), theta.as_slice());
        loss_history.push(loss_before);
        let dist_to_truth = cfg
            .truth
            .as_ref()
            .map(|truth| sign_invariant_distance(&theta, truth))
            .transpose()?;

        let oracle_seed = RngSeed::new(rng_seed.seed, rng_seed.stream + t as u64);
        let next = match run_oracle(data, &subset, &oracle_cfg, oracle_seed) {
            Ok(res) => res,
            Err(err) => {
                outer_log.push(OuterIteration {
                    outer_iter: t,
                    subset_loss: loss_before,
                    decrease: f64::NAN,
                    dist_to_truth,
                });
                return Ok(AltMinResult {
                    theta_hat: theta,
                    u_hat: subset,
                    outer_iters: t,
                    termination: Termination::OracleError(err.to_string()),
                    loss_history,
                    outer_log,
                    preprocess_flagged: flagged,
                    oracle_iters_total,
                });
            }
        };
        oracle_iters_total += next.iters_run;
        let loss_after = loss_raw(data, subset.as_slice(), next.theta.as_slice());
        let decrease = loss_before - loss_after;
        outer_log.push(OuterIteration {
            outer_iter: t,
            subset_loss: loss_before,
            decrease,
            dist_to_truth,
        });

        if decrease < beta {
            // stop rule: return the previous iterate and its subset
            return Ok(AltMinResult {
                theta_hat: theta,
                u_hat: subset,
                outer_iters: t,
                termination: Termination::BetaStop,
                loss_history,
                outer_log,
                preprocess_flagged: flagged,
                oracle_iters_total,
            });
        }
        theta = next.theta;
        if t == max_outer {
            return Ok(AltMinResult {
                theta_hat: theta,
                u_hat: subset,
                outer_iters: t,
                termination: Termination::IterCap,
                loss_history,
                outer_log,
                preprocess_flagged: flagged,
                oracle_iters_total,
            });
        }
        t += 1;
    }
}

/// Alignment-corrected stationarity diagnostic
/// ⟨∇f_Û(θ̂), θ̂ − θ*⟩ / ‖θ̂ − θ*‖ with the sign of θ* chosen to minimize the
/// distance. Returns 0 when θ̂ = ±θ*.
pub fn stationarity_gap(
    data: &MeasurementSet,
    u_hat: &IndexSet,
    theta_hat: &SignalVec,
    theta_star: &SignalVec,
) -> Result<f64> {
    if theta_hat.dim() != theta_star.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta_star.dim(),
            got: theta_hat.dim(),
        });
    }
    let dist_plus: f64 = theta_hat
        .as_slice()
        .iter()
        .zip(theta_star.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dist_minus: f64 = theta_hat
        .as_slice()
        .iter()
        .zip(theta_star.as_slice())
        .map(|(a, b)| (a + b) * (a + b))
        .sum();
    let sign = if dist_plus <= dist_minus { 1.0 } else { -1.0 };
    let diff: Vec<f64> = theta_hat
        .as_slice()
        .iter()
        .zip(theta_star.as_slice())
        .map(|(a, b)| a - sign * b)
        .collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let grad = crate::objective::gradient(data, u_hat, theta_hat)?;
    let inner: f64 = grad.as_slice().iter().zip(&diff).map(|(g, w)| g * w).sum();
    Ok(inner / norm)
}

/// The γ level a converged run is expected to sit below: 2√L̂·ε with
/// L̂ = ½((C₁+Δ)r² + (C₂+Δ)r + (C₃+Δ) + max|η|(1+Δ)) at distance r.
/// Reported alongside `stationarity_gap`, never asserted.
pub fn stationarity_gamma_bound(
    dist: f64,
    regime: RegimeParams,
    eta_max: f64,
    constants: BoundConstants,
) -> f64 {
    let dlt = delta(regime);
    let l = 0.5
        * ((constants.c1 + dlt) * dist * dist
            + (constants.c2 + dlt) * dist
            + (constants.c3 + dlt)
            + eta_max * (1.0 + dlt));
    2.0 * l.sqrt() * regime.epsilon()
}

/// Run log, one row per outer iteration. The distance column stays empty
/// when no ground truth was supplied.
pub fn run_log_csv(result: &AltMinResult) -> String {
    let mut out = String::from("outer_iter,subset_loss,decrease,dist_to_truth\n");
    for row in &result.outer_log {
        let dist = row.dist_to_truth.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.outer_iter, row.subset_loss, row.decrease, dist
        ));
    }
    out
}
