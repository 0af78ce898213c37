//! Experiment-level measurement: relative error, the reported error bound,
//! and per-regime summaries.

use crate::error::{Error, Result};
use crate::regime::{psi_diagnostic, BoundConstants, RegimeParams};
use crate::signal::{sign_invariant_distance, SignalVec};

/// One experiment outcome row.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub regime_label: String,
    pub rel_error: f64,
    pub outer_iters: usize,
    pub oracle_iters_total: usize,
    pub wall_ms: u64,
    pub termination: String,
}

/// Relative error d(θ̂, θ*) / ‖θ*‖.
pub fn relative_error(theta_hat: &SignalVec, theta_star: &SignalVec) -> Result<f64> {
    let norm = theta_star.norm();
    if norm == 0.0 {
        return Err(Error::ZeroReferenceSignal);
    }
    Ok(sign_invariant_distance(theta_hat, theta_star)? / norm)
}

/// Reported error level 1.2 · max(√ψ, ψ) · √ε. The constants inside ψ are
/// abstract, so this is printed next to the observed error, never asserted.
pub fn recovery_error_bound(
    regime: RegimeParams,
    eta_max: f64,
    constants: BoundConstants,
) -> Result<f64> {
    let psi = psi_diagnostic(regime, eta_max, constants)?;
    Ok(1.2 * psi.sqrt().max(psi) * regime.epsilon().sqrt())
}

/// Per-(regime, d, n, k) aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub regime_label: String,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
    pub mean_wall_ms: f64,
    pub std_wall_ms: f64,
    pub trials: usize,
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    (mean, var.sqrt())
}

/// Groups records by (regime, d, n, k) and reports mean ± sample standard
/// deviation of the relative error and wall time, sorted by the group key.
/// Order-independent: any permutation of the input produces the same table.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut keys: Vec<(&str, usize, usize, usize)> = records
        .iter()
        .map(|r| (r.regime_label.as_str(), r.d, r.n, r.k))
        .collect();
    keys.sort();
    keys.dedup();
    let mut rows = Vec::with_capacity(keys.len());
    for (regime, d, n, k) in keys {
        let group: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.regime_label == regime && r.d == d && r.n == n && r.k == k)
            .collect();
        let errors: Vec<f64> = group.iter().map(|r| r.rel_error).collect();
        let walls: Vec<f64> = group.iter().map(|r| r.wall_ms as f64).collect();
        let (mean_rel_error, std_rel_error) = mean_and_sample_std(&errors);
        let (mean_wall_ms, std_wall_ms) = mean_and_sample_std(&walls);
        rows.push(SummaryRow {
            regime_label: regime.to_string(),
            d,
            n,
            k,
            mean_rel_error,
            std_rel_error,
            mean_wall_ms,
            std_wall_ms,
            trials: group.len(),
        });
    }
    Ok(rows)
}

fn csv_safe(field: &str) -> String {
    field.replace([',', '\n'], ";")
}

pub const TRIAL_CSV_HEADER: &str =
    "seed,regime,d,n,k,rel_error,outer_iters,oracle_iters_total,wall_ms,termination";

pub fn trial_csv_row(record: &TrialRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        record.seed,
        csv_safe(&record.regime_label),
        record.d,
        record.n,
        record.k,
        record.rel_error,
        record.outer_iters,
        record.oracle_iters_total,
        record.wall_ms,
        csv_safe(&record.termination)
    )
}

pub const SUMMARY_CSV_HEADER: &str =
    "regime,d,n,k,mean_rel_error,std_rel_error,mean_wall_ms,std_wall_ms,trials";

pub fn summary_csv_row(row: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        csv_safe(&row.regime_label),
        row.d,
        row.n,
        row.k,
        row.mean_rel_error,
        row.std_rel_error,
        row.mean_wall_ms,
        row.std_wall_ms,
        row.trials
    )
}
