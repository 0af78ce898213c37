//! Synthetic measurement generation under Gaussian design, pluggable
//! corruption adversaries, and the columnar dataset text format.
//!
//! Covariate entries are i.i.d. standard normal, sampled with the ziggurat
//! algorithm (`rand_distr::StandardNormal`) from a ChaCha12 stream, so a given
//! `(seed, stream)` pair reproduces a dataset bit-for-bit on one build.
//! Concurrent trials must use distinct stream ids.

use std::collections::BTreeSet;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::data::{Measurement, MeasurementSet};
use crate::error::{Error, Result};
use crate::signal::SignalVec;

/// Seed plus stream id for one deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Sampler for covariate-independent corruption: sees only the RNG.
pub type IndependentSampler = Box<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Adaptive corruption rule: sees the full measurement (x, y).
pub type AdaptiveRule = Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// How corruption values are produced.
///
/// The `Independent*` kinds draw each η with no access to the covariates
/// (their sampler sees only the RNG). `StrongAdaptive` receives the full
/// measurement `(x, y)` and may respond to it.
pub enum CorruptionKind {
    None,
    IndependentUniform { lo: f64, hi: f64 },
    IndependentConstant { value: f64 },
    IndependentCustom(IndependentSampler),
    StrongAdaptive(AdaptiveRule),
}

impl std::fmt::Debug for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorruptionKind::None => write!(f, "None"),
            CorruptionKind::IndependentUniform { lo, hi } => {
                write!(f, "IndependentUniform({lo}, {hi})")
            }
            CorruptionKind::IndependentConstant { value } => {
                write!(f, "IndependentConstant({value})")
            }
            CorruptionKind::IndependentCustom(_) => write!(f, "IndependentCustom(..)"),
            CorruptionKind::StrongAdaptive(_) => write!(f, "StrongAdaptive(..)"),
        }
    }
}

/// How the adversary picks which `k` indices to corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionSelection {
    /// k distinct indices chosen uniformly at random.
    RandomUniform,
    /// The k largest responses (ties broken by ascending index).
    LargestResponses,
}

/// Full adversary specification: what to inject, how many, and where.
#[derive(Debug)]
pub struct CorruptionPlan {
    pub kind: CorruptionKind,
    pub k: usize,
    pub selection: CorruptionSelection,
}

impl CorruptionPlan {
    pub fn none() -> Self {
        Self {
            kind: CorruptionKind::None,
            k: 0,
            selection: CorruptionSelection::RandomUniform,
        }
    }

    pub fn uniform(lo: f64, hi: f64, k: usize) -> Self {
        Self {
            kind: CorruptionKind::IndependentUniform { lo, hi },
            k,
            selection: CorruptionSelection::RandomUniform,
        }
    }

    pub fn constant(value: f64, k: usize) -> Self {
        Self {
            kind: CorruptionKind::IndependentConstant { value },
            k,
            selection: CorruptionSelection::RandomUniform,
        }
    }
}

/// Draws `n` Gaussian-design measurements with exact squared-inner-product
/// responses. No corruption; `corrupted_indices` comes back empty.
pub fn generate_clean(
    d: usize,
    n: usize,
    theta_star: &SignalVec,
    rng_seed: RngSeed,
) -> Result<MeasurementSet> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "need d >= 1 and n >= 1, got d = {d}, n = {n}"
        )));
    }
    if theta_star.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta_star.dim(),
        });
    }
    let mut rng = rng_seed.rng();
    let items = (0..n)
        .map(|index| {
            let covariate: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
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

/// Applies a corruption plan to a clean set: exactly `plan.k` responses are
/// modified and recorded in the corrupted-index set (an index stays recorded
/// even if its drawn η happens to be exactly zero). Covariates are never
/// touched.
pub fn apply_corruption(
    clean: &MeasurementSet,
    plan: &CorruptionPlan,
    rng_seed: RngSeed,
) -> Result<MeasurementSet> {
    let n = clean.len();
    if plan.k > n {
        return Err(Error::CorruptionExceedsSamples { k: plan.k, n });
    }
    let mut rng = rng_seed.rng();
    let mut targets: Vec<usize> = match plan.selection {
        CorruptionSelection::RandomUniform => sample_indices(&mut rng, n, plan.k).into_vec(),
        CorruptionSelection::LargestResponses => largest_response_indices(clean, plan.k),
    };
    targets.sort_unstable();

    let mut items = clean.items().to_vec();
    let mut corrupted = clean.corrupted_indices().clone();
    for &i in &targets {
        let eta = match &plan.kind {
            CorruptionKind::None => 0.0,
            CorruptionKind::IndependentUniform { lo, hi } => rng.random_range(*lo..=*hi),
            CorruptionKind::IndependentConstant { value } => *value,
            CorruptionKind::IndependentCustom(sampler) => sampler(&mut rng),
            CorruptionKind::StrongAdaptive(rule) => rule(&items[i].covariate, items[i].response),
        };
        items[i].response += eta;
        items[i].true_corruption += eta;
        corrupted.insert(i);
    }
    Ok(clean.with_modified(items, corrupted))
}

/// A concrete strong adversary: zeroes out the `k` largest responses by
/// injecting η = −y, the most aggressive response-dependent rule used in the
/// stress tests.
pub fn strong_adversary_signflip(clean: &MeasurementSet, k: usize) -> Result<MeasurementSet> {
    let plan = CorruptionPlan {
        kind: CorruptionKind::StrongAdaptive(Box::new(|_x, y| -y)),
        k,
        selection: CorruptionSelection::LargestResponses,
    };
    // the adaptive rule draws nothing from the RNG, so the seed is inert
    apply_corruption(clean, &plan, RngSeed::new(0, 0))
}

fn largest_response_indices(set: &MeasurementSet, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| {
        set.get(b)
            .response
            .partial_cmp(&set.get(a).response)
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

// ---------------------------------------------------------------------------
// Columnar dataset text format
//
// Header line: "d n k". One line per measurement: "index y eta x_1 ... x_d".
// Floats carry 17 significant digits so a dump/load round trip is exact for
// 64-bit values. A corruption value that is exactly zero is indistinguishable
// from a clean measurement after a round trip.
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn dataset_to_string(set: &MeasurementSet) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {}\n",
        set.dim(),
        set.len(),
        set.corrupted_indices().len()
    ));
    for m in set.items() {
        out.push_str(&format!(
            "{} {} {}",
            m.index,
            fmt_f64(m.response),
            fmt_f64(m.true_corruption)
        ));
        for x in &m.covariate {
            out.push(' ');
            out.push_str(&fmt_f64(*x));
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_str(text: &str) -> Result<MeasurementSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::DatasetParse {
        line: 1,
        message: "missing header".into(),
    })?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|e| Error::DatasetParse {
                line: 1,
                message: format!("bad header field {t:?}: {e}"),
            })
        })
        .collect::<Result<_>>()?;
    if head.len() != 3 {
        return Err(Error::DatasetParse {
            line: 1,
            message: format!("header needs 3 fields `d n k`, got {}", head.len()),
        });
    }
    let (d, n, k) = (head[0], head[1], head[2]);

    let mut items = Vec::with_capacity(n);
    let mut corrupted = BTreeSet::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::DatasetParse {
            line: lineno + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let index: usize = fields
            .next()
            .ok_or_else(|| parse_err("missing index".into()))?
            .parse()
            .map_err(|e| parse_err(format!("bad index: {e}")))?;
        let next_f64 = |what: &str, fields: &mut dyn Iterator<Item = &str>| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| parse_err(format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad {what}: {e}")))
        };
        let response = next_f64("response", &mut fields)?;
        let eta = next_f64("eta", &mut fields)?;
        let covariate: Vec<f64> = (0..d)
            .map(|j| next_f64(&format!("x_{}", j + 1), &mut fields))
            .collect::<Result<_>>()?;
        if fields.next().is_some() {
            return Err(parse_err("trailing fields".into()));
        }
        if eta != 0.0 {
            corrupted.insert(index);
        }
        items.push(Measurement {
            covariate,
            response,
            true_corruption: eta,
            index,
        });
    }
    if items.len() != n {
        return Err(Error::DatasetParse {
            line: 1,
            message: format!("header says n = {n}, found {} rows", items.len()),
        });
    }
    if corrupted.len() > k {
        return Err(Error::DatasetParse {
            line: 1,
            message: format!(
                "header says k = {k}, found {} nonzero corruption values",
                corrupted.len()
            ),
        });
    }
    MeasurementSet::new(items, d, corrupted)
}

pub fn write_dataset(set: &MeasurementSet, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, dataset_to_string(set))?;
    Ok(())
}

pub fn read_dataset(path: &std::path::Path) -> Result<MeasurementSet> {
    let text = std::fs::read_to_string(path)?;
    dataset_from_str(&text)
}
