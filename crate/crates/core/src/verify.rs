//! Independent numerical oracles and statistical checks: central finite
//! differences, exhaustive subset search, and Monte Carlo probes of the tail
//! and moment bounds the solver relies on.
//!
//! Every check is deterministic given its seed, so the suite can run as a
//! pre-build gate. Checks are independent of the implementation paths they
//! test: the differences below go through the loss value only, never the
//! analytic gradient.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::data::{IndexSet, MeasurementSet};
use crate::datagen::{generate_clean, RngSeed};
use crate::error::{Error, Result};
use crate::objective;
use crate::signal::SignalVec;

/// Outcome of one named check. `passed` holds exactly when `observed` is
/// within `threshold` in the check's stated direction.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckReport {
    /// One JSON-lines record: {"name","passed","observed","threshold"}.
    pub fn json_line(&self) -> String {
        format!(
            "{{\"name\":\"{}\",\"passed\":{},\"observed\":{},\"threshold\":{}}}",
            self.name, self.passed, self.observed, self.threshold
        )
    }
}

/// Central finite differences of the subset loss, coordinate by coordinate.
/// The gradient ground truth everywhere else.
pub fn finite_diff_gradient(
    data: &MeasurementSet,
    subset: &IndexSet,
    theta: &SignalVec,
    h: f64,
) -> Result<SignalVec> {
    if h <= 0.0 {
        return Err(Error::InvalidParameter("step h must be positive".into()));
    }
    let base = theta.as_slice();
    let mut out = Vec::with_capacity(theta.dim());
    let mut probe = base.to_vec();
    for j in 0..theta.dim() {
        probe[j] = base[j] + h;
        let plus = objective::loss(data, subset, &SignalVec::new(probe.clone())?)?;
        probe[j] = base[j] - h;
        let minus = objective::loss(data, subset, &SignalVec::new(probe.clone())?)?;
        probe[j] = base[j];
        out.push((plus - minus) / (2.0 * h));
    }
    SignalVec::new(out)
}

/// Directional second difference (f(θ + hv) − 2f(θ) + f(θ − hv)) / h²,
/// the ground truth for the Hessian quadratic form.
pub fn finite_diff_hessian_quadratic(
    data: &MeasurementSet,
    subset: &IndexSet,
    theta: &SignalVec,
    v: &SignalVec,
    h: f64,
) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::InvalidParameter("step h must be positive".into()));
    }
    let shift = |sign: f64| -> Result<f64> {
        let point = SignalVec::new(
            theta
                .as_slice()
                .iter()
                .zip(v.as_slice())
                .map(|(t, w)| t + sign * h * w)
                .collect(),
        )?;
        objective::loss(data, subset, &point)
    };
    let center = objective::loss(data, subset, theta)?;
    Ok((shift(1.0)? - 2.0 * center + shift(-1.0)?) / (h * h))
}

fn binomial(m: usize, k: usize) -> f64 {
    let k = k.min(m - k.min(m));
    let mut out = 1.0;
    for i in 0..k {
        out *= (m - i) as f64 / (i + 1) as f64;
        if out > 1e12 {
            return out;
        }
    }
    out
}

/// Exhaustive realization of the subset selection: enumerates every subset of
/// the given size and returns the loss-minimizing one (ties resolve to the
/// lexicographically smallest index list). Guarded to at most 10^6 subsets.
pub fn brute_force_select(
    data: &MeasurementSet,
    s_tilde: &IndexSet,
    theta: &SignalVec,
    size: usize,
) -> Result<IndexSet> {
    let m = s_tilde.len();
    if size > m {
        return Err(Error::SubsetTooSmall {
            needed: size,
            got: m,
        });
    }
    let combos = binomial(m, size);
    if combos > 1e6 {
        return Err(Error::BruteForceGuardExceeded {
            combinations: combos,
        });
    }
    let candidates = s_tilde.as_slice();
    let residuals: Vec<f64> = candidates
        .iter()
        .map(|&i| {
            let meas = data.get(i);
            let s: f64 = meas
                .covariate
                .iter()
                .zip(theta.as_slice())
                .map(|(x, t)| x * t)
                .sum();
            let r = meas.response - s * s;
            r * r
        })
        .collect();

    let mut combo: Vec<usize> = (0..size).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let total: f64 = combo.iter().map(|&pos| residuals[pos]).sum();
        // strict comparison keeps the first (lexicographically smallest) tie
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, combo.clone()));
        }
        // advance to the next combination in lexicographic order
        let mut i = size;
        loop {
            if i == 0 {
                let (_, positions) = best.unwrap();
                let picked = positions.into_iter().map(|pos| candidates[pos]).collect();
                return IndexSet::new(picked, data.len());
            }
            i -= 1;
            if combo[i] < m - size + i {
                combo[i] += 1;
                for j in i + 1..size {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Monte Carlo check of the max-of-squared-Gaussians tail bound
/// P[max g² ≥ 8 ln n] ≤ 2/n, with a 3-sigma binomial band on top.
pub fn max_chisq_tail_check(n: usize, trials: usize, rng_seed: RngSeed) -> Result<CheckReport> {
    max_chisq_tail_check_with_factor(n, trials, 8.0, rng_seed)
}

/// Same check with a configurable factor in front of ln n; lowering it far
/// enough makes the check fail, demonstrating that the test has power.
pub fn max_chisq_tail_check_with_factor(
    n: usize,
    trials: usize,
    factor: f64,
    rng_seed: RngSeed,
) -> Result<CheckReport> {
    if n < 2 || trials < 100 {
        return Err(Error::InvalidParameter(
            "need n >= 2 and trials >= 100".into(),
        ));
    }
    let cutoff = factor * (n as f64).ln();
    let mut rng = rng_seed.rng();
    let mut exceeded = 0usize;
    for _ in 0..trials {
        let mut max_sq: f64 = 0.0;
        for _ in 0..n {
            let g: f64 = rng.sample(StandardNormal);
            max_sq = max_sq.max(g * g);
        }
        if max_sq >= cutoff {
            exceeded += 1;
        }
    }
    let p_hat = exceeded as f64 / trials as f64;
    let stderr = (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    let threshold = 2.0 / n as f64 + 3.0 * stderr;
    Ok(CheckReport {
        name: format!("max_chisq_tail_n{n}"),
        passed: p_hat <= threshold,
        observed: p_hat,
        threshold,
        detail: format!("factor {factor}, cutoff {cutoff:.3}, {exceeded}/{trials} exceedances"),
    })
}

// Gaussian moment constants for the probe combinations, with the fixed unit
// direction z = e2 orthogonal to the first coordinate. Obtained by
// Gauss-Hermite quadrature (see `gauss_hermite_moment` and its test):
//   (p, q) = (4, 0): E g^4          = 3
//   (p, q) = (2, 2): E g^2 * E h^2  = 1
//   (p, q) = (3, 1): E g^3 * E h    = 0
const MOMENT_CONSTANTS: [(u32, u32, f64); 3] = [(4, 0, 3.0), (2, 2, 1.0), (3, 1, 0.0)];

pub fn moment_constant(p: u32, q: u32) -> Result<f64> {
    MOMENT_CONSTANTS
        .iter()
        .find(|(cp, cq, _)| *cp == p && *cq == q)
        .map(|&(_, _, c)| c)
        .ok_or(Error::InvalidMomentOrders { p, q })
}

/// Empirical check that (1/N) Σ ⟨xᵢ, z⟩ᵖ xᵢ₁^q concentrates on its Gaussian
/// moment constant, with z = e₂ fixed. The band is the 3-sigma Monte Carlo
/// standard error over all N = n·trials samples.
pub fn concentration_probe(
    d: usize,
    n: usize,
    p: u32,
    q: u32,
    trials: usize,
    rng_seed: RngSeed,
) -> Result<CheckReport> {
    let constant = moment_constant(p, q)?;
    if d < 2 || n == 0 || trials == 0 {
        return Err(Error::InvalidParameter(
            "need d >= 2, n >= 1, trials >= 1".into(),
        ));
    }
    let mut rng = rng_seed.rng();
    let total = n * trials;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut x = vec![0.0f64; d];
    for _ in 0..total {
        for entry in x.iter_mut() {
            *entry = rng.sample(StandardNormal);
        }
        let along_z = x[1]; // z = e2
        let term = along_z.powi(p as i32) * x[0].powi(q as i32);
        sum += term;
        sum_sq += term * term;
    }
    let mean = sum / total as f64;
    let variance = (sum_sq / total as f64 - mean * mean).max(0.0);
    let threshold = 3.0 * (variance / total as f64).sqrt();
    let observed = (mean - constant).abs();
    Ok(CheckReport {
        name: format!("concentration_p{p}q{q}"),
        passed: observed <= threshold,
        observed,
        threshold,
        detail: format!("mean {mean:.6} vs constant {constant}, N = {total}"),
    })
}

/// E[g^p] for standard normal g via Gauss-Hermite quadrature; used to
/// validate the constants table above rather than trusting the double
/// factorial by fiat.
pub fn gauss_hermite_moment(p: u32, nodes: usize) -> f64 {
    let (points, weights) = gauss_hermite_rule(nodes);
    let scale = std::f64::consts::PI.sqrt();
    points
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * (std::f64::consts::SQRT_2 * x).powi(p as i32))
        .sum::<f64>()
        / scale
}

/// Nodes and weights for ∫ f(x) e^{-x²} dx, by Newton iteration on the
/// orthonormal Hermite recurrence.
fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2 - (((j - 1) as f64) / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

type GradientFn = dyn Fn(&MeasurementSet, &IndexSet, &SignalVec) -> Result<SignalVec>;

fn random_instance(
    rng: &mut ChaCha12Rng,
    max_d: usize,
    max_n: usize,
) -> (MeasurementSet, SignalVec) {
    let d = rng.random_range(1..=max_d);
    let n = rng.random_range(2..=max_n);
    let theta_star = SignalVec::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let seed = rng.random::<u64>();
    let set = generate_clean(d, n, &theta_star, RngSeed::new(seed, 0)).unwrap();
    let theta = SignalVec::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    (set, theta)
}

/// Checks an arbitrary gradient implementation against central finite
/// differences on 100 random small instances. Parameterized so the test of
/// the test can feed a deliberately wrong gradient through the same gate.
pub fn gradient_agreement_check(grad_fn: &GradientFn, rng_seed: RngSeed) -> CheckReport {
    let mut rng = rng_seed.rng();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (set, theta) = random_instance(&mut rng, 8, 32);
        let full = IndexSet::full(set.len());
        let h = 1e-5 * (1.0 + theta.norm());
        let fd = finite_diff_gradient(&set, &full, &theta, h).unwrap();
        let g = match grad_fn(&set, &full, &theta) {
            Ok(g) => g,
            Err(_) => {
                return CheckReport {
                    name: "gradient_vs_finite_difference".into(),
                    passed: false,
                    observed: f64::MAX,
                    threshold: 1e-6,
                    detail: "gradient evaluation failed".into(),
                }
            }
        };
        let err: f64 = fd
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / g.norm().max(1e-8));
    }
    CheckReport {
        name: "gradient_vs_finite_difference".into(),
        passed: worst <= 1e-6,
        observed: worst,
        threshold: 1e-6,
        detail: "100 random instances, d <= 8, n <= 32".into(),
    }
}

/// Checks the Hessian quadratic form against directional second differences
/// on 100 random small instances.
pub fn hessian_agreement_check(rng_seed: RngSeed) -> CheckReport {
    let mut rng = rng_seed.rng();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (set, theta) = random_instance(&mut rng, 8, 32);
        let full = IndexSet::full(set.len());
        let v = SignalVec::new(
            (0..theta.dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let h = 1e-4 * (1.0 + theta.norm());
        let fd = finite_diff_hessian_quadratic(&set, &full, &theta, &v, h).unwrap();
        let q = objective::hessian_quadratic_form(&set, &full, &theta, &v).unwrap();
        worst = worst.max((fd - q).abs() / q.abs().max(1e-6));
    }
    CheckReport {
        name: "hessian_vs_second_difference".into(),
        passed: worst <= 1e-4,
        observed: worst,
        threshold: 1e-4,
        detail: "100 random instances, d <= 8, n <= 32".into(),
    }
}

/// Checks the sorting-based subset selection against exhaustive search on
/// 200 random instances with at most 12 candidates.
pub fn selection_agreement_check(rng_seed: RngSeed) -> CheckReport {
    let mut rng = rng_seed.rng();
    let mut mismatches = 0usize;
    for _ in 0..200 {
        let (set, theta) = random_instance(&mut rng, 5, 12);
        let n = set.len();
        let k = rng.random_range(0..=(n.saturating_sub(1)) / 2);
        let s_tilde = IndexSet::full(n);
        let fast = crate::altmin::select_subset(&set, &s_tilde, &theta, k).unwrap();
        let slow = brute_force_select(&set, &s_tilde, &theta, n - 2 * k).unwrap();
        if fast != slow {
            mismatches += 1;
        }
    }
    CheckReport {
        name: "selection_vs_brute_force".into(),
        passed: mismatches == 0,
        observed: mismatches as f64,
        threshold: 0.0,
        detail: "200 random instances, |S~| <= 12".into(),
    }
}

/// The full deterministic pre-build gate. Streams are derived from the given
/// seed so individual checks stay independent.
pub fn default_checks(rng_seed: RngSeed) -> Vec<CheckReport> {
    let stream = |offset: u64| RngSeed::new(rng_seed.seed, rng_seed.stream + offset);
    let mut reports = vec![
        gradient_agreement_check(
            &|data, subset, theta| objective::gradient(data, subset, theta),
            stream(0),
        ),
        hessian_agreement_check(stream(1)),
        selection_agreement_check(stream(2)),
    ];
    for (offset, n) in [(3u64, 100usize), (4, 1_000), (5, 10_000)] {
        reports.push(max_chisq_tail_check(n, 1_000, stream(offset)).unwrap());
    }
    for (offset, (p, q)) in [(6u64, (4u32, 0u32)), (7, (2, 2)), (8, (3, 1))] {
        reports.push(concentration_probe(4, 100_000, p, q, 1, stream(offset)).unwrap());
    }
    reports
}
