//! The least-squares phase oracle: κ²-scaled random initialization, fixed-step
//! gradient descent on the subset loss, and a convex-branch early return.
//!
//! The estimated κ² = 1 + η̄/(3‖θ*‖²) decides everything: a nonpositive value
//! says the average corruption has pushed the landscape into its convex
//! regime, whose minimizer is the origin, so the oracle returns the zero
//! vector without iterating. Otherwise it starts on the sphere of radius
//! √κ² and descends with a constant step.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{IndexSet, MeasurementSet};
use crate::datagen::RngSeed;
use crate::error::{Error, Result};
use crate::objective::CompensatedSum;
use crate::signal::{dot, SignalVec};

/// Which κ² estimator to use. `Moments` is the default; `Trace` is the
/// covariate-norm form, unbiased for 1 + η̄/3 under covariate-independent
/// corruption with a unit-norm signal. The two are not equivalent and both
/// are exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaEstimator {
    Moments,
    Trace,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// The c in μ = c / ‖θ*‖². The squared signal norm is unknown at run
    /// time, so the step uses the mean of the positive responses in the
    /// subset as its stand-in (E y = ‖θ*‖² + η̄ ≈ ‖θ*‖² after trimming).
    pub step_scale_c: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub kappa_estimator: KappaEstimator,
    pub record_trajectory: bool,
    /// Ground truth for trajectory diagnostics (synthetic data only). The
    /// signal/orthogonal components need it; without it they are NaN.
    pub trajectory_truth: Option<SignalVec>,
    /// Scale κ for the trajectory split. Synthetic callers that know the
    /// average corruption pass the true √(1 + η̄/(3‖θ*‖²)); otherwise the
    /// estimated √κ² is used and the orthogonal component floors at the
    /// estimation error instead of contracting to zero.
    pub trajectory_kappa: Option<f64>,
}

impl OracleConfig {
    /// Defaults for dimension `d`: c = 0.1, T = ⌈40·ln(max(d, 2))⌉,
    /// gradient tolerance 1e-10, moments estimator.
    pub fn for_dim(d: usize) -> Self {
        let t = (40.0 * (d.max(2) as f64).ln()).ceil() as usize;
        Self {
            step_scale_c: 0.1,
            max_iters: t,
            grad_tol: 1e-10,
            kappa_estimator: KappaEstimator::Moments,
            record_trajectory: false,
            trajectory_truth: None,
            trajectory_kappa: None,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_step_scale(mut self, c: f64) -> Self {
        self.step_scale_c = c;
        self
    }

    pub fn with_estimator(mut self, estimator: KappaEstimator) -> Self {
        self.kappa_estimator = estimator;
        self
    }

    pub fn with_trajectory(mut self, truth: Option<SignalVec>) -> Self {
        self.record_trajectory = true;
        self.trajectory_truth = truth;
        self
    }

    pub fn with_trajectory_kappa(mut self, kappa: f64) -> Self {
        self.trajectory_kappa = Some(kappa);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.step_scale_c <= 0.0 || self.max_iters == 0 || self.grad_tol < 0.0 {
            return Err(Error::InvalidParameter(
                "oracle config needs step_scale_c > 0, max_iters >= 1, grad_tol >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// κ² ≤ 0: convex landscape, returned the zero vector with no iterations.
    ConvexZero,
    /// Ran gradient descent from the random initialization.
    Gd,
}

/// One recorded iterate: signal component a_t, orthogonal component b_t
/// (NaN when no ground truth was supplied), subset loss, gradient norm.
#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample {
    pub iter: usize,
    pub signal: f64,
    pub orthogonal: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub theta: SignalVec,
    pub kappa_sq: f64,
    pub branch: Branch,
    pub iters_run: usize,
    pub trajectory: Option<Vec<TrajectorySample>>,
}

/// Moment-based κ² estimate over the subset responses:
/// (1/3)(√2·√(Var̂ y) + mean y). The variance radicand is clamped at zero;
/// finite-sample negativity is possible at tiny m.
pub fn kappa_sq_moments(data: &MeasurementSet, subset: &IndexSet) -> Result<f64> {
    let m = subset.len();
    if m < 2 {
        return Err(Error::SubsetTooSmall { needed: 2, got: m });
    }
    let mut sum = CompensatedSum::default();
    let mut sum_sq = CompensatedSum::default();
    for i in subset.iter() {
        let y = data.get(i).response;
        sum.add(y);
        sum_sq.add(y * y);
    }
    let mean = sum.total() / m as f64;
    let variance = (sum_sq.total() / m as f64 - mean * mean).max(0.0);
    Ok(((2.0 * variance).sqrt() + mean) / 3.0)
}

/// Covariate-norm κ² estimate: (1/(3|U|)) Σ (yᵢzᵢ − (d−1)yᵢ) with
/// zᵢ = Σⱼ xᵢⱼ².
pub fn kappa_sq_trace(data: &MeasurementSet, subset: &IndexSet) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let d = data.dim() as f64;
    let mut acc = CompensatedSum::default();
    for i in subset.iter() {
        let m = data.get(i);
        let z: f64 = m.covariate.iter().map(|x| x * x).sum();
        acc.add(m.response * z - (d - 1.0) * m.response);
    }
    Ok(acc.total() / (3.0 * subset.len() as f64))
}

/// Signal and orthogonal components of an iterate against the scaled truth:
/// a = |⟨θ, κθ*⟩| and b = ‖θ − (⟨θ, κθ*⟩/‖θ*‖²)·κθ*‖.
pub fn signal_orthogonal_split(
    theta: &SignalVec,
    theta_star: &SignalVec,
    kappa: f64,
) -> Result<(f64, f64)> {
    if theta.dim() != theta_star.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta_star.dim(),
            got: theta.dim(),
        });
    }
    let star_sq = theta_star.dot(theta_star);
    if star_sq == 0.0 {
        return Err(Error::ZeroReferenceSignal);
    }
    if kappa <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let inner = kappa * theta.dot(theta_star);
    let a = inner.abs();
    let coef = inner / star_sq * kappa;
    let b = theta
        .as_slice()
        .iter()
        .zip(theta_star.as_slice())
        .map(|(t, s)| {
            let r = t - coef * s;
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok((a, b))
}

fn sample_unit_sphere(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&g, &g).sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn mean_positive_response(data: &MeasurementSet, subset: &IndexSet) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in subset.iter() {
        let y = data.get(i).response;
        if y > 0.0 {
            sum += y;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

struct Descent {
    theta: Vec<f64>,
    steps: usize,
    trajectory: Option<Vec<TrajectorySample>>,
}

/// Fixed-step descent θ ← θ − μ∇f_U(θ), stopping on the gradient tolerance
/// or after `max_iters` steps. Loss and gradient come from one fused pass.
fn descend(
    data: &MeasurementSet,
    indices: &[usize],
    mut theta: Vec<f64>,
    mu: f64,
    cfg: &OracleConfig,
    kappa: f64,
) -> Result<Descent> {
    let d = theta.len();
    let mut trajectory = cfg.record_trajectory.then(Vec::new);
    let mut grad = vec![0.0; d];
    let inv_m = 1.0 / indices.len() as f64;
    let mut steps = 0usize;
    loop {
        // fused loss + gradient pass, compensated in a fixed order
        let mut loss_acc = CompensatedSum::default();
        let mut grad_acc = vec![CompensatedSum::default(); d];
        for &i in indices {
            let m = data.get(i);
            let s = dot(&m.covariate, &theta);
            let r = s * s - m.response;
            loss_acc.add(r * r);
            let coef = r * s;
            for (a, x) in grad_acc.iter_mut().zip(&m.covariate) {
                a.add(coef * x);
            }
        }
        let loss = loss_acc.total() / (4.0 * indices.len() as f64);
        if !loss.is_finite() {
            return Err(Error::StepSizeTooLarge { iteration: steps });
        }
        for (g, a) in grad.iter_mut().zip(&grad_acc) {
            *g = a.total() * inv_m;
        }
        let grad_norm = dot(&grad, &grad).sqrt();

        if let Some(traj) = trajectory.as_mut() {
            let (a, b) = match &cfg.trajectory_truth {
                Some(truth) => {
                    let current = SignalVec::new(theta.clone())
                        .map_err(|_| Error::StepSizeTooLarge { iteration: steps })?;
                    let split_kappa = cfg.trajectory_kappa.unwrap_or(kappa);
                    signal_orthogonal_split(&current, truth, split_kappa)?
                }
                None => (f64::NAN, f64::NAN),
            };
            traj.push(TrajectorySample {
                iter: steps,
                signal: a,
                orthogonal: b,
                loss,
                grad_norm,
            });
        }

        if grad_norm <= cfg.grad_tol || steps >= cfg.max_iters {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= mu * g;
        }
        steps += 1;
    }
    Ok(Descent {
        theta,
        steps,
        trajectory,
    })
}

/// Runs the oracle on the given subset: estimate κ², return the zero vector
/// if it is nonpositive, otherwise descend from a random point on the sphere
/// of radius √κ².
pub fn run_oracle(
    data: &MeasurementSet,
    subset: &IndexSet,
    cfg: &OracleConfig,
    rng_seed: RngSeed,
) -> Result<OracleResult> {
    cfg.validate()?;
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let kappa_sq = match cfg.kappa_estimator {
        KappaEstimator::Moments => kappa_sq_moments(data, subset)?,
        KappaEstimator::Trace => kappa_sq_trace(data, subset)?,
    };
    if kappa_sq <= 0.0 {
        return Ok(OracleResult {
            theta: SignalVec::zeros(data.dim()),
            kappa_sq,
            branch: Branch::ConvexZero,
            iters_run: 0,
            trajectory: None,
        });
    }

    let mu = cfg.step_scale_c / mean_positive_response(data, subset).max(1e-8);
    let mut rng = rng_seed.rng();
    let kappa = kappa_sq.sqrt();
    let init: Vec<f64> = sample_unit_sphere(&mut rng, data.dim())
        .into_iter()
        .map(|u| kappa * u)
        .collect();

    let out = descend(data, subset.as_slice(), init, mu, cfg, kappa)?;
    Ok(OracleResult {
        theta: SignalVec::new(out.theta).map_err(|_| Error::StepSizeTooLarge {
            iteration: out.steps,
        })?,
        kappa_sq,
        branch: Branch::Gd,
        iters_run: out.steps,
        trajectory: out.trajectory,
    })
}

/// Trajectory dump, one row per recorded iterate.
pub fn trajectory_csv(samples: &[TrajectorySample]) -> String {
    let mut out = String::from("iter,a_t,b_t,loss,grad_norm\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.iter, s.signal, s.orthogonal, s.loss, s.grad_norm
        ));
    }
    out
}
