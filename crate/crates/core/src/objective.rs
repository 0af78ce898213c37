//! The quartic least-squares objective restricted to an index set, its
//! gradient and Hessian quadratic form, and the closed-form expected
//! landscape in the unit-norm, first-basis-vector frame.
//!
//! Empirical sums use Neumaier-compensated accumulation in a fixed order:
//! the quartic residuals cancel heavily near the optimum, and the tests
//! assume at most ~1e−12 of accumulation error at n up to 1e5. Results are
//! therefore reproducible regardless of any outer parallelism.

use crate::data::{IndexSet, MeasurementSet};
use crate::error::{Error, Result};
use crate::signal::{dot, SignalVec};

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Value (and optionally gradient) of the subset loss at one point.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Option<SignalVec>,
    pub subset_size: usize,
}

fn check_subset(data: &MeasurementSet, subset: &IndexSet) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    debug_assert!(subset.as_slice().last().is_none_or(|&i| i < data.len()));
    Ok(())
}

fn check_dim(data: &MeasurementSet, v: &SignalVec) -> Result<()> {
    if v.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: v.dim(),
        });
    }
    Ok(())
}

pub(crate) fn loss_raw(data: &MeasurementSet, indices: &[usize], theta: &[f64]) -> f64 {
    let mut acc = CompensatedSum::default();
    for &i in indices {
        let m = data.get(i);
        let s = dot(&m.covariate, theta);
        let r = s * s - m.response;
        acc.add(r * r);
    }
    acc.total() / (4.0 * indices.len() as f64)
}

pub(crate) fn gradient_raw(
    data: &MeasurementSet,
    indices: &[usize],
    theta: &[f64],
    out: &mut [f64],
) {
    let d = theta.len();
    let mut acc = vec![CompensatedSum::default(); d];
    for &i in indices {
        let m = data.get(i);
        let s = dot(&m.covariate, theta);
        let coef = (s * s - m.response) * s;
        for (a, x) in acc.iter_mut().zip(&m.covariate) {
            a.add(coef * x);
        }
    }
    let inv_m = 1.0 / indices.len() as f64;
    for (o, a) in out.iter_mut().zip(&acc) {
        *o = a.total() * inv_m;
    }
}

/// f_U(θ) = (1/4|U|) Σ_{i∈U} (⟨x_i, θ⟩² − y_i)². Zero exactly when every
/// residual in the subset is zero.
pub fn loss(data: &MeasurementSet, subset: &IndexSet, theta: &SignalVec) -> Result<f64> {
    check_subset(data, subset)?;
    check_dim(data, theta)?;
    Ok(loss_raw(data, subset.as_slice(), theta.as_slice()))
}

/// ∇f_U(θ) = (1/|U|) Σ_{i∈U} (⟨x_i, θ⟩² − y_i) ⟨x_i, θ⟩ x_i.
pub fn gradient(data: &MeasurementSet, subset: &IndexSet, theta: &SignalVec) -> Result<SignalVec> {
    check_subset(data, subset)?;
    check_dim(data, theta)?;
    let mut out = vec![0.0; theta.dim()];
    gradient_raw(data, subset.as_slice(), theta.as_slice(), &mut out);
    SignalVec::new(out)
}

/// Loss value with an optional gradient in one pass over the subset.
pub fn evaluate(
    data: &MeasurementSet,
    subset: &IndexSet,
    theta: &SignalVec,
    with_gradient: bool,
) -> Result<LossEval> {
    let value = loss(data, subset, theta)?;
    let gradient = if with_gradient {
        Some(gradient(data, subset, theta)?)
    } else {
        None
    };
    Ok(LossEval {
        value,
        gradient,
        subset_size: subset.len(),
    })
}

/// vᵀ ∇²f_U(θ) v = (1/|U|) Σ_{i∈U} (3⟨x_i, θ⟩² − y_i) ⟨x_i, v⟩².
///
/// The Hessian is never materialized; memory stays O(nd).
pub fn hessian_quadratic_form(
    data: &MeasurementSet,
    subset: &IndexSet,
    theta: &SignalVec,
    v: &SignalVec,
) -> Result<f64> {
    check_subset(data, subset)?;
    check_dim(data, theta)?;
    check_dim(data, v)?;
    let mut acc = CompensatedSum::default();
    for i in subset.iter() {
        let m = data.get(i);
        let s = dot(&m.covariate, theta.as_slice());
        let xv = dot(&m.covariate, v.as_slice());
        acc.add((3.0 * s * s - m.response) * xv * xv);
    }
    Ok(acc.total() / subset.len() as f64)
}

// ---------------------------------------------------------------------------
// Expected landscape, valid only in the frame where the true signal is the
// first standard basis vector with unit norm. Callers rotate and scale
// externally; the general-norm closed form is never needed.
// ---------------------------------------------------------------------------

/// Population loss F_U(θ) for average corruption η̄ and mean squared
/// corruption (1/m)Σηᵢ², in the unit-norm e₁ frame.
pub fn expected_loss(theta: &SignalVec, eta_bar: f64, eta_sq_mean: f64) -> f64 {
    let r2 = theta.dot(theta);
    let t1 = theta[0];
    0.25 * (3.0 * r2 * r2 + 3.0 - 4.0 * t1 * t1 - 2.0 * r2 - 2.0 * r2 * eta_bar
        + 2.0 * eta_bar
        + eta_sq_mean)
}

/// Population gradient ∇F_U(θ) = (3‖θ‖² − 1 − η̄)θ − 2⟨θ, e₁⟩e₁.
///
/// Vanishes exactly at the origin, on the orthogonal saddle circle
/// {‖θ‖² = (1 + η̄)/3, θ₁ = 0} (for η̄ ≥ −1), and at the displaced minima
/// ±√(1 + η̄/3)·e₁ (for η̄ > −3).
pub fn expected_gradient(theta: &SignalVec, eta_bar: f64) -> SignalVec {
    let r2 = theta.dot(theta);
    let radial = 3.0 * r2 - 1.0 - eta_bar;
    let mut out: Vec<f64> = theta.as_slice().iter().map(|t| radial * t).collect();
    out[0] -= 2.0 * theta[0];
    SignalVec::new(out).expect("finite by construction")
}

/// vᵀ ∇²F_U(θ) v obtained by differentiating `expected_gradient`:
/// (3‖θ‖² − 1 − η̄)‖v‖² + 6⟨θ, v⟩² − 2v₁².
pub fn expected_hessian_quadratic_form(theta: &SignalVec, v: &SignalVec, eta_bar: f64) -> f64 {
    let r2 = theta.dot(theta);
    let tv = theta.dot(v);
    let v2 = v.dot(v);
    (3.0 * r2 - 1.0 - eta_bar) * v2 + 6.0 * tv * tv - 2.0 * v[0] * v[0]
}

/// Rectangular 2-D evaluation box for landscape grids.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Number of points per axis (at least 2).
    pub steps: usize,
}

/// Renders `expected_loss` over a 2-D box as text rows "theta1 theta2 F".
pub fn landscape_grid(eta_bar: f64, eta_sq_mean: f64, spec: &GridSpec) -> Result<String> {
    if spec.steps < 2 || spec.x_max <= spec.x_min || spec.y_max <= spec.y_min {
        return Err(Error::InvalidParameter(
            "grid needs steps >= 2 and a nonempty box".into(),
        ));
    }
    let mut out = String::new();
    let nx = spec.steps;
    let ny = spec.steps;
    for ix in 0..nx {
        let x = spec.x_min + (spec.x_max - spec.x_min) * ix as f64 / (nx - 1) as f64;
        for iy in 0..ny {
            let y = spec.y_min + (spec.y_max - spec.y_min) * iy as f64 / (ny - 1) as f64;
            let theta = SignalVec::new(vec![x, y]).expect("grid points are finite");
            let f = expected_loss(&theta, eta_bar, eta_sq_mean);
            out.push_str(&format!("{x} {y} {f}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::clean_set_from_covariates;
    use crate::datagen::{generate_clean, RngSeed};
    use crate::verify::{finite_diff_gradient, finite_diff_hessian_quadratic};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn sv(entries: &[f64]) -> SignalVec {
        SignalVec::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn loss_single_measurement_hand_value() {
        let theta_star = sv(&[1.0, 0.0]);
        let set = clean_set_from_covariates(vec![vec![1.0, 0.0]], &theta_star).unwrap();
        let full = IndexSet::full(1);
        let at_zero = loss(&set, &full, &SignalVec::zeros(2)).unwrap();
        assert_eq!(at_zero, 0.25);
    }

    #[test]
    fn loss_vanishes_at_truth_and_interpolation() {
        let theta_star = sv(&[1.0, 2.0]);
        let set =
            clean_set_from_covariates(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &theta_star).unwrap();
        let full = IndexSet::full(2);
        assert_eq!(loss(&set, &full, &theta_star).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_bundles_value_and_gradient() {
        let theta_star = sv(&[1.0, 2.0]);
        let set =
            clean_set_from_covariates(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &theta_star).unwrap();
        let full = IndexSet::full(2);
        let at = sv(&[0.5, 0.5]);
        let eval = evaluate(&set, &full, &at, true).unwrap();
        assert_eq!(eval.value, loss(&set, &full, &at).unwrap());
        assert_eq!(eval.subset_size, 2);
        let g = eval.gradient.unwrap();
        assert_eq!(g.as_slice(), gradient(&set, &full, &at).unwrap().as_slice());
        let bare = evaluate(&set, &full, &at, false).unwrap();
        assert!(bare.gradient.is_none());
    }

    #[test]
    fn loss_rejects_empty_subset() {
        let theta_star = sv(&[1.0]);
        let set = clean_set_from_covariates(vec![vec![1.0]], &theta_star).unwrap();
        let empty = IndexSet::new(vec![], 1).unwrap();
        assert!(matches!(
            loss(&set, &empty, &theta_star),
            Err(Error::EmptySubset)
        ));
    }

    #[test]
    fn gradient_vanishes_at_zero_and_truth() {
        let theta_star = sv(&[0.4, -1.1, 0.9]);
        let set = generate_clean(3, 20, &theta_star, RngSeed::new(13, 0)).unwrap();
        let full = IndexSet::full(20);
        let g0 = gradient(&set, &full, &SignalVec::zeros(3)).unwrap();
        assert!(g0.as_slice().iter().all(|&v| v == 0.0));
        let g_star = gradient(&set, &full, &theta_star).unwrap();
        assert!(g_star.as_slice().iter().all(|&v| v == 0.0));
    }

    fn random_instance(seed: u64) -> (MeasurementSet, IndexSet, SignalVec) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=8);
        let n = rng.random_range(2..=32);
        let theta_star =
            SignalVec::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let set = generate_clean(d, n, &theta_star, RngSeed::new(seed, 5)).unwrap();
        let theta = SignalVec::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        (set, IndexSet::full(n), theta)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..100 {
            let (set, full, theta) = random_instance(seed);
            let h = 1e-5 * (1.0 + theta.norm());
            let fd = finite_diff_gradient(&set, &full, &theta, h).unwrap();
            let g = gradient(&set, &full, &theta).unwrap();
            let err: f64 = fd
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale = g.norm().max(1e-8);
            assert!(err / scale <= 1e-6, "seed {seed}: rel err {}", err / scale);
        }
    }

    #[test]
    fn hessian_quadratic_form_hand_value() {
        let theta_star = sv(&[0.0, 0.0]);
        let set = clean_set_from_covariates(vec![vec![1.0, 0.0]], &theta_star).unwrap();
        let full = IndexSet::full(1);
        let theta = sv(&[1.0, 0.0]);
        let v = sv(&[1.0, 0.0]);
        // single term (3·1 − 0)·1 = 3
        assert_eq!(
            hessian_quadratic_form(&set, &full, &theta, &v).unwrap(),
            3.0
        );
        let zero = SignalVec::zeros(2);
        assert_eq!(
            hessian_quadratic_form(&set, &full, &theta, &zero).unwrap(),
            0.0
        );
    }

    #[test]
    fn hessian_matches_second_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for seed in 0..100 {
            let (set, full, theta) = random_instance(seed + 1000);
            let v = SignalVec::new(
                (0..theta.dim())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let h = 1e-4 * (1.0 + theta.norm());
            let fd = finite_diff_hessian_quadratic(&set, &full, &theta, &v, h).unwrap();
            let q = hessian_quadratic_form(&set, &full, &theta, &v).unwrap();
            let scale = q.abs().max(1e-6);
            assert!(
                (fd - q).abs() / scale <= 1e-4,
                "seed {seed}: fd {fd} vs {q}"
            );
        }
    }

    #[test]
    fn loss_is_even_gradient_is_odd() {
        for seed in 0..20 {
            let (set, full, theta) = random_instance(seed + 300);
            let minus = theta.flipped();
            let l = loss(&set, &full, &theta).unwrap();
            let l_neg = loss(&set, &full, &minus).unwrap();
            assert_eq!(l, l_neg);
            let g = gradient(&set, &full, &theta).unwrap();
            let g_neg = gradient(&set, &full, &minus).unwrap();
            for (a, b) in g.as_slice().iter().zip(g_neg.as_slice()) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn hessian_form_is_quadratic_in_v() {
        let (set, full, theta) = random_instance(77);
        let d = theta.dim();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let v = SignalVec::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let q = hessian_quadratic_form(&set, &full, &theta, &v).unwrap();
        let q_neg = hessian_quadratic_form(&set, &full, &theta, &v.flipped()).unwrap();
        assert_eq!(q, q_neg);
        let q_scaled = hessian_quadratic_form(&set, &full, &theta, &v.scaled(2.5)).unwrap();
        assert!((q_scaled - 6.25 * q).abs() <= 1e-10 * q.abs().max(1.0));
    }

    #[test]
    fn expected_loss_hand_values() {
        let e1 = sv(&[1.0, 0.0]);
        assert_eq!(expected_loss(&e1, 0.0, 0.0), 0.0);
        let zero = SignalVec::zeros(2);
        assert_eq!(expected_loss(&zero, 0.0, 0.0), 0.75);
        assert_eq!(expected_loss(&zero, -3.0, 9.0), 1.5);
    }

    #[test]
    fn expected_gradient_vanishes_on_critical_sets() {
        let zero = SignalVec::zeros(3);
        assert!(expected_gradient(&zero, 0.7)
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));

        for eta_bar in [-2.9, -1.0, 0.0, 1.5] {
            let radius = (1.0 + eta_bar / 3.0_f64).sqrt();
            for sign in [-1.0, 1.0] {
                let theta = SignalVec::scaled_e1(3, sign * radius);
                let g = expected_gradient(&theta, eta_bar);
                assert!(g.norm() < 1e-14, "eta_bar {eta_bar}: |g| = {}", g.norm());
            }
        }

        for eta_bar in [-1.0, 0.0, 2.0] {
            let radius = ((1.0 + eta_bar) / 3.0_f64).sqrt();
            let theta = sv(&[0.0, radius * 0.6, radius * 0.8]);
            let g = expected_gradient(&theta, eta_bar);
            assert!(g.norm() < 1e-14, "eta_bar {eta_bar}: |g| = {}", g.norm());
        }
    }

    #[test]
    fn expected_gradient_nonzero_away_from_critical_sets() {
        for eta_bar in [0.0, -1.5, -4.0] {
            let mut critical: Vec<[f64; 2]> = vec![[0.0, 0.0]];
            if eta_bar > -3.0 {
                let r = (1.0 + eta_bar / 3.0_f64).sqrt();
                critical.push([r, 0.0]);
                critical.push([-r, 0.0]);
            }
            if eta_bar >= -1.0 {
                let r = ((1.0 + eta_bar) / 3.0_f64).sqrt();
                critical.push([0.0, r]);
                critical.push([0.0, -r]);
            }
            let steps = 81;
            for ix in 0..steps {
                for iy in 0..steps {
                    let x = -2.0 + 4.0 * ix as f64 / (steps - 1) as f64;
                    let y = -2.0 + 4.0 * iy as f64 / (steps - 1) as f64;
                    let dist = critical
                        .iter()
                        .map(|c| ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min);
                    if dist < 1e-2 {
                        continue;
                    }
                    let g = expected_gradient(&sv(&[x, y]), eta_bar);
                    assert!(
                        g.norm() > 1e-8,
                        "eta_bar {eta_bar}: zero gradient off critical set at ({x}, {y})"
                    );
                }
            }
        }
    }

    #[test]
    fn expected_hessian_matches_second_differences_of_expected_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..50 {
            let eta_bar = rng.random_range(-4.0..2.0);
            let theta = sv(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
            let v = sv(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let h = 1e-4;
            let plus = SignalVec::new(
                theta
                    .as_slice()
                    .iter()
                    .zip(v.as_slice())
                    .map(|(t, w)| t + h * w)
                    .collect(),
            )
            .unwrap();
            let minus = SignalVec::new(
                theta
                    .as_slice()
                    .iter()
                    .zip(v.as_slice())
                    .map(|(t, w)| t - h * w)
                    .collect(),
            )
            .unwrap();
            let fd = (expected_loss(&plus, eta_bar, 0.0)
                - 2.0 * expected_loss(&theta, eta_bar, 0.0)
                + expected_loss(&minus, eta_bar, 0.0))
                / (h * h);
            let q = expected_hessian_quadratic_form(&theta, &v, eta_bar);
            assert!((fd - q).abs() <= 1e-4 * q.abs().max(1.0), "fd {fd} vs {q}");
        }
    }

    #[test]
    fn empirical_loss_approaches_expected_loss() {
        // clean data, unit e1 signal; tolerance 5/sqrt(n) for ‖θ‖ ≤ 2
        let n = 100_000;
        let theta_star = SignalVec::scaled_e1(4, 1.0);
        let set = generate_clean(4, n, &theta_star, RngSeed::new(2024, 0)).unwrap();
        let full = IndexSet::full(n);
        let tol = 5.0 / (n as f64).sqrt();
        for theta in [
            sv(&[0.5, 0.0, 0.0, 0.0]),
            sv(&[0.8, 0.3, -0.2, 0.1]),
            sv(&[0.0, 1.0, 0.0, 0.0]),
            sv(&[1.2, -0.9, 0.5, -0.7]),
        ] {
            let emp = loss(&set, &full, &theta).unwrap();
            let exp = expected_loss(&theta, 0.0, 0.0);
            assert!(
                (emp - exp).abs() < tol,
                "theta {:?}: emp {emp} vs exp {exp} (tol {tol})",
                theta.as_slice()
            );
        }
    }

    #[test]
    fn landscape_grid_minima_match_displaced_optima() {
        let spec = GridSpec {
            x_min: -2.0,
            x_max: 2.0,
            y_min: -2.0,
            y_max: 2.0,
            steps: 81,
        };
        for (eta_bar, radius) in [(0.0, 1.0), (-1.5, 0.5f64.sqrt())] {
            let grid = landscape_grid(eta_bar, 0.0, &spec).unwrap();
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for line in grid.lines() {
                let f: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
                if f[2] < best.0 {
                    best = (f[2], f[0], f[1]);
                }
            }
            let step = 4.0 / 80.0;
            assert!(
                (best.1.abs() - radius).abs() <= step && best.2.abs() <= step,
                "eta_bar {eta_bar}: minimum at ({}, {})",
                best.1,
                best.2
            );
        }
        // convex regime: unique minimum at the origin
        let grid = landscape_grid(-4.0, 0.0, &spec).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for line in grid.lines() {
            let f: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
            if f[2] < best.0 {
                best = (f[2], f[0], f[1]);
            }
        }
        assert_eq!((best.1, best.2), (0.0, 0.0));
    }
}
