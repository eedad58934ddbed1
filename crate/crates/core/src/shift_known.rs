//! Conformal intervals under a known baseline policy and an additive soft
//! intervention on the treatment.
//!
//! The covariate shift induced by shifting every dose by `delta_a` is the
//! one-parameter ray `{theta * w(x, a)}` with density-ratio weights
//! `w = pi(a + delta_a | x) / pi(a | x)`. The optimal imputed score is the
//! largest `S` whose dual multiplier `eta_{n+1}` stays strictly below
//! `1 - alpha`, located by bracket expansion and bisection.

use crate::error::{Error, Result};
use crate::quantile::PinballConfig;
use crate::types::{
    build_interval, CalibratedScores, OutcomePredictor, PredictionInterval, PropensityModel,
};

/// Guard against floating-point flapping of the bisection predicate
/// `eta_{n+1} < 1 - alpha`.
const ETA_PREDICATE_SLACK: f64 = 1e-12;

/// Iteration cap shared by bracket expansion and bisection.
const MAX_SEARCH_ITERATIONS: usize = 200;

/// A calibrated soft-shift problem: calibration scores plus the `n + 1`
/// positive density-ratio weights (test point last).
#[derive(Debug, Clone)]
pub struct KnownShiftProblem<'a> {
    pub calib: &'a CalibratedScores,
    /// `n + 1` weights; `weights[n]` belongs to the test point.
    pub weights: Vec<f64>,
    pub config: PinballConfig,
}

impl<'a> KnownShiftProblem<'a> {
    pub fn new(calib: &'a CalibratedScores, weights: Vec<f64>, alpha: f64) -> Result<Self> {
        if calib.is_empty() {
            return Err(Error::InvalidInput("calibration set is empty".into()));
        }
        if weights.len() != calib.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "need {} weights (calibration + test point), got {}",
                calib.len() + 1,
                weights.len()
            )));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { index: i, value: w });
            }
        }
        Ok(KnownShiftProblem {
            calib,
            weights,
            config: PinballConfig::new(alpha)?,
        })
    }

    fn solver(&self) -> KnownShiftSolver {
        let n = self.calib.len();
        KnownShiftSolver::new(
            &self.calib.scores,
            &self.weights[..n],
            self.weights[n],
            self.config.alpha,
        )
    }
}

/// Density-ratio weights `pi(a_i + delta_a | x_i) / pi(a_i | x_i)` for every
/// calibration point and the new point (appended last).
///
/// Positivity is enforced at every queried `(a, x)`: a zero or non-finite
/// density fails with the offending index (`n` denotes the new point).
pub fn shift_weights(
    propensity: &dyn PropensityModel,
    calib_x: &[Vec<f64>],
    calib_a: &[f64],
    delta_a: f64,
    new_point: (&[f64], f64),
) -> Result<Vec<f64>> {
    if calib_x.len() != calib_a.len() {
        return Err(Error::InvalidInput(format!(
            "covariate ({}) and treatment ({}) lists differ in length",
            calib_x.len(),
            calib_a.len()
        )));
    }
    if !delta_a.is_finite() {
        return Err(Error::InvalidInput(format!("delta_a must be finite, got {delta_a}")));
    }
    let mut weights = Vec::with_capacity(calib_x.len() + 1);
    let eval = |index: usize, x: &[f64], a: f64| -> Result<f64> {
        let value = propensity.density(a, x);
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::PositivityViolation { index, value, a, x: x.to_vec() });
        }
        Ok(value)
    };
    for (i, (x, &a)) in calib_x.iter().zip(calib_a).enumerate() {
        let shifted = eval(i, x, a + delta_a)?;
        let base = eval(i, x, a)?;
        weights.push(shifted / base);
    }
    let (x_new, a_new) = new_point;
    let idx = calib_x.len();
    let shifted = eval(idx, x_new, a_new + delta_a)?;
    let base = eval(idx, x_new, a_new)?;
    weights.push(shifted / base);
    Ok(weights)
}

/// Dual multiplier of the test point for an imputed score: solves the
/// weighted one-parameter quantile regression on
/// `(S_1, ..., S_n, imputed_s)` and reads off `eta_{n+1}`.
pub fn eta_last(problem: &KnownShiftProblem, imputed_s: f64) -> Result<f64> {
    if !imputed_s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "imputed score must be finite, got {imputed_s}"
        )));
    }
    Ok(problem.solver().eta_last(imputed_s))
}

/// Supremum of the imputed scores whose dual multiplier stays below
/// `1 - alpha`: bracket expansion followed by bisection to width `epsilon`,
/// midpoint clamped to be non-negative.
///
/// Returns `f64::INFINITY` when the test weight is so large that the
/// multiplier can never reach `1 - alpha` (the prediction set is the whole
/// line); the doubling loop would otherwise never terminate.
pub fn search_s_star_known(problem: &KnownShiftProblem, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let solver = problem.solver();
    let alpha = problem.config.alpha;
    let threshold = 1.0 - alpha - ETA_PREDICATE_SLACK;

    // For S -> inf the test point rides its own breakpoint and
    // eta_{n+1} -> alpha * sum(w_calib) / w_test; if that stays below the
    // threshold no finite S* exists.
    if alpha * solver.calib_weight < threshold * solver.w_test {
        return Ok(f64::INFINITY);
    }

    let scores = &problem.calib.scores;
    let max_s = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let min_s = scores.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    let mut s_up = max_s.max(1.0);
    let mut s_low = min_s.min(-1.0);

    let mut iterations = 0;
    while solver.eta_last(s_up) < threshold {
        s_up *= 2.0;
        iterations += 1;
        if iterations > MAX_SEARCH_ITERATIONS {
            return Err(Error::Convergence {
                iterations,
                context: format!("upper bracket expansion stuck at S_up={s_up}"),
            });
        }
    }
    // The printed halving loop moves a negative S_low toward zero; once the
    // magnitude falls under epsilon without establishing the bracket, grow
    // the magnitude instead so the loop can terminate.
    let mut expanding = false;
    iterations = 0;
    while solver.eta_last(s_low) >= threshold {
        if !expanding && s_low.abs() < epsilon {
            expanding = true;
        }
        s_low *= if expanding { 2.0 } else { 0.5 };
        iterations += 1;
        if iterations > MAX_SEARCH_ITERATIONS {
            return Err(Error::Convergence {
                iterations,
                context: format!("lower bracket expansion stuck at S_low={s_low}"),
            });
        }
    }

    iterations = 0;
    while s_up - s_low > epsilon {
        let mid = 0.5 * (s_up + s_low);
        if solver.eta_last(mid) < threshold {
            s_low = mid;
        } else {
            s_up = mid;
        }
        iterations += 1;
        if iterations > MAX_SEARCH_ITERATIONS {
            return Err(Error::Convergence {
                iterations,
                context: format!("bisection stalled with bracket [{s_low}, {s_up}]"),
            });
        }
    }
    Ok((0.5 * (s_up + s_low)).max(0.0))
}

/// End-to-end interval for a soft intervention: centers the interval at the
/// model prediction under the shifted dose and sizes it with the searched
/// optimal imputed score.
#[allow(clippy::too_many_arguments)]
pub fn interval_soft(
    predictor: &dyn OutcomePredictor,
    propensity: &dyn PropensityModel,
    calib: &CalibratedScores,
    x_new: &[f64],
    a_new: f64,
    delta_a: f64,
    alpha: f64,
    epsilon: f64,
) -> Result<PredictionInterval> {
    let weights = shift_weights(propensity, &calib.x, &calib.a, delta_a, (x_new, a_new))?;
    let problem = KnownShiftProblem::new(calib, weights, alpha)?;
    let s_star = search_s_star_known(&problem, epsilon)?;
    let center = predictor.predict(x_new, a_new + delta_a);
    build_interval(center, s_star, alpha)
}

/// Breakpoint-indexed solver answering `eta_{n+1}` queries in `O(log n)`
/// after an `O(n log n)` setup. Equivalent (within floating-point roundoff
/// on ties) to running [`weighted_theta`] + [`recover_eta`] on the
/// augmented problem per query; the contract test below pins that.
struct KnownShiftSolver {
    alpha: f64,
    /// Calibration entries sorted by breakpoint `t = s / w`.
    t: Vec<f64>,
    s: Vec<f64>,
    w: Vec<f64>,
    /// `prefix_w[i]` = total weight of the first `i` sorted entries.
    prefix_w: Vec<f64>,
    calib_weight: f64,
    max_abs_calib_score: f64,
    w_test: f64,
}

impl KnownShiftSolver {
    fn new(scores: &[f64], calib_weights: &[f64], w_test: f64, alpha: f64) -> Self {
        let mut entries: Vec<(f64, f64, f64)> = scores
            .iter()
            .zip(calib_weights)
            .map(|(&s, &w)| (s / w, s, w))
            .collect();
        entries.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        let mut prefix_w = Vec::with_capacity(entries.len() + 1);
        prefix_w.push(0.0);
        let mut acc = 0.0;
        for e in &entries {
            acc += e.2;
            prefix_w.push(acc);
        }
        let max_abs_calib_score = scores.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        KnownShiftSolver {
            alpha,
            t: entries.iter().map(|e| e.0).collect(),
            s: entries.iter().map(|e| e.1).collect(),
            w: entries.iter().map(|e| e.2).collect(),
            prefix_w,
            calib_weight: acc,
            max_abs_calib_score,
            w_test,
        }
    }

    /// Total calibration weight at breakpoints `<= theta`, plus the test
    /// weight when its breakpoint `tau` also lies at or below `theta`.
    fn le_weight(&self, theta: f64, tau: f64) -> f64 {
        let idx = self.t.partition_point(|&v| v <= theta);
        self.prefix_w[idx] + if tau <= theta { self.w_test } else { 0.0 }
    }

    fn slope_right(&self, theta: f64, tau: f64) -> f64 {
        let le = self.le_weight(theta, tau);
        let total = self.calib_weight + self.w_test;
        self.alpha * le - (1.0 - self.alpha) * (total - le)
    }

    /// Smallest minimizer over `theta > 0` of the augmented objective;
    /// `true` marks the clamped `theta = 0` boundary.
    fn theta_star(&self, tau: f64) -> (f64, bool) {
        if self.slope_right(0.0, tau) >= 0.0 {
            return (0.0, true);
        }
        // First positive calibration breakpoint whose right slope is
        // non-negative; duplicates share one slope value because le_weight
        // counts by value.
        let i0 = self.t.partition_point(|&v| v <= 0.0);
        let rel = self.t[i0..].partition_point(|&v| self.slope_right(v, tau) < 0.0);
        let cand_calib = self.t.get(i0 + rel).copied().unwrap_or(f64::INFINITY);
        let cand_tau = if tau > 0.0 && self.slope_right(tau, tau) >= 0.0 {
            tau
        } else {
            f64::INFINITY
        };
        let theta = cand_calib.min(cand_tau);
        debug_assert!(theta.is_finite(), "slope must turn non-negative");
        (theta, false)
    }

    fn eta_last(&self, imputed: f64) -> f64 {
        let alpha = self.alpha;
        let tau = imputed / self.w_test;
        let (theta, boundary) = self.theta_star(tau);

        let tol = 1e-9 * self.max_abs_calib_score.max(imputed.abs());
        let d = imputed - theta * self.w_test;
        if d < -tol {
            return -alpha;
        }
        if d > tol {
            return 1.0 - alpha;
        }

        // The test point is tied at the minimizer; its eta shares the
        // stationarity residual with every other tied entry, weighted.
        let (below_w, above_w, tied_calib_w) = if boundary {
            self.classify_all(theta, tol)
        } else {
            self.classify_windowed(theta, tol)
        };
        let residual = -alpha * below_w + (1.0 - alpha) * above_w;
        let tied_weight = tied_calib_w + self.w_test;
        (-residual / tied_weight).clamp(-alpha, 1.0 - alpha)
    }

    /// O(n) classification used at the degenerate `theta = 0` boundary.
    fn classify_all(&self, theta: f64, tol: f64) -> (f64, f64, f64) {
        let mut below = 0.0;
        let mut above = 0.0;
        let mut tied = 0.0;
        for i in 0..self.s.len() {
            let d = self.s[i] - theta * self.w[i];
            if d < -tol {
                below += self.w[i];
            } else if d > tol {
                above += self.w[i];
            } else {
                tied += self.w[i];
            }
        }
        (below, above, tied)
    }

    /// O(log n + ties) classification: prefix sums give the split at
    /// `theta`, then a scan around it moves near-breakpoint entries into
    /// the tied set using the exact score-space test.
    fn classify_windowed(&self, theta: f64, tol: f64) -> (f64, f64, f64) {
        // Fall back to the full scan when theta is so small that entries
        // with non-positive breakpoints could be tied.
        let min_w = self.w.iter().fold(f64::INFINITY, |m, &w| m.min(w));
        if theta * min_w <= 2.0 * tol {
            return self.classify_all(theta, tol);
        }
        let idx = self.t.partition_point(|&v| v <= theta);
        let mut below = self.prefix_w[idx];
        let mut above = self.calib_weight - below;
        let mut tied = 0.0;
        let scan_tol = tol * (1.0 + 1e-6);
        let mut j = idx;
        while j > 0 && (theta - self.t[j - 1]) * self.w[j - 1] <= scan_tol {
            let k = j - 1;
            if (self.s[k] - theta * self.w[k]).abs() <= tol {
                below -= self.w[k];
                tied += self.w[k];
            }
            j -= 1;
        }
        let mut j = idx;
        while j < self.t.len() && (self.t[j] - theta) * self.w[j] <= scan_tol {
            if (self.s[j] - theta * self.w[j]).abs() <= tol {
                above -= self.w[j];
                tied += self.w[j];
            }
            j += 1;
        }
        (below, above, tied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::{recover_eta, weighted_theta};
    use crate::types::{FnPredictor, FnPropensity};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn calibrated(scores: Vec<f64>) -> CalibratedScores {
        let n = scores.len();
        CalibratedScores {
            x: vec![vec![0.0]; n],
            a: vec![0.0; n],
            scores,
        }
    }

    /// Step-uniform mixture density used by the first synthetic benchmark:
    /// mass 0.3 spread over [0, 5x), mass 0.7 over [5x, 40].
    fn stepwise_density(a: f64, x: &[f64]) -> f64 {
        let x = x[0];
        if (0.0..5.0 * x).contains(&a) {
            0.3 / (5.0 * x)
        } else if (5.0 * x..=40.0).contains(&a) {
            0.7 / (40.0 - 5.0 * x)
        } else {
            0.0
        }
    }

    #[test]
    fn shift_weights_no_shift_is_unit() {
        let prop = FnPropensity(stepwise_density);
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let a = vec![2.0, 11.0, 20.0];
        let w = shift_weights(&prop, &x, &a, 0.0, (&[4.0], 30.0)).unwrap();
        assert_eq!(w, vec![1.0; 4]);
    }

    #[test]
    fn shift_weights_stepwise_ratios() {
        let prop = FnPropensity(stepwise_density);
        // x=1, a=2, delta=1: both doses fall in the low piece (density 0.06).
        let w = shift_weights(&prop, &[vec![1.0]], &[2.0], 1.0, (&[1.0], 2.0)).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        // x=1, a=4, delta=2: 0.06 -> 0.02 across the step.
        let w = shift_weights(&prop, &[vec![1.0]], &[4.0], 2.0, (&[1.0], 4.0)).unwrap();
        assert_abs_diff_eq!(w[0], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn shift_weights_flags_zero_density_with_index() {
        let prop = FnPropensity(stepwise_density);
        let x = vec![vec![1.0], vec![1.0]];
        let a = vec![2.0, 38.0]; // 38 + 5 leaves the support
        let err = shift_weights(&prop, &x, &a, 5.0, (&[1.0], 3.0)).unwrap_err();
        match err {
            Error::PositivityViolation { index, .. } => assert_eq!(index, 1),
            other => panic!("expected positivity violation, got {other:?}"),
        }
    }

    #[test]
    fn eta_last_saturates_far_from_the_quantile() {
        let calib = calibrated(vec![1.0, 3.0, 2.0, 0.5]);
        let problem = KnownShiftProblem::new(&calib, vec![1.0; 5], 0.2).unwrap();
        assert_eq!(eta_last(&problem, -1.0).unwrap(), -0.2);
        assert_abs_diff_eq!(eta_last(&problem, 30.0).unwrap(), 0.8, epsilon = 1e-12);
    }

    // Dual-grid oracle for the n=2 instance: maximize sum(eta_i * S_i)
    // over the box with the stationarity filter, step 0.05.
    #[test]
    fn eta_last_matches_dual_grid_oracle() {
        let alpha = 0.2;
        let scores = [1.0, 3.0, 2.0]; // imputed 2.0 appended
        let weights = [1.0, 1.0, 1.0];
        let steps = 21usize; // 0.05 resolution over [-0.2, 0.8]
        let grid = |k: usize| -alpha + (k as f64) * 0.05;
        let mut best = f64::NEG_INFINITY;
        let mut best_eta3 = f64::NAN;
        for i in 0..steps {
            for j in 0..steps {
                for k in 0..steps {
                    let eta = [grid(i), grid(j), grid(k)];
                    let stat: f64 = eta.iter().zip(&weights).map(|(e, w)| e * w).sum();
                    if stat.abs() > 1e-9 {
                        continue;
                    }
                    let obj: f64 = eta.iter().zip(&scores).map(|(e, s)| e * s).sum();
                    if obj > best {
                        best = obj;
                        best_eta3 = eta[2];
                    }
                }
            }
        }
        let calib = calibrated(vec![1.0, 3.0]);
        let problem = KnownShiftProblem::new(&calib, vec![1.0; 3], alpha).unwrap();
        let eta3 = eta_last(&problem, 2.0).unwrap();
        assert_abs_diff_eq!(eta3, best_eta3, epsilon = 1e-9);
        assert_abs_diff_eq!(eta3, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn eta_last_agrees_with_generic_dual_path() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let weights: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.1..10.0)).collect();
            let alpha = rng.gen_range(0.05..0.9);
            let imputed = rng.gen_range(-2.0..15.0);

            let calib = calibrated(scores.clone());
            let problem = KnownShiftProblem::new(&calib, weights.clone(), alpha).unwrap();
            let fast = eta_last(&problem, imputed).unwrap();

            let mut aug = scores.clone();
            aug.push(imputed);
            let sol = weighted_theta(&aug, &weights, alpha).unwrap();
            let eta = recover_eta(sol.theta_star, &aug, &weights, alpha).unwrap();
            assert!(
                (fast - eta[n]).abs() <= 1e-12,
                "fast path diverged: {} vs {} (n={n}, alpha={alpha})",
                fast,
                eta[n]
            );
        }
    }

    #[test]
    fn eta_last_is_nondecreasing_in_imputed_score() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(3..=15);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let weights: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.2..5.0)).collect();
            let alpha = rng.gen_range(0.05..0.5);
            let calib = calibrated(scores);
            let problem = KnownShiftProblem::new(&calib, weights, alpha).unwrap();
            let mut last = f64::NEG_INFINITY;
            for k in 0..50 {
                let s = -1.0 + 8.0 * (k as f64) / 49.0;
                let e = eta_last(&problem, s).unwrap();
                assert!(e >= last - 1e-9, "eta must be non-decreasing in S");
                last = last.max(e);
            }
        }
    }

    #[test]
    fn search_uniform_weights_reproduces_split_cp_quantile() {
        let calib = calibrated(vec![1.0, 2.0, 3.0, 4.0]);
        let problem = KnownShiftProblem::new(&calib, vec![1.0; 5], 0.2).unwrap();
        let s_star = search_s_star_known(&problem, 1e-6).unwrap();
        // ceil((n+1)(1-alpha)) = 4th order statistic.
        assert_abs_diff_eq!(s_star, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn search_zero_scores_collapse() {
        // Enough calibration mass for a finite quantile at this alpha:
        // alpha * sum(w_calib) must reach (1 - alpha) * w_test.
        let calib = calibrated(vec![0.0; 20]);
        let problem = KnownShiftProblem::new(&calib, vec![1.5; 21], 0.1).unwrap();
        let s_star = search_s_star_known(&problem, 1e-6).unwrap();
        assert!(s_star <= 1e-6);
    }

    #[test]
    fn search_is_invariant_to_common_weight_rescaling() {
        let calib = calibrated(vec![0.4, 1.1, 2.6, 0.9, 1.7]);
        let weights = vec![0.5, 1.0, 2.0, 0.7, 1.3, 0.9];
        let base = {
            let p = KnownShiftProblem::new(&calib, weights.clone(), 0.2).unwrap();
            search_s_star_known(&p, 1e-7).unwrap()
        };
        for c in [0.1, 3.0, 42.0] {
            let scaled: Vec<f64> = weights.iter().map(|w| w * c).collect();
            let p = KnownShiftProblem::new(&calib, scaled, 0.2).unwrap();
            let s = search_s_star_known(&p, 1e-7).unwrap();
            assert_abs_diff_eq!(s, base, epsilon = 1e-6);
        }
    }

    #[test]
    fn search_reports_unbounded_set_for_dominant_test_weight() {
        let calib = calibrated(vec![1.0, 2.0]);
        // alpha * (w_1 + w_2) = 0.02 << (1 - alpha) * w_test = 99: eta can
        // never reach 1 - alpha.
        let problem = KnownShiftProblem::new(&calib, vec![1.0, 1.0, 100.0], 0.01).unwrap();
        let s_star = search_s_star_known(&problem, 1e-6).unwrap();
        assert!(s_star.is_infinite());
    }

    #[test]
    fn search_order_statistic_oracle_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        for _ in 0..25 {
            let n = rng.gen_range(20..=40);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let alpha = rng.gen_range(0.1..0.5);
            let k = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
            assert!(k <= n);
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let oracle = sorted[k - 1];

            let calib = calibrated(scores);
            let problem = KnownShiftProblem::new(&calib, vec![1.0; n + 1], alpha).unwrap();
            let s_star = search_s_star_known(&problem, 1e-7).unwrap();
            assert!(
                (s_star - oracle).abs() <= 1e-6,
                "S*={s_star} vs order-statistic {oracle} (n={n}, alpha={alpha})"
            );
        }
    }

    #[test]
    fn interval_soft_no_shift_covers_exchangeable_data() {
        // With delta = 0 the procedure reduces to split CP; marginal
        // coverage on exchangeable data must hold up to Monte Carlo noise.
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let alpha = 0.2;
        let predictor = FnPredictor(|_: &[f64], _: f64| 0.0);
        let propensity = FnPropensity(|_a: f64, _x: &[f64]| 0.25);

        let n_calib = 400;
        let scores: Vec<f64> = (0..n_calib)
            .map(|_| (rng.sample::<f64, _>(rand_distr::StandardNormal)).abs())
            .collect();
        let calib = CalibratedScores {
            x: vec![vec![0.0]; n_calib],
            a: vec![1.0; n_calib],
            scores,
        };
        let mut covered = 0;
        let trials = 1000;
        for _ in 0..trials {
            let c = interval_soft(&predictor, &propensity, &calib, &[0.0], 1.0, 0.0, alpha, 1e-4)
                .unwrap();
            let y: f64 = rng.sample(rand_distr::StandardNormal);
            if c.contains(y) {
                covered += 1;
            }
        }
        let coverage = covered as f64 / trials as f64;
        assert!(coverage >= 1.0 - alpha - 0.04, "coverage {coverage}");
    }

    #[test]
    fn interval_soft_perfect_predictor_collapses() {
        let predictor = FnPredictor(|x: &[f64], a: f64| x[0] + a);
        let propensity = FnPropensity(|_a: f64, _x: &[f64]| 0.1);
        let n = 30;
        let calib = CalibratedScores {
            x: (0..n).map(|i| vec![i as f64]).collect(),
            a: (0..n).map(|i| (i as f64) * 0.1).collect(),
            scores: vec![0.0; n],
        };
        let eps = 1e-5;
        let c = interval_soft(&predictor, &propensity, &calib, &[2.0], 1.0, 0.5, 0.1, eps).unwrap();
        assert!(c.s_star <= eps);
        assert_abs_diff_eq!(c.center, 3.5, epsilon = 1e-12);
    }
}
