//! Pinball-loss machinery: the augmented quantile regression behind split
//! conformal prediction, the one-parameter weighted solve over the ray
//! `{theta * w : theta > 0}`, and recovery of the dual multipliers `eta`
//! from the KKT structure.
//!
//! The weighted objective `J(theta) = sum_i l_alpha(theta * w_i, S_i)` is
//! piecewise linear in `theta` with breakpoints at `S_i / w_i`; the solver
//! evaluates breakpoints exactly rather than iterating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::check_alpha;

/// Significance level for pinball losses, validated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinballConfig {
    pub alpha: f64,
}

impl PinballConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(PinballConfig { alpha })
    }
}

/// Output of the weighted one-parameter solve: the smallest minimizer, the
/// dual multipliers, and the attained objective.
///
/// Invariants on a valid solution:
/// - `-alpha <= eta[i] <= 1 - alpha` for all `i`;
/// - `sum_i eta[i] * w[i] == 0` within `1e-8` whenever `theta_star > 0`;
/// - `boundary` marks the degenerate case where the minimizer of the
///   positive-`theta` problem is the clamped boundary `theta == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub theta_star: f64,
    pub eta: Vec<f64>,
    /// Unnormalized pinball objective `sum_i l_alpha(theta* w_i, S_i)`.
    pub objective: f64,
    pub boundary: bool,
}

/// Pinball (quantile) loss `l_alpha(theta, s)`.
///
/// Equals `(1 - alpha) * (s - theta)` when `s >= theta` and
/// `alpha * (theta - s)` otherwise; non-negative, zero iff `theta == s`.
pub fn pinball_loss(theta: f64, s: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !theta.is_finite() || !s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "pinball loss needs finite arguments, got theta={theta}, s={s}"
        )));
    }
    Ok(pinball(theta, s, alpha))
}

#[inline]
fn pinball(theta: f64, s: f64, alpha: f64) -> f64 {
    if s >= theta {
        (1.0 - alpha) * (s - theta)
    } else {
        alpha * (theta - s)
    }
}

/// Smallest minimizer of the augmented pinball objective
/// `(1/(n+1)) * (sum_i l_alpha(theta, S_i) + l_alpha(theta, imputed_s))`
/// over all real `theta`; an empirical `(1-alpha)`-quantile of the
/// augmented score multiset.
pub fn scalar_quantile(scores: &[f64], imputed_s: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::InvalidInput("scalar_quantile needs at least one score".into()));
    }
    if !imputed_s.is_finite() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let mut augmented: Vec<f64> = scores.to_vec();
    augmented.push(imputed_s);
    augmented.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = augmented.len();

    // The objective is piecewise linear with slope
    // alpha * #{S <= theta} - (1-alpha) * #{S > theta} just right of theta;
    // the smallest minimizer is the first value where that slope is >= 0.
    let mut idx = 0;
    while idx < n {
        let v = augmented[idx];
        let mut end = idx + 1;
        while end < n && augmented[end] == v {
            end += 1;
        }
        let le = end as f64;
        let gt = (n - end) as f64;
        if alpha * le - (1.0 - alpha) * gt >= 0.0 {
            return Ok(v);
        }
        idx = end;
    }
    // Slope at the largest value is alpha * n > 0, so the loop always returns.
    unreachable!("pinball slope must turn non-negative at the maximum score")
}

fn validate_weighted_inputs(scores: &[f64], weights: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("weighted_theta needs at least one score".into()));
    }
    if scores.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "scores ({}) and weights ({}) must have equal length",
            scores.len(),
            weights.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("score {i} is not finite")));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidWeight { index: i, value: w });
        }
    }
    Ok(())
}

/// Smallest minimizer over `theta > 0` of
/// `sum_i l_alpha(theta * w_i, S_i)`, with dual multipliers recovered from
/// the KKT structure.
///
/// When every score is non-positive the positive-`theta` objective has no
/// interior minimizer; the solution is the boundary `theta = 0`, flagged
/// rather than treated as an error.
pub fn weighted_theta(scores: &[f64], weights: &[f64], alpha: f64) -> Result<DualSolution> {
    check_alpha(alpha)?;
    validate_weighted_inputs(scores, weights)?;

    let (theta_star, boundary) = smallest_positive_minimizer(scores, weights, alpha);
    let objective: f64 = scores
        .iter()
        .zip(weights)
        .map(|(&s, &w)| pinball(theta_star * w, s, alpha))
        .sum();
    let eta = recover_eta_impl(theta_star, scores, weights, alpha, boundary)?;
    Ok(DualSolution { theta_star, eta, objective, boundary })
}

/// Locates the smallest minimizer of the piecewise-linear weighted pinball
/// objective over `theta > 0` by exact breakpoint enumeration.
fn smallest_positive_minimizer(scores: &[f64], weights: &[f64], alpha: f64) -> (f64, bool) {
    let total: f64 = weights.iter().sum();

    // Breakpoints t_i = S_i / w_i; points with t_i <= 0 sit below theta * w_i
    // for every theta > 0.
    let mut breakpoints: Vec<(f64, f64)> = Vec::with_capacity(scores.len());
    let mut below0 = 0.0;
    for (&s, &w) in scores.iter().zip(weights) {
        let t = s / w;
        if t <= 0.0 {
            below0 += w;
        } else {
            breakpoints.push((t, w));
        }
    }
    if alpha * below0 - (1.0 - alpha) * (total - below0) >= 0.0 {
        return (0.0, true);
    }
    breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));

    let mut le = below0;
    let mut idx = 0;
    while idx < breakpoints.len() {
        let t = breakpoints[idx].0;
        // Fold exact ties into one step so the slope is evaluated strictly
        // to the right of t.
        while idx < breakpoints.len() && breakpoints[idx].0 == t {
            le += breakpoints[idx].1;
            idx += 1;
        }
        if alpha * le - (1.0 - alpha) * (total - le) >= 0.0 {
            return (t, false);
        }
    }
    unreachable!("slope is alpha * total > 0 past the largest breakpoint")
}

/// Recovers the dual multipliers for a minimizer `theta_star` of the
/// weighted pinball objective: `-alpha` strictly below the fitted value,
/// `1 - alpha` strictly above, and a stationarity-balancing value on ties.
///
/// Fails with an inconsistent-solution error when stationarity cannot be
/// reached inside the box, which signals that `theta_star` was not optimal.
pub fn recover_eta(theta_star: f64, scores: &[f64], weights: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    validate_weighted_inputs(scores, weights)?;
    recover_eta_impl(theta_star, scores, weights, alpha, theta_star == 0.0)
}

/// As [`recover_eta`] but for a minimizer constrained to a box (the
/// fixed-width tilt class); at an active box boundary stationarity need not
/// hold, so the residual is absorbed by clamping instead of erroring.
pub fn recover_eta_boxed(
    multiplier: f64,
    scores: &[f64],
    weights: &[f64],
    alpha: f64,
    at_box_boundary: bool,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    validate_weighted_inputs(scores, weights)?;
    recover_eta_impl(multiplier, scores, weights, alpha, at_box_boundary)
}

fn recover_eta_impl(
    theta_star: f64,
    scores: &[f64],
    weights: &[f64],
    alpha: f64,
    boundary: bool,
) -> Result<Vec<f64>> {
    let max_abs = scores.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let tol = 1e-9 * max_abs;
    let n = scores.len();

    let mut eta = vec![0.0; n];
    let mut tied: Vec<usize> = Vec::new();
    let mut tied_weight = 0.0;
    let mut residual = 0.0; // sum over untied of eta_i * w_i
    for i in 0..n {
        let fitted = theta_star * weights[i];
        let d = scores[i] - fitted;
        if d < -tol {
            eta[i] = -alpha;
            residual += -alpha * weights[i];
        } else if d > tol {
            eta[i] = 1.0 - alpha;
            residual += (1.0 - alpha) * weights[i];
        } else {
            tied.push(i);
            tied_weight += weights[i];
        }
    }

    if !tied.is_empty() {
        // Distribute the stationarity residual over the tied indices in
        // proportion to their weights: a single shared eta value.
        let shared = (-residual / tied_weight).clamp(-alpha, 1.0 - alpha);
        for &i in &tied {
            eta[i] = shared;
        }
    }

    if !boundary {
        let total_weight: f64 = weights.iter().sum();
        let stationarity: f64 = eta.iter().zip(weights).map(|(e, w)| e * w).sum();
        if stationarity.abs() > 1e-8 * total_weight.max(1.0) {
            return Err(Error::InconsistentSolution { residual: stationarity });
        }
    }
    Ok(eta)
}
