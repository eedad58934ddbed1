//! Conformal intervals for hard interventions under an estimated
//! propensity.
//!
//! The Dirac shift of a hard assignment is approximated by a Gaussian tilt
//! `g(a, x) = c_a / (sqrt(2 pi) sigma) * exp(-(a - a*)^2 / (2 sigma^2)) / hat_pi(a | x)`
//! with width `sigma > 0` and propensity-error ratio `c_a in [1/M, M]`.
//! For fixed `(sigma, c_a)` the equality constraints of the tilt program
//! force `u_i = max(S_i - g_i, 0)` and `v_i = max(g_i - S_i, 0)`, so the
//! objective collapses to a sum of pinball losses and the program becomes a
//! two-variable minimization. For fixed `sigma` the remaining problem is
//! convex piecewise linear in `c_a` and is solved exactly by breakpoint
//! enumeration; the `sigma` axis is scanned on a log-spaced grid and
//! polished by golden-section refinement. The optimal imputed score is
//! found by bracketing and bisecting the predicate `v_{n+1} > 0`.

use crate::error::{Error, Result};
use crate::quantile::recover_eta_boxed;
use crate::types::{
    build_interval, check_alpha, CalibratedScores, OutcomePredictor, PredictionInterval,
    PropensityModel,
};

/// Estimated densities below this floor are clamped before division; the
/// solution reports how often the floor was active.
const DENSITY_FLOOR: f64 = 1e-12;

const SIGMA_GRID: usize = 50;
/// Golden-section restarts from the best grid widths.
const REFINE_STARTS: usize = 3;
const GOLDEN_REL_TOL: f64 = 1e-6;
const MAX_SEARCH_ITERATIONS: usize = 200;
const ETA_PREDICATE_SLACK: f64 = 1e-12;

/// The membership predicate is `v_{n+1} > 0`, but when the inner solution
/// rides the test point's breakpoint the reconstructed slack is a rounding
/// residue of `(S / k) * k - S`; anything inside this relative band counts
/// as zero.
#[inline]
fn v_is_positive(v: f64, imputed: f64) -> bool {
    v > 1e-12 * imputed.abs().max(1.0)
}

/// A Gaussian tilt of an estimated propensity toward the hard assignment
/// `a_star`.
pub struct GaussianTilt<'m> {
    pub sigma: f64,
    pub c_a: f64,
    pub a_star: f64,
    pub hat_pi: &'m dyn PropensityModel,
}

impl<'m> GaussianTilt<'m> {
    pub fn new(
        sigma: f64,
        c_a: f64,
        a_star: f64,
        error_bound: f64,
        hat_pi: &'m dyn PropensityModel,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        check_error_bound(error_bound)?;
        if !(c_a.is_finite() && (1.0 / error_bound) <= c_a && c_a <= error_bound) {
            return Err(Error::InvalidInput(format!(
                "c_a={c_a} outside [{}, {}]",
                1.0 / error_bound,
                error_bound
            )));
        }
        if !a_star.is_finite() {
            return Err(Error::InvalidInput(format!("a_star must be finite, got {a_star}")));
        }
        Ok(GaussianTilt { sigma, c_a, a_star, hat_pi })
    }
}

fn check_error_bound(m: f64) -> Result<()> {
    if !(m.is_finite() && m >= 1.0) {
        return Err(Error::InvalidInput(format!("error bound M must be >= 1, got {m}")));
    }
    Ok(())
}

#[inline]
fn gauss_norm(sigma: f64) -> f64 {
    1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
}

/// Evaluates the tilt `g(a, x)`; the estimated density must be strictly
/// positive at the queried point.
pub fn tilt_value(tilt: &GaussianTilt, a: f64, x: &[f64]) -> Result<f64> {
    let pi = tilt.hat_pi.density(a, x);
    if !(pi.is_finite() && pi > 0.0) {
        return Err(Error::PositivityViolation { index: 0, value: pi, a, x: x.to_vec() });
    }
    let z = a - tilt.a_star;
    Ok(tilt.c_a * gauss_norm(tilt.sigma) * (-z * z / (2.0 * tilt.sigma * tilt.sigma)).exp() / pi)
}

/// Per-sample context of the tilt program: the treatment dose and the
/// estimated density `hat_pi(a | x)` already evaluated at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltPoint {
    pub a: f64,
    pub hat_pi: f64,
}

/// Optimizer output of the tilt program.
///
/// Invariants (tested): `S_i - g_i - u_i + v_i = 0` within 1e-8,
/// `u_i * v_i = 0` within 1e-10, and the objective equals
/// `sum_i (1 - alpha) u_i + alpha v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSolution {
    pub sigma: f64,
    pub c_a: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
    /// How many contexts had their estimated density clamped to the floor.
    pub floored: usize,
}

/// Precomputed squared distance to `a_star` and floored inverse density.
struct TiltPre {
    d2: Vec<f64>,
    inv_pi: Vec<f64>,
    floored: usize,
}

fn precompute(contexts: &[TiltPoint], a_star: f64) -> Result<TiltPre> {
    let mut d2 = Vec::with_capacity(contexts.len());
    let mut inv_pi = Vec::with_capacity(contexts.len());
    let mut floored = 0;
    for (i, p) in contexts.iter().enumerate() {
        if !p.a.is_finite() {
            return Err(Error::InvalidInput(format!("context {i} has non-finite dose {}", p.a)));
        }
        if !p.hat_pi.is_finite() || p.hat_pi < 0.0 {
            return Err(Error::InvalidInput(format!(
                "context {i} has invalid density {}",
                p.hat_pi
            )));
        }
        let pi = if p.hat_pi < DENSITY_FLOOR {
            floored += 1;
            DENSITY_FLOOR
        } else {
            p.hat_pi
        };
        let z = p.a - a_star;
        d2.push(z * z);
        inv_pi.push(1.0 / pi);
    }
    Ok(TiltPre { d2, inv_pi, floored })
}

impl TiltPre {
    /// `g_i / c_a`, a function of `sigma` alone.
    fn k(&self, i: usize, sigma: f64) -> f64 {
        gauss_norm(sigma) * (-self.d2[i] / (2.0 * sigma * sigma)).exp() * self.inv_pi[i]
    }
}

#[inline]
fn pinball(theta: f64, s: f64, alpha: f64) -> f64 {
    if s >= theta {
        (1.0 - alpha) * (s - theta)
    } else {
        alpha * (theta - s)
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo; n];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// One fixed-width cut through the program: per-entry `k_i(sigma)` in input
/// order plus the positive-`k` entries sorted by breakpoint `S_i / k_i`,
/// ready for the exact convex solve over `c`.
#[derive(Clone)]
struct SigmaSlice {
    sigma: f64,
    k: Vec<f64>,
    /// `(breakpoint, k, score)` for entries with `k > 0`, ascending.
    sorted: Vec<(f64, f64, f64)>,
}

impl SigmaSlice {
    fn build(pre: &TiltPre, scores: &[f64], sigma: f64) -> SigmaSlice {
        let k: Vec<f64> = (0..scores.len()).map(|i| pre.k(i, sigma)).collect();
        let mut sorted: Vec<(f64, f64, f64)> = k
            .iter()
            .zip(scores)
            .filter(|(&ki, _)| ki > 0.0)
            .map(|(&ki, &si)| (si / ki, ki, si))
            .collect();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite breakpoints"));
        SigmaSlice { sigma, k, sorted }
    }

    /// Same content as [`SigmaSlice::build`] over the augmented entry list,
    /// reusing this (calibration-only) slice: the test entry is spliced at
    /// its sorted position, which matches a stable sort with the test
    /// entry last.
    fn augment(&self, k_test: f64, s_test: f64) -> SigmaSlice {
        let mut k = Vec::with_capacity(self.k.len() + 1);
        k.extend_from_slice(&self.k);
        k.push(k_test);
        let mut sorted = Vec::with_capacity(self.sorted.len() + 1);
        sorted.extend_from_slice(&self.sorted);
        if k_test > 0.0 {
            let t = s_test / k_test;
            let pos = sorted.partition_point(|e| e.0 <= t);
            sorted.insert(pos, (t, k_test, s_test));
        }
        SigmaSlice { sigma: self.sigma, k, sorted }
    }

    /// Smallest minimizer of `sum_i l_alpha(c k_i, S_i)` over the box
    /// `[c_lo, c_hi]`: the objective is convex piecewise linear with
    /// breakpoints at `S_i / k_i`, so the minimizer is the box edge or the
    /// first breakpoint where the right slope turns non-negative.
    fn exact_c(&self, alpha: f64, c_lo: f64, c_hi: f64) -> f64 {
        let total: f64 = self.sorted.iter().map(|e| e.1).sum();
        let mut le = 0.0;
        // Weight at breakpoints <= c_lo.
        let mut idx = 0;
        while idx < self.sorted.len() && self.sorted[idx].0 <= c_lo {
            le += self.sorted[idx].1;
            idx += 1;
        }
        let slope = |le: f64| alpha * le - (1.0 - alpha) * (total - le);
        if slope(le) >= 0.0 {
            return c_lo;
        }
        while idx < self.sorted.len() {
            let t = self.sorted[idx].0;
            if t > c_hi {
                break;
            }
            while idx < self.sorted.len() && self.sorted[idx].0 == t {
                le += self.sorted[idx].1;
                idx += 1;
            }
            if slope(le) >= 0.0 {
                return t;
            }
        }
        c_hi
    }

    /// Objective at `c`, summed in input order.
    fn objective(&self, c: f64, scores: &[f64], alpha: f64) -> f64 {
        let mut acc = 0.0;
        for (ki, si) in self.k.iter().zip(scores) {
            acc += pinball(c * ki, *si, alpha);
        }
        acc
    }

    /// Exact-in-`c` minimum of the slice.
    fn solve(&self, scores: &[f64], alpha: f64, c_lo: f64, c_hi: f64) -> (f64, f64) {
        let c = self.exact_c(alpha, c_lo, c_hi);
        (self.objective(c, scores, alpha), c)
    }
}

/// The reduced program over `(sigma, c_a)`; owns the (augmented) score
/// vector so searchers can update the imputed slot.
struct TiltProgram {
    scores: Vec<f64>,
    pre: TiltPre,
    alpha: f64,
    c_lo: f64,
    c_hi: f64,
    sigma_lo: f64,
    sigma_hi: f64,
}

impl TiltProgram {
    fn new(
        scores: Vec<f64>,
        contexts: &[TiltPoint],
        a_star: f64,
        alpha: f64,
        error_bound: f64,
        sigma_bounds: (f64, f64),
    ) -> Result<Self> {
        check_alpha(alpha)?;
        check_error_bound(error_bound)?;
        if scores.is_empty() {
            return Err(Error::InvalidInput("tilt program needs at least one score".into()));
        }
        if scores.len() != contexts.len() {
            return Err(Error::InvalidInput(format!(
                "scores ({}) and contexts ({}) must have equal length",
                scores.len(),
                contexts.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("scores must be finite".into()));
        }
        if !a_star.is_finite() {
            return Err(Error::InvalidInput(format!("a_star must be finite, got {a_star}")));
        }
        let (sigma_lo, sigma_hi) = sigma_bounds;
        if !(sigma_lo.is_finite()
            && sigma_hi.is_finite()
            && 1e-300 < sigma_lo
            && sigma_lo <= sigma_hi)
        {
            return Err(Error::InvalidInput(format!(
                "invalid sigma bounds ({sigma_lo}, {sigma_hi})"
            )));
        }
        let pre = precompute(contexts, a_star)?;
        if (0..scores.len()).all(|i| !pre.k(i, sigma_hi).is_finite()) {
            return Err(Error::DegenerateTilt { a_star });
        }
        Ok(TiltProgram {
            scores,
            pre,
            alpha,
            c_lo: 1.0 / error_bound,
            c_hi: error_bound,
            sigma_lo,
            sigma_hi,
        })
    }

    fn slice(&self, sigma: f64) -> SigmaSlice {
        SigmaSlice::build(&self.pre, &self.scores, sigma)
    }

    fn sigma_step(&self) -> f64 {
        if self.sigma_hi > self.sigma_lo {
            (self.sigma_hi.ln() - self.sigma_lo.ln()) / (SIGMA_GRID - 1) as f64
        } else {
            0.0
        }
    }

    /// Right derivative of the width profile `phi(sigma) = min_c obj` at
    /// the exact inner solution (Danskin): the inner minimizer is held
    /// fixed and only the kernel values move.
    fn phi_prime(&self, sigma: f64) -> f64 {
        let slice = self.slice(sigma);
        let c = slice.exact_c(self.alpha, self.c_lo, self.c_hi);
        let mut acc = 0.0;
        for (i, (&k, &s)) in slice.k.iter().zip(&self.scores).enumerate() {
            if k <= 0.0 {
                continue;
            }
            let g = c * k;
            let dl = if s >= g { -(1.0 - self.alpha) } else { self.alpha };
            let k_prime = k * (self.pre.d2[i] / (sigma * sigma) - 1.0) / sigma;
            acc += dl * c * k_prime;
        }
        acc
    }

    /// Golden-section polish of the width around one starting point, in
    /// log space, bracketed one grid step to each side. The surviving
    /// bracket is then pinned down by bisecting the analytic derivative,
    /// which pushes the width to machine precision; golden section alone
    /// leaves the minimizer position at the square root of machine
    /// precision, enough slack to destabilize the membership predicate.
    fn refine(&self, start_obj: f64, start_sigma: f64) -> (f64, f64, f64) {
        let step = self.sigma_step();
        let mut best = (start_obj, start_sigma);
        if step > 0.0 {
            let ls = start_sigma.ln();
            let lo = (ls - step).max(self.sigma_lo.ln());
            let hi = (ls + step).min(self.sigma_hi.ln());
            const INV_PHI: f64 = 0.618_033_988_749_894_8;
            let eval = |t: f64| -> (f64, f64) {
                let sigma = t.exp();
                let slice = self.slice(sigma);
                let (obj, _) = slice.solve(&self.scores, self.alpha, self.c_lo, self.c_hi);
                (obj, sigma)
            };
            let mut a = lo;
            let mut b = hi;
            let mut x1 = b - INV_PHI * (b - a);
            let mut x2 = a + INV_PHI * (b - a);
            let mut f1 = eval(x1);
            let mut f2 = eval(x2);
            for _ in 0..200 {
                let better = if f1.0 <= f2.0 { f1 } else { f2 };
                if better.0 < best.0 {
                    best = better;
                }
                if (b - a) <= GOLDEN_REL_TOL {
                    break;
                }
                if f1.0 <= f2.0 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - INV_PHI * (b - a);
                    f1 = eval(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + INV_PHI * (b - a);
                    f2 = eval(x2);
                }
            }
            // Derivative bisection around golden's answer. Golden leaves
            // the minimizer position accurate only to its bracket width,
            // so look for a sign change of the profile derivative in
            // growing windows (the basin bottom may sit slightly outside
            // the final bracket) and pin it down.
            let t_best = best.1.ln();
            let mut window = GOLDEN_REL_TOL;
            while window <= step {
                let lo_t = (t_best - window).max(lo);
                let hi_t = (t_best + window).min(hi);
                let d_lo = self.phi_prime(lo_t.exp());
                let d_hi = self.phi_prime(hi_t.exp());
                if d_lo < 0.0 && d_hi >= 0.0 {
                    let mut lo_t = lo_t;
                    let mut hi_t = hi_t;
                    for _ in 0..100 {
                        if hi_t - lo_t <= 1e-15 * hi_t.abs().max(1.0) {
                            break;
                        }
                        let mid = 0.5 * (lo_t + hi_t);
                        if self.phi_prime(mid.exp()) < 0.0 {
                            lo_t = mid;
                        } else {
                            hi_t = mid;
                        }
                    }
                    let polished = eval(0.5 * (lo_t + hi_t));
                    if polished.0 < best.0 {
                        best = polished;
                    }
                    break;
                }
                // Monotone derivative across the window: the minimum is at
                // its clamped edge, which is exact.
                if d_lo >= 0.0 && lo_t <= lo {
                    let edge = eval(lo_t);
                    if edge.0 < best.0 {
                        best = edge;
                    }
                    break;
                }
                if d_hi <= 0.0 && hi_t >= hi {
                    let edge = eval(hi_t);
                    if edge.0 < best.0 {
                        best = edge;
                    }
                    break;
                }
                window *= 8.0;
            }
        }
        let slice = self.slice(best.1);
        let c = slice.exact_c(self.alpha, self.c_lo, self.c_hi);
        let obj = slice.objective(c, &self.scores, self.alpha);
        (obj, best.1, c)
    }

    /// Global solve: exact-in-`c` scan over the width grid, then polish
    /// around the best few widths. Ties break toward smaller `sigma`, then
    /// smaller `c_a`.
    fn minimize(&self) -> (f64, f64, f64) {
        let sigmas = log_grid(self.sigma_lo, self.sigma_hi, SIGMA_GRID);
        let mut starts = StartCells::new();
        for &sigma in &sigmas {
            let slice = self.slice(sigma);
            let (obj, _) = slice.solve(&self.scores, self.alpha, self.c_lo, self.c_hi);
            starts.offer(obj, sigma);
        }
        self.finish(&starts)
    }

    fn finish(&self, starts: &StartCells) -> (f64, f64, f64) {
        let mut best: Option<(f64, f64, f64)> = None;
        for &(obj0, sigma0) in &starts.cells {
            let refined = self.refine(obj0, sigma0);
            let replace = match best {
                None => true,
                Some(b) => {
                    refined.0 < b.0
                        || (refined.0 == b.0 && (refined.1, refined.2) < (b.1, b.2))
                }
            };
            if replace {
                best = Some(refined);
            }
        }
        best.expect("at least one start cell")
    }

    fn solution_at(&self, sigma: f64, c: f64) -> TiltSolution {
        let n = self.scores.len();
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut objective = 0.0;
        for i in 0..n {
            let g = c * self.pre.k(i, sigma);
            let ui = (self.scores[i] - g).max(0.0);
            let vi = (g - self.scores[i]).max(0.0);
            objective += (1.0 - self.alpha) * ui + self.alpha * vi;
            u.push(ui);
            v.push(vi);
        }
        TiltSolution { sigma, c_a: c, u, v, objective, floored: self.pre.floored }
    }
}

/// The best `REFINE_STARTS` grid widths, kept sorted by objective; the
/// ascending-sigma scan with strict improvement breaks ties toward smaller
/// widths.
struct StartCells {
    cells: Vec<(f64, f64)>,
}

impl StartCells {
    fn new() -> Self {
        StartCells { cells: Vec::with_capacity(REFINE_STARTS + 1) }
    }

    fn offer(&mut self, obj: f64, sigma: f64) {
        if self.cells.len() < REFINE_STARTS {
            self.cells.push((obj, sigma));
            self.cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        } else if obj < self.cells[REFINE_STARTS - 1].0 {
            self.cells[REFINE_STARTS - 1] = (obj, sigma);
            self.cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
    }
}

/// Solves the tilt program for the given augmented scores. `(u, v)` are
/// reconstructed as positive/negative parts of `S_i - g_i`, which makes
/// feasibility and complementarity hold by construction.
pub fn solve_ps(
    scores: &[f64],
    contexts: &[TiltPoint],
    a_star: f64,
    alpha: f64,
    error_bound: f64,
    sigma_bounds: (f64, f64),
) -> Result<TiltSolution> {
    let program =
        TiltProgram::new(scores.to_vec(), contexts, a_star, alpha, error_bound, sigma_bounds)?;
    let (_, sigma, c) = program.minimize();
    Ok(program.solution_at(sigma, c))
}

/// `v_{n+1}` at the optimum of the tilt program with `S_{n+1} = imputed_s`
/// appended. `contexts` carries `n + 1` entries, test point last (its dose
/// is `a_star` itself).
#[allow(clippy::too_many_arguments)]
pub fn v_last(
    scores: &[f64],
    contexts: &[TiltPoint],
    a_star: f64,
    alpha: f64,
    error_bound: f64,
    sigma_bounds: (f64, f64),
    imputed_s: f64,
) -> Result<f64> {
    if contexts.len() != scores.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "need {} contexts (calibration + test point), got {}",
            scores.len() + 1,
            contexts.len()
        )));
    }
    let mut augmented = scores.to_vec();
    augmented.push(imputed_s);
    let solution = solve_ps(&augmented, contexts, a_star, alpha, error_bound, sigma_bounds)?;
    Ok(*solution.v.last().expect("non-empty solution"))
}

/// Cached searcher for repeated imputed-score solves on one problem:
/// calibration slices (per-width kernel values, sorted breakpoints) do not
/// depend on the imputed score, so each grid scan only splices in the test
/// entry. Produces bit-identical results to the uncached path.
struct TiltSearcher {
    program: TiltProgram,
    calib_slices: Vec<SigmaSlice>,
    /// `k_{n+1}(sigma)` aligned with `calib_slices`.
    k_test: Vec<f64>,
}

impl TiltSearcher {
    fn new(
        calib_scores: &[f64],
        contexts: &[TiltPoint],
        a_star: f64,
        alpha: f64,
        error_bound: f64,
        sigma_bounds: (f64, f64),
    ) -> Result<Self> {
        if contexts.len() != calib_scores.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "need {} contexts (calibration + test point), got {}",
                calib_scores.len() + 1,
                contexts.len()
            )));
        }
        let mut augmented = calib_scores.to_vec();
        augmented.push(0.0);
        let program =
            TiltProgram::new(augmented, contexts, a_star, alpha, error_bound, sigma_bounds)?;
        let n = calib_scores.len();
        let sigmas = log_grid(program.sigma_lo, program.sigma_hi, SIGMA_GRID);
        let calib_pre = TiltPre {
            d2: program.pre.d2[..n].to_vec(),
            inv_pi: program.pre.inv_pi[..n].to_vec(),
            floored: 0,
        };
        let calib_slices: Vec<SigmaSlice> = sigmas
            .iter()
            .map(|&s| SigmaSlice::build(&calib_pre, calib_scores, s))
            .collect();
        let k_test: Vec<f64> = sigmas.iter().map(|&s| program.pre.k(n, s)).collect();
        Ok(TiltSearcher { program, calib_slices, k_test })
    }

    /// `v_{n+1}` at the optimum for one imputed score.
    fn v(&mut self, imputed: f64) -> f64 {
        let n = self.program.scores.len() - 1;
        self.program.scores[n] = imputed;

        let mut starts = StartCells::new();
        for (slice, &kt) in self.calib_slices.iter().zip(&self.k_test) {
            let full = slice.augment(kt, imputed);
            let (obj, _) = full.solve(&self.program.scores, self.program.alpha, self.program.c_lo, self.program.c_hi);
            starts.offer(obj, slice.sigma);
        }
        let (_, sigma, c) = self.program.finish(&starts);
        let g = c * self.program.pre.k(n, sigma);
        (g - imputed).max(0.0)
    }
}

/// Supremum of the imputed scores keeping `v_{n+1} > 0`: bracket expansion
/// (double the upper end while inside the set, halve the lower end while
/// outside) followed by bisection to width `epsilon`; the midpoint is
/// clamped to be non-negative.
#[allow(clippy::too_many_arguments)]
pub fn search_s_star_unknown(
    scores: &[f64],
    contexts: &[TiltPoint],
    a_star: f64,
    alpha: f64,
    error_bound: f64,
    sigma_bounds: (f64, f64),
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut searcher =
        TiltSearcher::new(scores, contexts, a_star, alpha, error_bound, sigma_bounds)?;

    let max_s = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let min_s = scores.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    let mut s_up = max_s.max(1.0);
    let mut s_low = min_s.min(-1.0);

    let mut iterations = 0;
    while v_is_positive(searcher.v(s_up), s_up) {
        s_up *= 2.0;
        iterations += 1;
        if iterations > MAX_SEARCH_ITERATIONS {
            return Err(Error::Convergence {
                iterations,
                context: format!("upper bracket expansion stuck at S_up={s_up}"),
            });
        }
    }
    iterations = 0;
    while !v_is_positive(searcher.v(s_low), s_low) {
        s_low *= 0.5;
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
        if v_is_positive(searcher.v(mid), mid) {
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

/// End-to-end interval for a hard intervention `a_star` with an estimated
/// propensity.
#[allow(clippy::too_many_arguments)]
pub fn interval_hard(
    predictor: &dyn OutcomePredictor,
    hat_pi: &dyn PropensityModel,
    calib: &CalibratedScores,
    x_new: &[f64],
    a_star: f64,
    alpha: f64,
    error_bound: f64,
    sigma_bounds: (f64, f64),
    epsilon: f64,
) -> Result<PredictionInterval> {
    let contexts = hard_contexts(hat_pi, calib, x_new, a_star);
    let s_star = search_s_star_unknown(
        &calib.scores,
        &contexts,
        a_star,
        alpha,
        error_bound,
        sigma_bounds,
        epsilon,
    )?;
    let center = predictor.predict(x_new, a_star);
    build_interval(center, s_star, alpha)
}

/// Contexts for a hard-intervention solve: the calibration points at their
/// observed doses plus the test point at `a_star`.
pub fn hard_contexts(
    hat_pi: &dyn PropensityModel,
    calib: &CalibratedScores,
    x_new: &[f64],
    a_star: f64,
) -> Vec<TiltPoint> {
    let mut contexts: Vec<TiltPoint> = calib
        .x
        .iter()
        .zip(&calib.a)
        .map(|(x, &a)| TiltPoint { a, hat_pi: hat_pi.density(a, x) })
        .collect();
    contexts.push(TiltPoint { a: a_star, hat_pi: hat_pi.density(a_star, x_new) });
    contexts
}

/// Fixed-width variant: `sigma` is pinned to `sigma0` and only the error
/// ratio `c_a in [1/M, M]` is optimized, a one-dimensional convex pinball
/// problem solved exactly by breakpoint enumeration. The membership
/// predicate is `eta_{n+1} < 1 - alpha`.
///
/// Calibration entries whose tilt weight underflows to zero at `sigma0`
/// contribute a constant loss and a saturated multiplier regardless of
/// `c_a`, so they are dropped before the strictly-positive-weight dual
/// recovery.
#[allow(clippy::too_many_arguments)]
pub fn interval_fixed_sigma(
    predictor: &dyn OutcomePredictor,
    hat_pi: &dyn PropensityModel,
    calib: &CalibratedScores,
    x_new: &[f64],
    a_star: f64,
    alpha: f64,
    error_bound: f64,
    sigma0: f64,
    epsilon: f64,
) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    check_error_bound(error_bound)?;
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(Error::InvalidInput(format!("sigma0 must be positive, got {sigma0}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let contexts = hard_contexts(hat_pi, calib, x_new, a_star);
    let pre = precompute(&contexts, a_star)?;
    let n = calib.len();
    let mut scores = Vec::new();
    let mut h = Vec::new();
    for i in 0..n {
        let hi = pre.k(i, sigma0);
        if !hi.is_finite() {
            return Err(Error::DegenerateTilt { a_star });
        }
        if hi > 0.0 {
            scores.push(calib.scores[i]);
            h.push(hi);
        }
    }
    let h_test = pre.k(n, sigma0);
    if !(h_test.is_finite() && h_test > 0.0) {
        return Err(Error::DegenerateTilt { a_star });
    }
    if h.is_empty() {
        return Err(Error::DegenerateTilt { a_star });
    }
    h.push(h_test);

    let s_star = fixed_sigma_search(&scores, &h, alpha, error_bound, epsilon)?;
    let center = predictor.predict(x_new, a_star);
    build_interval(center, s_star, alpha)
}

/// `eta_{n+1}` of the box-constrained one-dimensional problem
/// `min_{c in [1/M, M]} sum_i l_alpha(c h_i, S_i)`.
fn fixed_sigma_eta_last(
    calib_scores: &[f64],
    h: &[f64],
    alpha: f64,
    error_bound: f64,
    imputed: f64,
) -> Result<f64> {
    let n = calib_scores.len();
    let mut scores = calib_scores.to_vec();
    scores.push(imputed);
    let c_lo = 1.0 / error_bound;
    let c_hi = error_bound;

    // Slope of the objective just right of c, with h as the weights.
    let total: f64 = h.iter().sum();
    let slope = |c: f64| -> f64 {
        let le: f64 = scores
            .iter()
            .zip(h)
            .filter(|(&s, &w)| s / w <= c)
            .map(|(_, &w)| w)
            .sum();
        alpha * le - (1.0 - alpha) * (total - le)
    };

    let (c_star, at_boundary) = if slope(c_lo) >= 0.0 {
        (c_lo, true)
    } else {
        let mut breakpoints: Vec<f64> = scores
            .iter()
            .zip(h)
            .map(|(&s, &w)| s / w)
            .filter(|t| *t > c_lo && *t <= c_hi)
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        match breakpoints.into_iter().find(|&t| slope(t) >= 0.0) {
            Some(t) => (t, false),
            None => (c_hi, true),
        }
    };
    let eta = recover_eta_boxed(c_star, &scores, h, alpha, at_boundary)?;
    Ok(eta[n])
}

fn fixed_sigma_search(
    calib_scores: &[f64],
    h: &[f64],
    alpha: f64,
    error_bound: f64,
    epsilon: f64,
) -> Result<f64> {
    let threshold = 1.0 - alpha - ETA_PREDICATE_SLACK;
    let eval = |s: f64| fixed_sigma_eta_last(calib_scores, h, alpha, error_bound, s);

    let max_s = calib_scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let min_s = calib_scores.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    let mut s_up = max_s.max(1.0);
    let mut s_low = min_s.min(-1.0);

    let mut iterations = 0;
    while eval(s_up)? < threshold {
        s_up *= 2.0;
        iterations += 1;
        if iterations > MAX_SEARCH_ITERATIONS {
            return Err(Error::Convergence {
                iterations,
                context: format!("upper bracket expansion stuck at S_up={s_up}"),
            });
        }
    }
    let mut expanding = false;
    iterations = 0;
    while eval(s_low)? >= threshold {
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
        if eval(mid)? < threshold {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{FnPredictor, FnPropensity};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

    fn unit_density() -> FnPropensity<impl Fn(f64, &[f64]) -> f64 + Sync> {
        FnPropensity(|_a: f64, _x: &[f64]| 1.0)
    }

    #[test]
    fn tilt_value_cases() {
        let pi = FnPropensity(|_a: f64, _x: &[f64]| 1.0 / SQRT_2PI);
        let tilt = GaussianTilt::new(1.0, 1.0, 0.0, 2.0, &pi).unwrap();
        assert_abs_diff_eq!(tilt_value(&tilt, 0.0, &[0.0]).unwrap(), 1.0, epsilon = 1e-12);

        let half_max_offset = (2.0 * 2.0f64.ln()).sqrt();
        assert_abs_diff_eq!(
            tilt_value(&tilt, half_max_offset, &[0.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );

        let scaled = GaussianTilt::new(1.0, 1.8, 0.0, 2.0, &pi).unwrap();
        for a in [0.0, 0.4, 2.0] {
            let base = tilt_value(&tilt, a, &[0.0]).unwrap();
            assert_abs_diff_eq!(
                tilt_value(&scaled, a, &[0.0]).unwrap(),
                1.8 * base,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn tilt_value_rejects_nonpositive_density() {
        let pi = FnPropensity(|_a: f64, _x: &[f64]| 0.0);
        let tilt = GaussianTilt::new(1.0, 1.0, 0.0, 2.0, &pi).unwrap();
        assert!(matches!(
            tilt_value(&tilt, 0.5, &[0.0]),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn solve_ps_perfect_single_point() {
        // S_1 equals the tilt value at (sigma, c) = (1, 1.5); the exact
        // inner solve pins c at the zero of the single-point objective, so
        // the minimum is zero up to the width polish tolerance.
        let a: f64 = 0.7;
        let target = 1.5 * gauss_norm(1.0) * (-a * a / 2.0).exp();
        let sol = solve_ps(
            &[target],
            &[TiltPoint { a, hat_pi: 1.0 }],
            0.0,
            0.1,
            2.0,
            (0.05, 5.0),
        )
        .unwrap();
        assert!(sol.objective <= 1e-12, "objective {}", sol.objective);
    }

    /// Dense-grid oracle for the tilt program, independent of the solver's
    /// exact-c and refinement machinery.
    fn dense_grid_oracle(
        scores: &[f64],
        contexts: &[TiltPoint],
        a_star: f64,
        alpha: f64,
        m: f64,
        sigma_bounds: (f64, f64),
        steps: usize,
    ) -> f64 {
        let sigmas = log_grid(sigma_bounds.0, sigma_bounds.1, steps);
        let cs = log_grid(1.0 / m, m, steps);
        let pre = precompute(contexts, a_star).unwrap();
        let mut best = f64::INFINITY;
        for &sigma in &sigmas {
            for &c in &cs {
                let mut acc = 0.0;
                for i in 0..scores.len() {
                    acc += pinball(c * pre.k(i, sigma), scores[i], alpha);
                }
                if acc < best {
                    best = acc;
                }
            }
        }
        best
    }

    #[test]
    fn solve_ps_matches_dense_grid_oracle() {
        let scores = [1.0, 0.5, 0.1];
        let contexts = [
            TiltPoint { a: 0.0, hat_pi: 1.0 },
            TiltPoint { a: 1.0, hat_pi: 1.0 },
            TiltPoint { a: 2.0, hat_pi: 1.0 },
        ];
        let bounds = (0.05, 5.0);
        let sol = solve_ps(&scores, &contexts, 0.0, 0.1, 2.0, bounds).unwrap();
        let oracle = dense_grid_oracle(&scores, &contexts, 0.0, 0.1, 2.0, bounds, 500);
        assert!(
            (sol.objective - oracle).abs() <= 1e-3,
            "solver {} vs oracle {}",
            sol.objective,
            oracle
        );
        // The exact inner solve can only improve on the oracle grid.
        assert!(sol.objective <= oracle + 1e-12);
    }

    #[test]
    fn solution_feasibility_and_complementarity() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..=8);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let contexts: Vec<TiltPoint> = (0..n)
                .map(|_| TiltPoint {
                    a: rng.gen_range(-2.0..2.0),
                    hat_pi: rng.gen_range(0.05..2.0),
                })
                .collect();
            let sol =
                solve_ps(&scores, &contexts, 0.0, rng.gen_range(0.05..0.5), 2.0, (0.05, 5.0))
                    .unwrap();
            let pre = precompute(&contexts, 0.0).unwrap();
            for i in 0..n {
                let g = sol.c_a * pre.k(i, sol.sigma);
                assert!((scores[i] - g - sol.u[i] + sol.v[i]).abs() <= 1e-8);
                assert!(sol.u[i] * sol.v[i] <= 1e-10);
                assert!(sol.u[i] >= 0.0 && sol.v[i] >= 0.0);
            }
        }
    }

    #[test]
    fn reduction_reconstruction_matches_pinball_objective() {
        // For arbitrary (sigma, c_a) the positive/negative-part
        // reconstruction must reproduce the pinball objective exactly.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=6);
            let alpha = rng.gen_range(0.05..0.95);
            let sigma = rng.gen_range(0.05..4.0);
            let c = rng.gen_range(0.5..2.0);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let contexts: Vec<TiltPoint> = (0..n)
                .map(|_| TiltPoint {
                    a: rng.gen_range(-3.0..3.0),
                    hat_pi: rng.gen_range(0.05..2.0),
                })
                .collect();
            let pre = precompute(&contexts, 0.0).unwrap();
            let mut from_parts = 0.0;
            let mut from_pinball = 0.0;
            for i in 0..n {
                let g = c * pre.k(i, sigma);
                let u = (scores[i] - g).max(0.0);
                let v = (g - scores[i]).max(0.0);
                from_parts += (1.0 - alpha) * u + alpha * v;
                from_pinball += pinball(g, scores[i], alpha);
            }
            assert!((from_parts - from_pinball).abs() <= 1e-10);
        }
    }

    fn three_point_setup() -> (Vec<f64>, Vec<TiltPoint>) {
        let scores = vec![1.0, 0.5, 0.1];
        let contexts = vec![
            TiltPoint { a: 0.0, hat_pi: 1.0 },
            TiltPoint { a: 1.0, hat_pi: 1.0 },
            TiltPoint { a: 2.0, hat_pi: 1.0 },
            // test point at a* with its estimated density
            TiltPoint { a: 0.0, hat_pi: 1.0 },
        ];
        (scores, contexts)
    }

    #[test]
    fn v_last_saturation() {
        let (scores, contexts) = three_point_setup();
        let bounds = (0.05, 5.0);
        let below = v_last(&scores, &contexts, 0.0, 0.1, 2.0, bounds, -1.0).unwrap();
        assert!(below > 0.0);
        let above = v_last(&scores, &contexts, 0.0, 0.1, 2.0, bounds, 1e6).unwrap();
        assert_eq!(above, 0.0);
    }

    // The slack of the test point decreases along the imputed-score axis
    // on instances shaped like the benchmarks (smooth estimated densities,
    // residual-like scores). With erratic per-point densities the global
    // optimum can swap into a narrow-width basin whose tilt value exceeds
    // the imputed score and the slack jumps back up; see the width-profile
    // discussion in `refine`.
    #[test]
    fn v_last_nonincreasing_in_imputed_score() {
        for instance in 0..8u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + instance);
            let n = 250;
            let mu = rng.gen_range(3.0..7.0);
            let sd = rng.gen_range(1.0..3.0);
            let distortion = rng.gen_range(0.7..1.4);
            let a_star = mu + rng.gen_range(-1.0..1.0) * sd;
            let dens = |a: f64| {
                let z: f64 = (a - mu) / sd;
                distortion * (-0.5 * z * z).exp()
                    / (sd * (2.0 * std::f64::consts::PI).sqrt())
            };
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.3f64).abs())
                .collect();
            let mut contexts: Vec<TiltPoint> = (0..n)
                .map(|_| {
                    let a = mu + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    TiltPoint { a, hat_pi: dens(a) }
                })
                .collect();
            contexts.push(TiltPoint { a: a_star, hat_pi: dens(a_star) });
            let alpha = rng.gen_range(0.05..0.3);
            let bounds = (4e-3 * sd, 4.0 * sd);
            let mut last = f64::INFINITY;
            for k in 0..50 {
                let s = -1.0 + 3.5 * (k as f64) / 49.0;
                let v = v_last(&scores, &contexts, a_star, alpha, 2.0, bounds, s).unwrap();
                assert!(
                    v <= last + 1e-9,
                    "v must be non-increasing in S (instance {instance}, S={s}: {v} > {last})"
                );
                last = v.min(last);
            }
        }
    }

    // With a handful of erratic density values the slack is NOT globally
    // non-increasing: once a narrow width concentrated at a* undercuts the
    // wide-width optimum (their objectives move in S with slopes -alpha
    // and 1-alpha), the optimal tilt value jumps back above the imputed
    // score. An independent dense width scan with the exact inner solve
    // reproduces the same jump, so this is the objective's geometry, not
    // solver noise. The iterative search brackets the first crossing, like
    // the reference procedure.
    #[test]
    fn v_last_jump_on_erratic_densities_matches_dense_oracle() {
        let alpha = 0.3;
        let scores = vec![1.82, 0.49, 1.81];
        let contexts = vec![
            TiltPoint { a: -0.158, hat_pi: 1.013 },
            TiltPoint { a: -1.830, hat_pi: 0.485 },
            TiltPoint { a: -1.865, hat_pi: 0.396 },
            TiltPoint { a: 0.0, hat_pi: 0.675 }, // test point at a*
        ];
        let bounds = (0.05, 5.0);

        // Dense oracle: fine width scan with the exact inner solve.
        let dense_v = |s: f64| -> f64 {
            let mut aug = scores.clone();
            aug.push(s);
            let pre = precompute(&contexts, 0.0).unwrap();
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for &sigma in &log_grid(bounds.0, bounds.1, 8000) {
                let slice = SigmaSlice::build(&pre, &aug, sigma);
                let (obj, c) = slice.solve(&aug, alpha, 0.5, 2.0);
                if obj < best.0 {
                    best = (obj, sigma, c);
                }
            }
            (best.2 * pre.k(3, best.1) - s).max(0.0)
        };

        let before_jump = 1.3;
        let after_jump = 1.7;
        let v1 = v_last(&scores, &contexts, 0.0, alpha, 2.0, bounds, before_jump).unwrap();
        let v2 = v_last(&scores, &contexts, 0.0, alpha, 2.0, bounds, after_jump).unwrap();
        assert!(v1 < 1e-6, "wide-width regime keeps the slack at zero, got {v1}");
        assert!(v2 > 0.1, "the narrow-width swap re-opens the slack, got {v2}");
        assert!((dense_v(before_jump) - v1).abs() <= 1e-3);
        assert!((dense_v(after_jump) - v2).abs() <= 1e-3);
    }

    #[test]
    fn search_matches_dense_scan_of_v() {
        let (scores, contexts) = three_point_setup();
        let bounds = (0.05, 5.0);
        let eps = 1e-4;
        let s_star =
            search_s_star_unknown(&scores, &contexts, 0.0, 0.1, 2.0, bounds, eps).unwrap();
        // Oracle: scan v over a dense S grid and locate the boundary of
        // {S : v > 0}.
        let mut boundary = 0.0;
        let lo = -1.0;
        let hi = 20.0;
        let steps = 20_000;
        for k in 0..=steps {
            let s = lo + (hi - lo) * (k as f64) / (steps as f64);
            let v = v_last(&scores, &contexts, 0.0, 0.1, 2.0, bounds, s).unwrap();
            if v_is_positive(v, s) {
                boundary = s;
            }
        }
        assert!(
            (s_star - boundary).abs() <= eps + (hi - lo) / steps as f64,
            "S*={s_star} vs scan {boundary}"
        );
    }

    #[test]
    fn search_is_deterministic() {
        let (scores, contexts) = three_point_setup();
        let bounds = (0.05, 5.0);
        let a = search_s_star_unknown(&scores, &contexts, 0.0, 0.1, 2.0, bounds, 1e-5).unwrap();
        let b = search_s_star_unknown(&scores, &contexts, 0.0, 0.1, 2.0, bounds, 1e-5).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn cached_searcher_equals_plain_v_last() {
        let (scores, contexts) = three_point_setup();
        let bounds = (0.05, 5.0);
        let mut searcher = TiltSearcher::new(&scores, &contexts, 0.0, 0.1, 2.0, bounds).unwrap();
        for k in 0..40 {
            let s = -1.0 + 0.25 * k as f64;
            let fast = searcher.v(s);
            let plain = v_last(&scores, &contexts, 0.0, 0.1, 2.0, bounds, s).unwrap();
            assert_eq!(fast.to_bits(), plain.to_bits(), "mismatch at S={s}");
        }
    }

    #[test]
    fn s_star_nonincreasing_in_alpha() {
        let (scores, contexts) = three_point_setup();
        let bounds = (0.05, 5.0);
        let mut last = f64::INFINITY;
        for alpha in [0.05, 0.1, 0.2, 0.4] {
            let s = search_s_star_unknown(&scores, &contexts, 0.0, alpha, 2.0, bounds, 1e-5)
                .unwrap();
            assert!(s <= last + 1e-4, "S* must not grow with alpha");
            last = s;
        }
    }

    #[test]
    fn interval_hard_perfect_predictor_collapses() {
        // A perfect predictor zeroes every calibration score. With the
        // width allowed to grow far beyond the dose range the tilt can
        // flatten toward zero, so the interval collapses.
        let predictor = FnPredictor(|x: &[f64], a: f64| x[0] * a);
        let density = unit_density();
        let n = 20;
        let calib = CalibratedScores {
            x: (0..n).map(|i| vec![(i % 4) as f64]).collect(),
            a: (0..n).map(|i| (i as f64) * 0.1).collect(),
            scores: vec![0.0; n],
        };
        let eps = 1e-5;
        let c = interval_hard(
            &predictor,
            &density,
            &calib,
            &[2.0],
            1.0,
            0.1,
            2.0,
            (0.01, 1e6),
            eps,
        )
        .unwrap();
        assert!(c.s_star <= eps, "s_star {}", c.s_star);
        assert_abs_diff_eq!(c.center, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_sigma_m_one_returns_test_tilt_value() {
        // With M = 1 the box collapses to c = 1 and the membership
        // predicate flips exactly at the test point's tilt value.
        let predictor = FnPredictor(|_: &[f64], _: f64| 0.0);
        let density = unit_density();
        let calib = CalibratedScores {
            x: vec![vec![0.0]; 3],
            a: vec![0.0, 1.0, 2.0],
            scores: vec![1.0, 0.5, 0.1],
        };
        let sigma0 = 1.0;
        let eps = 1e-6;
        let c = interval_fixed_sigma(
            &predictor, &density, &calib, &[0.0], 0.0, 0.1, 1.0, sigma0, eps,
        )
        .unwrap();
        let h_test = gauss_norm(sigma0); // exp(0) / hat_pi = 1
        assert_abs_diff_eq!(c.s_star, h_test, epsilon = 2.0 * eps);
    }

    #[test]
    fn fixed_sigma_consistent_with_joint_optimum() {
        // Fixing sigma at the width chosen by the joint search reproduces
        // the joint S* on a benign instance.
        let predictor = FnPredictor(|_: &[f64], _: f64| 0.0);
        let density = unit_density();
        let calib = CalibratedScores {
            x: vec![vec![0.0]; 3],
            a: vec![0.0, 1.0, 2.0],
            scores: vec![1.0, 0.5, 0.1],
        };
        let bounds = (0.05, 5.0);
        let eps = 1e-5;
        let joint = interval_hard(
            &predictor, &density, &calib, &[0.0], 0.0, 0.1, 2.0, bounds, eps,
        )
        .unwrap();
        // Recover the sigma chosen at the boundary solve.
        let contexts = hard_contexts(&density, &calib, &[0.0], 0.0);
        let mut aug = calib.scores.clone();
        aug.push(joint.s_star);
        let sol = solve_ps(&aug, &contexts, 0.0, 0.1, 2.0, bounds).unwrap();
        let fixed = interval_fixed_sigma(
            &predictor, &density, &calib, &[0.0], 0.0, 0.1, 2.0, sol.sigma, eps,
        )
        .unwrap();
        assert!(
            (fixed.s_star - joint.s_star).abs() <= 2.0 * eps,
            "fixed {} vs joint {}",
            fixed.s_star,
            joint.s_star
        );
    }

    #[test]
    fn fixed_sigma_large_width_approaches_split_cp() {
        // Near-uniform tilt: treatments cluster near a*, the estimated
        // density is uniform, and sigma0 spans the whole range, so the
        // weights are nearly equal, the optimal ratio is interior, and S*
        // lands close to the plain augmented split-CP quantile.
        let predictor = FnPredictor(|_: &[f64], _: f64| 0.0);
        let density = unit_density();
        let n = 40;
        let scores: Vec<f64> = (1..=n).map(|i| 0.1 + 0.25 * (i as f64) / n as f64).collect();
        let calib = CalibratedScores {
            x: vec![vec![0.0]; n],
            a: (0..n).map(|i| ((i as f64) / n as f64 - 0.5) * 0.4).collect(),
            scores: scores.clone(),
        };
        let alpha = 0.2;
        let sigma0 = 2.0; // much wider than the treatment range 0.4
        let c = interval_fixed_sigma(
            &predictor, &density, &calib, &[0.0], 0.0, alpha, 2.0, sigma0, 1e-6,
        )
        .unwrap();
        let k = (((n + 1) as f64) * (1.0 - alpha)).ceil() as usize;
        let mut sorted = scores;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let split_cp = sorted[k - 1];
        assert!(
            (c.s_star - split_cp).abs() / split_cp <= 0.05,
            "S*={} vs split-CP quantile {}",
            c.s_star,
            split_cp
        );
    }

    #[test]
    fn solve_ps_rejects_bad_inputs() {
        let ctx = [TiltPoint { a: 0.0, hat_pi: 1.0 }];
        assert!(solve_ps(&[], &[], 0.0, 0.1, 2.0, (0.1, 1.0)).is_err());
        assert!(solve_ps(&[1.0], &ctx, 0.0, 0.1, 0.5, (0.1, 1.0)).is_err());
        assert!(solve_ps(&[1.0], &ctx, 0.0, 0.1, 2.0, (0.0, 1.0)).is_err());
        assert!(solve_ps(&[1.0], &ctx, 0.0, 1.5, 2.0, (0.1, 1.0)).is_err());
    }
}
