//! Monte Carlo dropout baseline: stochastic forward passes of the
//! dropout-regularized network, summarized by empirical quantiles. Known to
//! approximate the posterior poorly and under-cover; included as the
//! comparison method.

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::density::empirical_quantile;
use crate::models::mlp::Mlp;
use crate::types::{check_alpha, PredictionInterval};

/// Interval from `num_samples` stochastic forward passes at `(x, a)`:
/// `[alpha/2, 1 - alpha/2]` empirical quantiles (linear interpolation),
/// centered at the sample mean, with the half-width recorded as `s_star`
/// for reporting uniformity.
pub fn mc_dropout_interval<R: Rng>(
    predictor: &Mlp,
    x: &[f64],
    a: f64,
    alpha: f64,
    num_samples: usize,
    rng: &mut R,
) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if num_samples < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 dropout samples, got {num_samples}"
        )));
    }
    let mut draws: Vec<f64> = (0..num_samples)
        .map(|_| predictor.predict_stochastic(x, a, rng))
        .collect();
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite stochastic prediction".into()));
    }
    let mean = draws.iter().sum::<f64>() / num_samples as f64;
    draws.sort_by(|p, q| p.partial_cmp(q).expect("finite draws"));
    let lower = empirical_quantile(&draws, alpha / 2.0);
    let upper = empirical_quantile(&draws, 1.0 - alpha / 2.0);
    Ok(PredictionInterval {
        center: mean,
        s_star: (upper - lower) / 2.0,
        lower,
        upper,
        alpha,
    })
}
