//! Domain types shared by every module, residual scoring, and interval
//! construction from an optimal imputed score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observational record: covariates, treatment dose, outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Covariate vector; dimension must be identical across a dataset.
    pub x: Vec<f64>,
    /// Treatment dose.
    pub a: f64,
    /// Observed outcome.
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, a: f64, y: f64) -> Self {
        Sample { x, a, y }
    }
}

/// Split label carried by each dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Calibration,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Calibration => "calibration",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "calibration" | "calib" => Ok(Split::Calibration),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split label {other:?}"))),
        }
    }
}

/// A dataset row: the sample, its split label, and (for synthetic data) the
/// noiseless structural outcome used when evaluating coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample: Sample,
    pub split: Split,
    /// Noiseless structural outcome at the observed `(x, a)`; `None` for
    /// ingested data without ground truth.
    pub y_true: Option<f64>,
}

/// An ordered collection of labeled samples with a fixed covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<LabeledSample>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset, checking covariate-dimension consistency and
    /// finiteness of all fields.
    pub fn new(rows: Vec<LabeledSample>) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.sample.x.len(),
            None => return Err(Error::InvalidInput("dataset has no rows".into())),
        };
        if dim == 0 {
            return Err(Error::InvalidInput("covariate dimension must be >= 1".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.sample.x.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "row {i} has covariate dimension {} but the dataset uses {dim}",
                    r.sample.x.len()
                )));
            }
            let finite = r.sample.x.iter().all(|v| v.is_finite())
                && r.sample.a.is_finite()
                && r.sample.y.is_finite();
            if !finite {
                return Err(Error::InvalidInput(format!("row {i} has non-finite fields")));
            }
        }
        Ok(Dataset { rows, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[LabeledSample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows carrying the given split label, in dataset order.
    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledSample> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// A non-negative non-conformity score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct NonconformityScore(f64);

impl NonconformityScore {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidInput(format!(
                "non-conformity score must be a finite non-negative real, got {value}"
            )));
        }
        Ok(NonconformityScore(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// An intervention on the treatment: either a shift of the baseline policy
/// or a hard dose assignment.
///
/// For `Soft`, the shifted treatment `a + delta_a` must stay inside the
/// support of the propensity model; this is checked when weights are
/// evaluated, not at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Intervention {
    Soft { delta_a: f64 },
    Hard { a_star: f64 },
}

impl Intervention {
    /// The treatment at which the outcome model is evaluated for a test
    /// point with observed dose `a`.
    pub fn target_dose(&self, a: f64) -> f64 {
        match self {
            Intervention::Soft { delta_a } => a + delta_a,
            Intervention::Hard { a_star } => *a_star,
        }
    }
}

/// A symmetric prediction interval `[center - s_star, center + s_star]`
/// produced from an optimal imputed score, or a quantile interval from the
/// sampling baseline (where `center` is the sample mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub s_star: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// Callback computing a non-conformity score from a sample and a model
/// prediction. The absolute residual below is the default; alternative
/// scores plug in here without touching the calibration code.
pub type ScoreFn = fn(&Sample, f64) -> Result<NonconformityScore>;

/// Absolute residual score `|y - prediction|`.
pub fn residual_score(sample: &Sample, prediction: f64) -> Result<NonconformityScore> {
    if !prediction.is_finite() {
        return Err(Error::InvalidInput(format!(
            "prediction must be finite, got {prediction}"
        )));
    }
    if !sample.y.is_finite() {
        return Err(Error::InvalidInput(format!(
            "outcome must be finite, got {}",
            sample.y
        )));
    }
    NonconformityScore::new((sample.y - prediction).abs())
}

/// Builds the interval `{y : |y - center| <= s_star}` at significance
/// `alpha`. `s_star` may be `+inf` (an unbounded interval); it must not be
/// negative or NaN.
pub fn build_interval(center: f64, s_star: f64, alpha: f64) -> Result<PredictionInterval> {
    if !center.is_finite() {
        return Err(Error::InvalidInput(format!("center must be finite, got {center}")));
    }
    if s_star.is_nan() || s_star < 0.0 {
        return Err(Error::InvalidInput(format!(
            "s_star must be non-negative, got {s_star}"
        )));
    }
    check_alpha(alpha)?;
    Ok(PredictionInterval {
        center,
        s_star,
        lower: center - s_star,
        upper: center + s_star,
        alpha,
    })
}

/// Fraction of outcomes falling inside their paired interval.
pub fn empirical_coverage(intervals: &[PredictionInterval], outcomes: &[f64]) -> Result<f64> {
    if intervals.is_empty() || intervals.len() != outcomes.len() {
        return Err(Error::InvalidInput(format!(
            "need equal nonzero lengths, got {} intervals and {} outcomes",
            intervals.len(),
            outcomes.len()
        )));
    }
    let covered = intervals
        .iter()
        .zip(outcomes)
        .filter(|(c, &y)| c.contains(y))
        .count();
    Ok(covered as f64 / intervals.len() as f64)
}

/// Validates a significance level.
pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

/// Calibration-set non-conformity scores paired with their treatment and
/// covariate context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedScores {
    /// Covariate vectors of calibration samples.
    pub x: Vec<Vec<f64>>,
    /// Treatment doses of calibration samples.
    pub a: Vec<f64>,
    /// Non-conformity scores, same order.
    pub scores: Vec<f64>,
}

impl CalibratedScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores the calibration split of `dataset` under `predictor` with the
    /// given score function.
    pub fn from_dataset(
        dataset: &Dataset,
        predictor: &dyn OutcomePredictor,
        score_fn: ScoreFn,
    ) -> Result<Self> {
        let mut x = Vec::new();
        let mut a = Vec::new();
        let mut scores = Vec::new();
        for row in dataset.split(Split::Calibration) {
            let pred = predictor.predict(&row.sample.x, row.sample.a);
            let s = score_fn(&row.sample, pred)?;
            x.push(row.sample.x.clone());
            a.push(row.sample.a);
            scores.push(s.value());
        }
        if scores.is_empty() {
            return Err(Error::InvalidInput(
                "calibration split is empty; cannot compute intervals".into(),
            ));
        }
        Ok(CalibratedScores { x, a, scores })
    }
}

/// A fitted outcome model evaluable at arbitrary `(x, a)`.
pub trait OutcomePredictor: Sync {
    fn predict(&self, x: &[f64], a: f64) -> f64;
}

/// A conditional treatment density `pi(a | x)` (generalized propensity
/// score), either known analytically or estimated.
pub trait PropensityModel: Sync {
    fn density(&self, a: f64, x: &[f64]) -> f64;
}

/// Wraps a closure as an outcome model; handy in tests and for oracles.
pub struct FnPredictor<F: Fn(&[f64], f64) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64], f64) -> f64 + Sync> OutcomePredictor for FnPredictor<F> {
    fn predict(&self, x: &[f64], a: f64) -> f64 {
        (self.0)(x, a)
    }
}

/// Wraps a closure as a propensity model.
pub struct FnPropensity<F: Fn(f64, &[f64]) -> f64 + Sync>(pub F);

impl<F: Fn(f64, &[f64]) -> f64 + Sync> PropensityModel for FnPropensity<F> {
    fn density(&self, a: f64, x: &[f64]) -> f64 {
        (self.0)(a, x)
    }
}
