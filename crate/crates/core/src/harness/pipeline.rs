//! End-to-end experiment orchestration: per seed, generate or load data,
//! train the outcome model, fit the propensity estimator where needed,
//! calibrate, compute one interval per test point per intervention, and
//! evaluate coverage against realized potential outcomes.
//!
//! A failing (seed, intervention, alpha) cell is recorded with its error
//! and the run continues, so a large grid survives isolated solver
//! failures.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::harness::config::{DataSource, ExperimentConfig, ExportIntervals, InterventionSpec, Scenario};
use crate::harness::data_io::read_dataset;
use crate::harness::report::{CellResult, CoverageReport, IntervalRecord};
use crate::models::{
    fit_conditional_density, mc_dropout_interval, train_mlp, KernelConditionalDensity, Mlp,
};
use crate::shift_known::{search_s_star_known, KnownShiftProblem};
use crate::shift_unknown::{search_s_star_unknown, TiltPoint};
use crate::synthdata::{
    draw_observational_where, generate, split_rng, true_outcome, DatasetId, TruePropensity,
    NOISE_SD,
};
use crate::types::{
    build_interval, empirical_coverage, residual_score, CalibratedScores, Dataset,
    OutcomePredictor, PredictionInterval, PropensityModel, Sample, Split,
};

/// Everything derived from one run seed before interventions are applied.
pub struct SeedArtifacts {
    pub seed: u64,
    pub dataset: Dataset,
    pub dataset_id: Option<DatasetId>,
    pub model: Mlp,
    pub hat_pi: Option<KernelConditionalDensity>,
    pub calib: CalibratedScores,
    /// Deterministic-prediction MSE on the test split.
    pub test_mse: f64,
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
}

/// Loads or generates the data for one seed, trains the outcome model on
/// the train split (with a small validation carve for diagnostics), fits
/// the propensity estimator when the scenario needs one, and scores the
/// calibration split.
pub fn prepare_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedArtifacts> {
    let (dataset, dataset_id) = match &config.data {
        DataSource::Synthetic { dataset_id } => {
            let spec = config.generator_spec(seed).expect("synthetic source");
            (generate(&spec)?, Some(*dataset_id))
        }
        DataSource::Csv { path, split_fractions } => {
            (read_dataset(path, *split_fractions, seed)?, None)
        }
    };

    let train_rows: Vec<Sample> =
        dataset.split(Split::Train).map(|r| r.sample.clone()).collect();
    let explicit_validation: Vec<Sample> =
        dataset.split(Split::Validation).map(|r| r.sample.clone()).collect();
    if train_rows.is_empty() {
        return Err(Error::InvalidInput("train split is empty".into()));
    }
    // Carve a validation tail from train when the data carries none; it is
    // used for training diagnostics only.
    let (train_slice, validation): (&[Sample], Vec<Sample>) = if explicit_validation.is_empty() {
        let carve = (train_rows.len() / 10).clamp(1, 200);
        let cut = train_rows.len() - carve;
        (&train_rows[..cut], train_rows[cut..].to_vec())
    } else {
        (&train_rows[..], explicit_validation)
    };

    let mut mlp_config = config.mlp.clone();
    mlp_config.seed = derive_seed(seed, config.mlp.seed.wrapping_add(1));
    let model = train_mlp(&mlp_config, train_slice, &validation)?;

    let hat_pi = match config.scenario {
        Scenario::UnknownPropensity => {
            Some(fit_conditional_density(&config.density, &train_rows)?)
        }
        _ => None,
    };

    let calib = CalibratedScores::from_dataset(&dataset, &model, residual_score)?;
    let test_rows: Vec<Sample> = dataset.split(Split::Test).map(|r| r.sample.clone()).collect();
    let test_mse = model.mse(&test_rows);

    Ok(SeedArtifacts { seed, dataset, dataset_id, model, hat_pi, calib, test_mse })
}

/// One evaluation point: observed covariates and dose, the dose the
/// intervention targets, and the realized potential outcome when ground
/// truth exists.
#[derive(Debug, Clone)]
pub struct TestPoint {
    pub x: Vec<f64>,
    pub a_obs: f64,
    pub target: f64,
    pub y_potential: Option<f64>,
}

/// Builds the per-intervention test set. Synthetic sources draw fresh
/// observational points (for soft shifts, conditioned on the shifted dose
/// staying inside the policy support) and realize potential outcomes as
/// the structural value plus an independent noise draw. Ingested data
/// reuses its test split; ground truth exists only when the intervention
/// leaves doses unchanged.
pub fn build_test_set(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    ispec: &InterventionSpec,
    intervention_idx: usize,
    seed: u64,
) -> Result<Vec<TestPoint>> {
    match artifacts.dataset_id {
        Some(id) => {
            let n = config
                .generator_spec(seed)
                .map(|s| s.n_test_per_intervention)
                .unwrap_or(1000);
            let prop = TruePropensity(id);
            let mut draw_rng = split_rng(seed, 1_000 + intervention_idx as u64);
            let mut noise_rng = split_rng(seed, 2_000 + intervention_idx as u64);
            let mut points = Vec::with_capacity(n);
            for _ in 0..n {
                let (x, a_obs) = match ispec {
                    InterventionSpec::Soft { delta } => {
                        let delta = *delta;
                        draw_observational_where(id, &mut draw_rng, |x, a| {
                            prop.density(a + delta, &[x]) > 0.0
                        })?
                    }
                    _ => draw_observational_where(id, &mut draw_rng, |_, _| true)?,
                };
                let target = ispec.resolve(&[x]).target_dose(a_obs);
                let noise: f64 = noise_rng.sample(StandardNormal);
                let y_potential = Some(true_outcome(id, target, x) + NOISE_SD * noise);
                points.push(TestPoint { x: vec![x], a_obs, target, y_potential });
            }
            Ok(points)
        }
        None => {
            let identity = matches!(ispec, InterventionSpec::Soft { delta } if *delta == 0.0);
            let points: Vec<TestPoint> = artifacts
                .dataset
                .split(Split::Test)
                .map(|r| {
                    let target = ispec.resolve(&r.sample.x).target_dose(r.sample.a);
                    TestPoint {
                        x: r.sample.x.clone(),
                        a_obs: r.sample.a,
                        target,
                        y_potential: identity.then_some(r.sample.y),
                    }
                })
                .collect();
            if points.is_empty() {
                return Err(Error::InvalidInput("test split is empty".into()));
            }
            Ok(points)
        }
    }
}

fn resolve_sigma_bounds(config: &ExperimentConfig, doses: &[f64]) -> (f64, f64) {
    let min = doses.iter().fold(f64::INFINITY, |m, &a| m.min(a));
    let max = doses.iter().fold(f64::NEG_INFINITY, |m, &a| m.max(a));
    let range = (max - min).max(1e-6);
    let lo = config.solver.sigma_min.unwrap_or(1e-3 * range);
    let hi = config.solver.sigma_max.unwrap_or(range).max(lo);
    (lo, hi)
}

/// Intervals for one (intervention, alpha) cell under the configured
/// scenario.
pub fn compute_cell_intervals(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    ispec: &InterventionSpec,
    intervention_idx: usize,
    alpha: f64,
    points: &[TestPoint],
) -> Result<Vec<PredictionInterval>> {
    match config.scenario {
        Scenario::KnownPropensity => known_cell(config, artifacts, ispec, alpha, points),
        Scenario::UnknownPropensity => unknown_cell(config, artifacts, alpha, points),
        Scenario::McDropoutBaseline => {
            mc_cell(config, artifacts, intervention_idx, alpha, points)
        }
    }
}

/// Soft-intervention intervals with the analytic policy. Calibration rows
/// whose shifted dose leaves the support carry zero tilt weight; dropping
/// them is algebraically identical to keeping them (their loss term is
/// constant in theta and their multiplier saturates), so they are filtered
/// before the strictly-positive-weight solver runs.
fn known_cell(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    ispec: &InterventionSpec,
    alpha: f64,
    points: &[TestPoint],
) -> Result<Vec<PredictionInterval>> {
    let id = artifacts
        .dataset_id
        .ok_or_else(|| Error::InvalidInput("known-propensity scenario needs synthetic data".into()))?;
    let prop = TruePropensity(id);
    let delta = match ispec {
        InterventionSpec::Soft { delta } => *delta,
        _ => unreachable!("validated: known-propensity takes soft interventions"),
    };

    let calib = &artifacts.calib;
    let mut kept = CalibratedScores { x: Vec::new(), a: Vec::new(), scores: Vec::new() };
    let mut calib_weights = Vec::new();
    for i in 0..calib.len() {
        let x = &calib.x[i];
        let a = calib.a[i];
        let denominator = prop.density(a, x);
        if !(denominator.is_finite() && denominator > 0.0) {
            return Err(Error::PositivityViolation {
                index: i,
                value: denominator,
                a,
                x: x.clone(),
            });
        }
        let numerator = prop.density(a + delta, x);
        if numerator > 0.0 {
            kept.x.push(x.clone());
            kept.a.push(a);
            kept.scores.push(calib.scores[i]);
            calib_weights.push(numerator / denominator);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidInput(
            "no calibration data remains inside the shifted support".into(),
        ));
    }

    let mut intervals = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let denominator = prop.density(p.a_obs, &p.x);
        let numerator = prop.density(p.target, &p.x);
        if !(numerator.is_finite() && numerator > 0.0 && denominator.is_finite() && denominator > 0.0)
        {
            return Err(Error::PositivityViolation {
                index: i,
                value: numerator.min(denominator),
                a: p.target,
                x: p.x.clone(),
            });
        }
        let mut weights = calib_weights.clone();
        weights.push(numerator / denominator);
        let problem = KnownShiftProblem::new(&kept, weights, alpha)?;
        let s_star = search_s_star_known(&problem, config.solver.epsilon)?;
        let center = artifacts.model.predict(&p.x, p.target);
        intervals.push(build_interval(center, s_star, alpha)?);
    }
    Ok(intervals)
}

/// Hard-intervention intervals with the estimated propensity. The searched
/// optimal imputed score depends on the test point only through its
/// covariates (the target dose and its estimated density are functions of
/// x), so results are memoized per covariate group.
fn unknown_cell(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    alpha: f64,
    points: &[TestPoint],
) -> Result<Vec<PredictionInterval>> {
    let hat_pi = artifacts
        .hat_pi
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("missing propensity estimate".into()))?;
    let calib = &artifacts.calib;
    let calib_contexts: Vec<TiltPoint> = calib
        .x
        .iter()
        .zip(&calib.a)
        .map(|(x, &a)| TiltPoint { a, hat_pi: hat_pi.density(a, x) })
        .collect();
    let sigma_bounds = resolve_sigma_bounds(config, &calib.a);

    let mut memo: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut intervals = Vec::with_capacity(points.len());
    for p in points {
        let key: Vec<u64> = p.x.iter().map(|v| v.to_bits()).collect();
        let s_star = match memo.get(&key) {
            Some(&s) => s,
            None => {
                let mut contexts = calib_contexts.clone();
                contexts.push(TiltPoint {
                    a: p.target,
                    hat_pi: hat_pi.density(p.target, &p.x),
                });
                let s = search_s_star_unknown(
                    &calib.scores,
                    &contexts,
                    p.target,
                    alpha,
                    config.solver.error_bound,
                    sigma_bounds,
                    config.solver.epsilon,
                )?;
                memo.insert(key, s);
                s
            }
        };
        let center = artifacts.model.predict(&p.x, p.target);
        intervals.push(build_interval(center, s_star, alpha)?);
    }
    Ok(intervals)
}

fn mc_cell(
    config: &ExperimentConfig,
    artifacts: &SeedArtifacts,
    intervention_idx: usize,
    alpha: f64,
    points: &[TestPoint],
) -> Result<Vec<PredictionInterval>> {
    let mut rng = split_rng(
        artifacts.seed,
        3_000 + intervention_idx as u64 * 64 + (alpha * 1000.0) as u64,
    );
    points
        .iter()
        .map(|p| {
            mc_dropout_interval(&artifacts.model, &p.x, p.target, alpha, config.mc_samples, &mut rng)
        })
        .collect()
}

/// Runs the configured grid: every (seed, intervention, alpha) cell, with
/// failures recorded per cell. Returns the report plus the per-point
/// interval records selected by the export policy.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(CoverageReport, Vec<IntervalRecord>)> {
    config.validate()?;
    let mut cells: Vec<CellResult> = Vec::new();
    let mut interval_records: Vec<IntervalRecord> = Vec::new();

    for &seed in &config.seeds {
        let artifacts = match prepare_seed(config, seed) {
            Ok(a) => a,
            Err(e) => {
                for ispec in &config.interventions {
                    for &alpha in &config.alphas {
                        cells.push(error_cell(config, ispec, alpha, seed, &e));
                    }
                }
                continue;
            }
        };
        for (i_idx, ispec) in config.interventions.iter().enumerate() {
            let points = match build_test_set(config, &artifacts, ispec, i_idx, seed) {
                Ok(p) => p,
                Err(e) => {
                    for &alpha in &config.alphas {
                        cells.push(error_cell(config, ispec, alpha, seed, &e));
                    }
                    continue;
                }
            };
            for &alpha in &config.alphas {
                let start = Instant::now();
                match compute_cell_intervals(config, &artifacts, ispec, i_idx, alpha, &points) {
                    Ok(intervals) => {
                        let runtime_s = start.elapsed().as_secs_f64() / points.len() as f64;
                        let outcomes: Option<Vec<f64>> =
                            points.iter().map(|p| p.y_potential).collect();
                        let coverage = match &outcomes {
                            Some(y) => Some(empirical_coverage(&intervals, y)?),
                            None => None,
                        };
                        let mean_width = Some(
                            intervals.iter().map(|c| c.width()).sum::<f64>()
                                / intervals.len() as f64,
                        );
                        let export = match config.export_intervals {
                            ExportIntervals::None => false,
                            ExportIntervals::FirstSeed => seed == config.seeds[0],
                            ExportIntervals::All => true,
                        };
                        if export {
                            for (p, c) in points.iter().zip(&intervals) {
                                interval_records.push(IntervalRecord {
                                    x: p.x.clone(),
                                    a: p.target,
                                    center: c.center,
                                    lower: c.lower,
                                    upper: c.upper,
                                    y_true: p.y_potential,
                                    alpha,
                                    method: config.scenario.as_str().into(),
                                });
                            }
                        }
                        cells.push(CellResult {
                            scenario: config.scenario.as_str().into(),
                            intervention: ispec.label(),
                            alpha,
                            seed,
                            n_points: points.len(),
                            coverage,
                            mean_width,
                            runtime_s: Some(runtime_s),
                            error: if outcomes.is_none() {
                                Some("no ground truth for ingested data under this intervention".into())
                            } else {
                                None
                            },
                        });
                    }
                    Err(e) => cells.push(error_cell(config, ispec, alpha, seed, &e)),
                }
            }
        }
    }
    Ok((CoverageReport::from_cells(cells), interval_records))
}

fn error_cell(
    config: &ExperimentConfig,
    ispec: &InterventionSpec,
    alpha: f64,
    seed: u64,
    error: &Error,
) -> CellResult {
    CellResult {
        scenario: config.scenario.as_str().into(),
        intervention: ispec.label(),
        alpha,
        seed,
        n_points: 0,
        coverage: None,
        mean_width: None,
        runtime_s: None,
        error: Some(error.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SolverParams;
    use crate::models::MlpConfig;

    fn small_config(scenario: Scenario, interventions: Vec<InterventionSpec>) -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic { dataset_id: DatasetId::One },
            scenario,
            interventions,
            alphas: vec![0.2],
            seeds: vec![0],
            solver: SolverParams { epsilon: 1e-3, ..SolverParams::default() },
            mlp: MlpConfig { epochs: 30, ..MlpConfig::default() },
            density: Default::default(),
            mc_samples: 25,
            out_dir: std::env::temp_dir().join("dosecp-pipeline-test"),
            export_intervals: ExportIntervals::FirstSeed,
            n_test: Some(40),
            n_train: Some(300),
            n_calibration: Some(120),
        }
    }

    #[test]
    fn known_scenario_small_run_covers() {
        let config = small_config(
            Scenario::KnownPropensity,
            vec![InterventionSpec::Soft { delta: 1.0 }],
        );
        let (report, records) = run_experiment(&config).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert!(cell.error.is_none(), "{:?}", cell.error);
        // Loose check at this tiny scale; the acceptance suite runs the
        // full-size grids.
        assert!(cell.coverage.unwrap() >= 0.6, "coverage {:?}", cell.coverage);
        assert_eq!(records.len(), 40);
    }

    #[test]
    fn unknown_scenario_small_run_covers() {
        let config = small_config(
            Scenario::UnknownPropensity,
            vec![InterventionSpec::HardLinear { coeff: 7.0 }],
        );
        let (report, _) = run_experiment(&config).unwrap();
        let cell = &report.cells[0];
        assert!(cell.error.is_none(), "{:?}", cell.error);
        assert!(cell.coverage.unwrap() >= 0.6, "coverage {:?}", cell.coverage);
    }

    #[test]
    fn mc_baseline_runs_and_undercovers_cp() {
        let mc = small_config(
            Scenario::McDropoutBaseline,
            vec![InterventionSpec::HardLinear { coeff: 7.0 }],
        );
        let (mc_report, _) = run_experiment(&mc).unwrap();
        let cp = small_config(
            Scenario::UnknownPropensity,
            vec![InterventionSpec::HardLinear { coeff: 7.0 }],
        );
        let (cp_report, _) = run_experiment(&cp).unwrap();
        let mc_cov = mc_report.cells[0].coverage.unwrap();
        let cp_cov = cp_report.cells[0].coverage.unwrap();
        assert!(mc_cov < cp_cov, "mc {mc_cov} vs cp {cp_cov}");
    }

    #[test]
    fn rerun_is_identical() {
        let config = small_config(
            Scenario::KnownPropensity,
            vec![InterventionSpec::Soft { delta: 0.0 }],
        );
        let (r1, i1) = run_experiment(&config).unwrap();
        let (r2, i2) = run_experiment(&config).unwrap();
        assert_eq!(r1.cells.len(), r2.cells.len());
        for (a, b) in r1.cells.iter().zip(&r2.cells) {
            assert_eq!(a.coverage, b.coverage);
            assert_eq!(a.mean_width, b.mean_width);
        }
        assert_eq!(i1, i2);
    }

    #[test]
    fn seed_failure_marks_all_cells() {
        let mut config = small_config(
            Scenario::KnownPropensity,
            vec![InterventionSpec::Soft { delta: 1.0 }, InterventionSpec::Soft { delta: 2.0 }],
        );
        // Divergent learning rate makes training fail fast.
        config.mlp.learning_rate = f64::MAX;
        let (report, _) = run_experiment(&config).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert!(report.cells.iter().all(|c| c.error.is_some()));
    }
}
