//! `dosecp`: conformal prediction intervals for potential outcomes of
//! continuous treatments.
//!
//! Pipeline subcommands mirror the experiment stages: `generate-data`,
//! `train`, `fit-propensity`, `calibrate`, `interval` (single test point),
//! `evaluate` (full coverage grid), `export` (plot data from a saved
//! report).

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dosecp_core::harness::{
    self, DataSource, ExperimentConfig, ExportIntervals, InterventionSpec, Scenario,
};
use dosecp_core::models::{
    fit_conditional_density, train_mlp, BandwidthRule, ConditionalDensityConfig,
    CovariateGrouping, KernelConditionalDensity, Mlp, MlpConfig,
};
use dosecp_core::shift_known::interval_soft;
use dosecp_core::shift_unknown::interval_hard;
use dosecp_core::synthdata::{generate, DatasetId, GeneratorSpec, TruePropensity};
use dosecp_core::types::{PropensityModel, Sample, Split};

#[derive(Parser)]
#[command(
    name = "dosecp",
    version,
    about = "Finite-sample conformal prediction intervals for potential outcomes of continuous treatments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic benchmark dataset and write data.csv + manifest.json.
    GenerateData(GenerateDataArgs),
    /// Train the outcome regressor on the train split of a dataset.
    Train(TrainArgs),
    /// Fit the conditional treatment density on the train split.
    FitPropensity(FitPropensityArgs),
    /// Score the calibration split with a trained model.
    Calibrate(CalibrateArgs),
    /// Compute one prediction interval for a single test point.
    Interval(IntervalArgs),
    /// Run the full coverage grid and export report + plot data.
    Evaluate(EvaluateArgs),
    /// Re-export plot data from a saved report.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenerateDataArgs {
    /// Benchmark id (1 or 2).
    #[arg(long)]
    dataset: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_calibration: usize,
    /// Test samples per intervention.
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV (columns x_*, a, y and optionally y_true, split).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitPropensityArgs {
    #[arg(long)]
    data: PathBuf,
    /// "silverman" or "fixed:H".
    #[arg(long, default_value = "silverman")]
    bandwidth: String,
    /// "discrete" (exact covariate groups) or "kernel:HX" (weighted pooling).
    #[arg(long, default_value = "discrete")]
    grouping: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Trained model checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Output scores CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IntervalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Calibration scores CSV from `calibrate`.
    #[arg(long)]
    scores: PathBuf,
    /// "known-propensity" or "unknown-propensity".
    #[arg(long)]
    scenario: String,
    /// "soft:DELTA" or "hard:EXPR" (e.g. hard:7x).
    #[arg(long)]
    intervention: String,
    /// Test covariates, comma separated.
    #[arg(long, value_delimiter = ',')]
    x: Vec<f64>,
    /// Observed dose of the test point (soft interventions).
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Propensity-error bound M.
    #[arg(long, default_value_t = 2.0)]
    error_bound: f64,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    /// Fitted density file (estimated policy).
    #[arg(long)]
    propensity: Option<PathBuf>,
    /// Use the analytic policy of benchmark 1 or 2 instead.
    #[arg(long)]
    true_propensity: Option<u8>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic benchmark id (alternative to --data-csv).
    #[arg(long)]
    dataset: Option<u8>,
    /// Ingest a CSV dataset instead of generating one.
    #[arg(long)]
    data_csv: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Repeatable: soft:DELTA or hard:EXPR.
    #[arg(long = "intervention")]
    interventions: Vec<String>,
    /// Repeatable significance levels.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    /// Repeatable seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    error_bound: Option<f64>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_calibration: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// none | first-seed | all
    #[arg(long)]
    export_intervals: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    report: PathBuf,
    /// Optional intervals.csv to carry over.
    #[arg(long)]
    intervals: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateData(args) => generate_data(args),
        Command::Train(args) => train(args),
        Command::FitPropensity(args) => fit_propensity(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Interval(args) => interval(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Export(args) => export(args),
    }
}

fn generate_data(args: GenerateDataArgs) -> Result<()> {
    let spec = GeneratorSpec {
        dataset_id: DatasetId::try_from(args.dataset)?,
        n_train: args.n_train,
        n_calibration: args.n_calibration,
        n_test_per_intervention: args.n_test,
        seed: args.seed,
    };
    let dataset = generate(&spec)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    harness::data_io::write_dataset(&args.out.join("data.csv"), &dataset)?;
    harness::data_io::write_manifest(&args.out.join("manifest.json"), &spec)?;
    println!(
        "wrote {} rows ({} train / {} calibration / {} test) to {}",
        dataset.len(),
        spec.n_train,
        spec.n_calibration,
        spec.n_test_per_intervention,
        args.out.display()
    );
    Ok(())
}

fn load_dataset(path: &PathBuf) -> Result<dosecp_core::types::Dataset> {
    Ok(harness::data_io::read_dataset(path, None, 0)?)
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let train_rows: Vec<Sample> = dataset.split(Split::Train).map(|r| r.sample.clone()).collect();
    let validation: Vec<Sample> =
        dataset.split(Split::Validation).map(|r| r.sample.clone()).collect();
    // Carve a diagnostic validation tail when the file has none.
    let (train_slice, validation) = if validation.is_empty() && train_rows.len() >= 10 {
        let carve = (train_rows.len() / 10).clamp(1, 200);
        let cut = train_rows.len() - carve;
        (&train_rows[..cut], train_rows[cut..].to_vec())
    } else {
        (&train_rows[..], validation)
    };
    let config = MlpConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        dropout_rate: args.dropout,
        seed: args.seed,
        ..MlpConfig::default()
    };
    let model = train_mlp(&config, train_slice, &validation)?;
    let test_rows: Vec<Sample> = dataset.split(Split::Test).map(|r| r.sample.clone()).collect();
    println!(
        "final train loss {:.6}{}{}",
        model.train_loss.last().copied().unwrap_or(f64::NAN),
        model
            .validation_loss
            .last()
            .map(|v| format!(", validation loss {v:.6}"))
            .unwrap_or_default(),
        if test_rows.is_empty() {
            String::new()
        } else {
            format!(", test mse {:.6}", model.mse(&test_rows))
        }
    );
    model.save(&args.out)?;
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn parse_bandwidth(s: &str) -> Result<BandwidthRule> {
    if s == "silverman" {
        return Ok(BandwidthRule::Silverman);
    }
    if let Some(h) = s.strip_prefix("fixed:") {
        return Ok(BandwidthRule::Fixed(h.parse().context("fixed bandwidth")?));
    }
    bail!("bandwidth must be 'silverman' or 'fixed:H', got {s:?}")
}

fn parse_grouping(s: &str) -> Result<CovariateGrouping> {
    if s == "discrete" {
        return Ok(CovariateGrouping::DiscreteExact);
    }
    if let Some(h) = s.strip_prefix("kernel:") {
        return Ok(CovariateGrouping::KernelWeighted(h.parse().context("covariate bandwidth")?));
    }
    bail!("grouping must be 'discrete' or 'kernel:HX', got {s:?}")
}

fn fit_propensity(args: FitPropensityArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let train_rows: Vec<Sample> = dataset.split(Split::Train).map(|r| r.sample.clone()).collect();
    let config = ConditionalDensityConfig {
        bandwidth: parse_bandwidth(&args.bandwidth)?,
        grouping: parse_grouping(&args.grouping)?,
    };
    let density = fit_conditional_density(&config, &train_rows)?;
    density.save(&args.out)?;
    println!(
        "fitted conditional density on {} train rows; written to {}",
        train_rows.len(),
        args.out.display()
    );
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let model = Mlp::load(&args.model)?;
    let calib = dosecp_core::types::CalibratedScores::from_dataset(
        &dataset,
        &model,
        dosecp_core::types::residual_score,
    )?;
    harness::data_io::write_scores(&args.out, &calib)?;
    println!("wrote {} calibration scores to {}", calib.len(), args.out.display());
    Ok(())
}

fn interval(args: IntervalArgs) -> Result<()> {
    if args.x.is_empty() {
        bail!("--x needs at least one covariate");
    }
    let model = Mlp::load(&args.model)?;
    let calib = harness::data_io::read_scores(&args.scores)?;
    let scenario = Scenario::parse(&args.scenario)?;
    let ispec = InterventionSpec::parse(&args.intervention)?;

    let density_file: Option<KernelConditionalDensity> = match &args.propensity {
        Some(path) => Some(KernelConditionalDensity::load(path)?),
        None => None,
    };
    let analytic: Option<TruePropensity> = match args.true_propensity {
        Some(id) => Some(TruePropensity(DatasetId::try_from(id)?)),
        None => None,
    };
    let propensity: &dyn PropensityModel = match (&density_file, &analytic) {
        (Some(d), None) => d,
        (None, Some(t)) => t,
        (None, None) => bail!("provide --propensity FILE or --true-propensity ID"),
        (Some(_), Some(_)) => bail!("--propensity and --true-propensity are mutually exclusive"),
    };

    let result = match (scenario, ispec) {
        (Scenario::KnownPropensity, InterventionSpec::Soft { delta }) => interval_soft(
            &model,
            propensity,
            &calib,
            &args.x,
            args.a,
            delta,
            args.alpha,
            args.epsilon,
        )?,
        (Scenario::UnknownPropensity, spec @ (InterventionSpec::HardConst { .. } | InterventionSpec::HardLinear { .. })) => {
            let a_star = match spec.resolve(&args.x) {
                dosecp_core::types::Intervention::Hard { a_star } => a_star,
                _ => unreachable!(),
            };
            let doses = &calib.a;
            let range = (doses.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - doses.iter().cloned().fold(f64::INFINITY, f64::min))
            .max(1e-6);
            let bounds = (
                args.sigma_min.unwrap_or(1e-3 * range),
                args.sigma_max.unwrap_or(range),
            );
            interval_hard(
                &model,
                propensity,
                &calib,
                &args.x,
                a_star,
                args.alpha,
                args.error_bound,
                bounds,
                args.epsilon,
            )?
        }
        (Scenario::KnownPropensity, _) => {
            bail!("the known-propensity scenario takes soft interventions (soft:DELTA)")
        }
        (Scenario::UnknownPropensity, _) => {
            bail!("the unknown-propensity scenario takes hard interventions (hard:EXPR)")
        }
        (Scenario::McDropoutBaseline, _) => {
            bail!("use `evaluate --scenario mc-dropout-baseline` for the sampling baseline")
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let data = if let Some(path) = &args.data_csv {
                DataSource::Csv { path: path.clone(), split_fractions: None }
            } else {
                let id = args
                    .dataset
                    .ok_or_else(|| anyhow!("need --config, --dataset, or --data-csv"))?;
                DataSource::Synthetic { dataset_id: DatasetId::try_from(id)? }
            };
            let scenario = Scenario::parse(
                args.scenario
                    .as_deref()
                    .ok_or_else(|| anyhow!("need --scenario without a config file"))?,
            )?;
            if args.interventions.is_empty() {
                bail!("need at least one --intervention without a config file");
            }
            let interventions = args
                .interventions
                .iter()
                .map(|s| InterventionSpec::parse(s))
                .collect::<dosecp_core::Result<Vec<_>>>()?;
            let template = serde_json::json!({
                "data": serde_json::to_value(&data)?,
                "scenario": serde_json::to_value(scenario)?,
                "interventions": serde_json::to_value(&interventions)?,
            });
            serde_json::from_value(template)?
        }
    };

    // Flag overrides.
    if let Some(id) = args.dataset {
        config.data = DataSource::Synthetic { dataset_id: DatasetId::try_from(id)? };
    }
    if let Some(path) = &args.data_csv {
        config.data = DataSource::Csv { path: path.clone(), split_fractions: None };
    }
    if let Some(s) = &args.scenario {
        config.scenario = Scenario::parse(s)?;
    }
    if !args.interventions.is_empty() {
        config.interventions = args
            .interventions
            .iter()
            .map(|s| InterventionSpec::parse(s))
            .collect::<dosecp_core::Result<Vec<_>>>()?;
    }
    if !args.alphas.is_empty() {
        config.alphas = args.alphas.clone();
    }
    if !args.seeds.is_empty() {
        config.seeds = args.seeds.clone();
    }
    if let Some(m) = args.error_bound {
        config.solver.error_bound = m;
    }
    if let Some(v) = args.sigma_min {
        config.solver.sigma_min = Some(v);
    }
    if let Some(v) = args.sigma_max {
        config.solver.sigma_max = Some(v);
    }
    if let Some(v) = args.epsilon {
        config.solver.epsilon = v;
    }
    if let Some(v) = args.n_train {
        config.n_train = Some(v);
    }
    if let Some(v) = args.n_calibration {
        config.n_calibration = Some(v);
    }
    if let Some(v) = args.n_test {
        config.n_test = Some(v);
    }
    if let Some(v) = args.epochs {
        config.mlp.epochs = v;
    }
    if let Some(v) = args.mc_samples {
        config.mc_samples = v;
    }
    if let Some(v) = &args.export_intervals {
        config.export_intervals = match v.as_str() {
            "none" => ExportIntervals::None,
            "first-seed" => ExportIntervals::FirstSeed,
            "all" => ExportIntervals::All,
            other => bail!("--export-intervals must be none|first-seed|all, got {other:?}"),
        };
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }

    let (report, intervals) = harness::run_experiment(&config)?;
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    config.save(&config.out_dir.join("config.json"))?;
    report.save(&config.out_dir.join("report.json"))?;
    harness::export_plot_data(&report, &intervals, &config.out_dir)?;

    println!("scenario              intervention   alpha   coverage (mean+-sd)   width");
    for agg in &report.aggregates {
        let coverage = match (agg.mean_coverage, agg.sd_coverage) {
            (Some(m), Some(s)) => format!("{m:.3} +- {s:.3}"),
            _ => "n/a".into(),
        };
        let width = agg.mean_width.map(|w| format!("{w:.4}")).unwrap_or_else(|| "n/a".into());
        println!(
            "{:<21} {:<14} {:<7} {:<21} {}",
            agg.scenario, agg.intervention, agg.alpha, coverage, width
        );
        if agg.n_error_cells > 0 {
            println!("  ({} seed cells failed; see report.json)", agg.n_error_cells);
        }
    }
    println!("outputs in {}", config.out_dir.display());
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let report = harness::CoverageReport::load(&args.report)?;
    let intervals = match &args.intervals {
        Some(path) => harness::parse_intervals_csv(path)?,
        None => Vec::new(),
    };
    harness::export_plot_data(&report, &intervals, &args.out)?;
    println!(
        "exported coverage.csv, intervals.csv, summary.json to {}",
        args.out.display()
    );
    Ok(())
}
