//! Experiment configuration: scenario, interventions, significance grid,
//! seeds, solver parameters. Loadable from a single JSON file with CLI
//! flags overriding individual fields.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ConditionalDensityConfig, MlpConfig};
use crate::synthdata::{DatasetId, GeneratorSpec};
use crate::types::{check_alpha, Intervention};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    KnownPropensity,
    UnknownPropensity,
    McDropoutBaseline,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::KnownPropensity => "known-propensity",
            Scenario::UnknownPropensity => "unknown-propensity",
            Scenario::McDropoutBaseline => "mc-dropout-baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "known-propensity" | "known" => Ok(Scenario::KnownPropensity),
            "unknown-propensity" | "unknown" => Ok(Scenario::UnknownPropensity),
            "mc-dropout-baseline" | "mc-dropout" => Ok(Scenario::McDropoutBaseline),
            other => Err(Error::InvalidInput(format!("unknown scenario {other:?}"))),
        }
    }
}

/// An intervention as written on the command line: `soft:DELTA` for a
/// policy shift, `hard:EXPR` for a fixed assignment where EXPR is a
/// constant (`hard:5`) or a multiple of the confounder (`hard:7x`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionSpec {
    Soft { delta: f64 },
    HardConst { a_star: f64 },
    HardLinear { coeff: f64 },
}

impl InterventionSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("intervention {s:?} is not KIND:VALUE")))?;
        match kind {
            "soft" => {
                let delta: f64 = arg
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad soft shift {arg:?}")))?;
                Ok(InterventionSpec::Soft { delta })
            }
            "hard" => {
                if let Some(coeff) = arg.strip_suffix('x') {
                    let coeff: f64 = if coeff.is_empty() {
                        1.0
                    } else {
                        coeff.parse().map_err(|_| {
                            Error::InvalidInput(format!("bad hard expression {arg:?}"))
                        })?
                    };
                    Ok(InterventionSpec::HardLinear { coeff })
                } else {
                    let a_star: f64 = arg
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad hard dose {arg:?}")))?;
                    Ok(InterventionSpec::HardConst { a_star })
                }
            }
            other => Err(Error::InvalidInput(format!("unknown intervention kind {other:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InterventionSpec::Soft { delta } => format!("soft:{delta}"),
            InterventionSpec::HardConst { a_star } => format!("hard:{a_star}"),
            InterventionSpec::HardLinear { coeff } => format!("hard:{coeff}x"),
        }
    }

    pub fn is_soft(&self) -> bool {
        matches!(self, InterventionSpec::Soft { .. })
    }

    /// The concrete intervention for a test point with confounder vector
    /// `x` (first coordinate drives linear hard rules).
    pub fn resolve(&self, x: &[f64]) -> Intervention {
        match self {
            InterventionSpec::Soft { delta } => Intervention::Soft { delta_a: *delta },
            InterventionSpec::HardConst { a_star } => Intervention::Hard { a_star: *a_star },
            InterventionSpec::HardLinear { coeff } => {
                Intervention::Hard { a_star: coeff * x[0] }
            }
        }
    }
}

/// Where the observational data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Synthetic benchmark; the generator seed is replaced by each run
    /// seed.
    Synthetic { dataset_id: DatasetId },
    /// Ingested CSV with columns `x_*`, `a`, `y` and either a `split`
    /// column or split fractions (train/validation/calibration/test).
    Csv {
        path: PathBuf,
        #[serde(default)]
        split_fractions: Option<[f64; 4]>,
    },
}

fn default_error_bound() -> f64 {
    2.0
}
fn default_epsilon() -> f64 {
    1e-3
}

/// Solver knobs shared by both scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Assumed multiplicative propensity-error bound M.
    #[serde(default = "default_error_bound")]
    pub error_bound: f64,
    /// Gaussian-width bounds; when absent they derive from the
    /// calibration dose range (1e-3 * range, range).
    #[serde(default)]
    pub sigma_min: Option<f64>,
    #[serde(default)]
    pub sigma_max: Option<f64>,
    /// Bisection tolerance in score units.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            error_bound: default_error_bound(),
            sigma_min: None,
            sigma_max: None,
            epsilon: default_epsilon(),
        }
    }
}

fn default_alphas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_mc_samples() -> usize {
    100
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Which per-point intervals land in `intervals.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExportIntervals {
    None,
    #[default]
    FirstSeed,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub scenario: Scenario,
    pub interventions: Vec<InterventionSpec>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub mlp: MlpConfig,
    /// Propensity-estimator settings for the unknown scenario.
    #[serde(default)]
    pub density: ConditionalDensityConfig,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub export_intervals: ExportIntervals,
    /// Test points per intervention (synthetic data).
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Training/calibration sizes (synthetic data); defaults follow the
    /// benchmark protocol.
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_calibration: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interventions.is_empty() {
            return Err(Error::InvalidInput("need at least one intervention".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("need at least one seed".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidInput("need at least one alpha".into()));
        }
        for &alpha in &self.alphas {
            check_alpha(alpha)?;
        }
        if self.mc_samples < 2 {
            return Err(Error::InvalidInput("mc_samples must be at least 2".into()));
        }
        match self.scenario {
            Scenario::KnownPropensity => {
                if self.interventions.iter().any(|i| !i.is_soft()) {
                    return Err(Error::InvalidInput(
                        "the known-propensity scenario handles soft interventions only".into(),
                    ));
                }
                if !matches!(self.data, DataSource::Synthetic { .. }) {
                    return Err(Error::InvalidInput(
                        "the known-propensity scenario needs the analytic policy of synthetic data"
                            .into(),
                    ));
                }
            }
            Scenario::UnknownPropensity => {
                if self.interventions.iter().any(|i| i.is_soft()) {
                    return Err(Error::InvalidInput(
                        "the unknown-propensity scenario handles hard interventions only".into(),
                    ));
                }
            }
            Scenario::McDropoutBaseline => {}
        }
        Ok(())
    }

    /// Generator spec for one run seed (synthetic sources only).
    pub fn generator_spec(&self, seed: u64) -> Option<GeneratorSpec> {
        match &self.data {
            DataSource::Synthetic { dataset_id } => {
                let mut spec = GeneratorSpec::new(*dataset_id, seed);
                if let Some(n) = self.n_train {
                    spec.n_train = n;
                }
                if let Some(n) = self.n_calibration {
                    spec.n_calibration = n;
                }
                if let Some(n) = self.n_test {
                    spec.n_test_per_intervention = n;
                }
                Some(spec)
            }
            DataSource::Csv { .. } => None,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervention_parsing() {
        assert_eq!(InterventionSpec::parse("soft:5").unwrap(), InterventionSpec::Soft { delta: 5.0 });
        assert_eq!(
            InterventionSpec::parse("soft:-2.5").unwrap(),
            InterventionSpec::Soft { delta: -2.5 }
        );
        assert_eq!(
            InterventionSpec::parse("hard:7x").unwrap(),
            InterventionSpec::HardLinear { coeff: 7.0 }
        );
        assert_eq!(
            InterventionSpec::parse("hard:5").unwrap(),
            InterventionSpec::HardConst { a_star: 5.0 }
        );
        assert_eq!(
            InterventionSpec::parse("hard:x").unwrap(),
            InterventionSpec::HardLinear { coeff: 1.0 }
        );
        assert!(InterventionSpec::parse("soft").is_err());
        assert!(InterventionSpec::parse("both:1").is_err());
    }

    #[test]
    fn labels_roundtrip_through_parse() {
        for s in ["soft:1", "soft:-0.5", "hard:10", "hard:7x"] {
            let spec = InterventionSpec::parse(s).unwrap();
            assert_eq!(InterventionSpec::parse(&spec.label()).unwrap(), spec);
        }
    }

    #[test]
    fn resolve_uses_confounder_for_linear_rules() {
        let spec = InterventionSpec::parse("hard:7x").unwrap();
        assert_eq!(spec.resolve(&[3.0]), Intervention::Hard { a_star: 21.0 });
        let soft = InterventionSpec::parse("soft:2").unwrap();
        assert_eq!(soft.resolve(&[3.0]), Intervention::Soft { delta_a: 2.0 });
    }

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic { dataset_id: DatasetId::One },
            scenario: Scenario::KnownPropensity,
            interventions: vec![InterventionSpec::Soft { delta: 1.0 }],
            alphas: default_alphas(),
            seeds: vec![0, 1],
            solver: SolverParams::default(),
            mlp: MlpConfig::default(),
            density: ConditionalDensityConfig::default(),
            mc_samples: 100,
            out_dir: PathBuf::from("out"),
            export_intervals: ExportIntervals::FirstSeed,
            n_test: None,
            n_train: None,
            n_calibration: None,
        }
    }

    #[test]
    fn scenario_intervention_compatibility() {
        let mut config = base_config();
        assert!(config.validate().is_ok());
        config.interventions = vec![InterventionSpec::HardLinear { coeff: 5.0 }];
        assert!(config.validate().is_err());
        config.scenario = Scenario::UnknownPropensity;
        assert!(config.validate().is_ok());
        config.interventions.push(InterventionSpec::Soft { delta: 1.0 });
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_json_roundtrip_with_defaults() {
        let config = base_config();
        let dir = std::env::temp_dir().join("dosecp-config-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("config.json");
        config.save(&path).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap(), config);

        // Minimal JSON fills in the documented defaults.
        let minimal = r#"{
            "data": {"synthetic": {"dataset_id": 1}},
            "scenario": "known-propensity",
            "interventions": [{"soft": {"delta": 1.0}}]
        }"#;
        let parsed: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.alphas, vec![0.05, 0.1, 0.2]);
        assert_eq!(parsed.seeds.len(), 10);
        assert_eq!(parsed.solver.error_bound, 2.0);
        assert_eq!(parsed.solver.epsilon, 1e-3);
        std::fs::remove_dir_all(&dir).ok();
    }
}
