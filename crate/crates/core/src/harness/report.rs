//! Coverage-experiment results: one row per (scenario, intervention,
//! significance, seed) cell plus seed-aggregated summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One experiment cell. Failed cells carry an error note and no metrics;
/// the run keeps going so isolated solver failures stay diagnosable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: String,
    pub intervention: String,
    pub alpha: f64,
    pub seed: u64,
    pub n_points: usize,
    /// Fraction of potential outcomes inside their interval.
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    /// Mean wall-clock seconds per interval (diagnostic; excluded from the
    /// byte-stable outputs).
    pub runtime_s: Option<f64>,
    pub error: Option<String>,
}

/// Mean and standard deviation across seeds for one
/// (scenario, intervention, alpha) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub intervention: String,
    pub alpha: f64,
    pub n_seeds: usize,
    pub n_error_cells: usize,
    pub mean_coverage: Option<f64>,
    pub sd_coverage: Option<f64>,
    pub mean_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl CoverageReport {
    /// Sorts cells into a canonical order and recomputes the aggregates,
    /// keeping output independent of evaluation order.
    pub fn from_cells(mut cells: Vec<CellResult>) -> Self {
        cells.sort_by(|a, b| {
            (&a.scenario, &a.intervention, a.alpha.to_bits(), a.seed).cmp(&(
                &b.scenario,
                &b.intervention,
                b.alpha.to_bits(),
                b.seed,
            ))
        });
        let mut aggregates: Vec<Aggregate> = Vec::new();
        let mut idx = 0;
        while idx < cells.len() {
            let key = (
                cells[idx].scenario.clone(),
                cells[idx].intervention.clone(),
                cells[idx].alpha,
            );
            let mut group: Vec<&CellResult> = Vec::new();
            while idx < cells.len()
                && cells[idx].scenario == key.0
                && cells[idx].intervention == key.1
                && cells[idx].alpha == key.2
            {
                group.push(&cells[idx]);
                idx += 1;
            }
            let coverages: Vec<f64> = group.iter().filter_map(|c| c.coverage).collect();
            let widths: Vec<f64> = group.iter().filter_map(|c| c.mean_width).collect();
            let errors = group.iter().filter(|c| c.error.is_some()).count();
            let (mean_coverage, sd_coverage) = if coverages.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&coverages);
                (Some(m), Some(s))
            };
            let mean_width = if widths.is_empty() {
                None
            } else {
                Some(mean_sd(&widths).0)
            };
            aggregates.push(Aggregate {
                scenario: key.0,
                intervention: key.1,
                alpha: key.2,
                n_seeds: group.len(),
                n_error_cells: errors,
                mean_coverage,
                sd_coverage,
                mean_width,
            });
        }
        CoverageReport { cells, aggregates }
    }

    pub fn aggregate_for(
        &self,
        scenario: &str,
        intervention: &str,
        alpha: f64,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.scenario == scenario && a.intervention == intervention && a.alpha == alpha
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One computed interval with its evaluation context, as exported for
/// plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub x: Vec<f64>,
    /// Dose at which the interval was computed (post-intervention).
    pub a: f64,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    /// Realized potential outcome used for coverage; NaN-free by
    /// construction (None when no ground truth exists).
    pub y_true: Option<f64>,
    pub alpha: f64,
    pub method: String,
}
