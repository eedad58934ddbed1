//! Conditional kernel density estimation of the generalized propensity
//! score `pi(a | x)`: per-group Gaussian kernels over the treatment with a
//! Silverman (or fixed) bandwidth, grouping covariates exactly when they
//! are discrete or pooling them with a covariate kernel otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PropensityModel, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateGrouping {
    /// Group rows whose covariate vectors match exactly.
    DiscreteExact,
    /// Pool rows with Gaussian covariate weights of this width.
    KernelWeighted(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensityConfig {
    pub bandwidth: BandwidthRule,
    pub grouping: CovariateGrouping,
}

impl Default for ConditionalDensityConfig {
    fn default() -> Self {
        ConditionalDensityConfig {
            bandwidth: BandwidthRule::Silverman,
            grouping: CovariateGrouping::DiscreteExact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Group {
    key: Vec<f64>,
    treatments: Vec<f64>,
    bandwidth: f64,
}

/// Fitted conditional density handle, evaluable as `pi_hat(a | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConditionalDensity {
    config: ConditionalDensityConfig,
    groups: Vec<Group>,
}

/// Linear-interpolation empirical quantile of a sorted slice.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Silverman's rule `0.9 * min(sd, IQR / 1.34) * m^(-1/5)`, falling back to
/// whichever spread statistic is positive.
fn silverman_bandwidth(treatments: &[f64]) -> Result<f64> {
    let m = treatments.len() as f64;
    let mean = treatments.iter().sum::<f64>() / m;
    let var = treatments.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (m - 1.0);
    let sd = var.sqrt();
    let mut sorted = treatments.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite treatments"));
    let iqr = empirical_quantile(&sorted, 0.75) - empirical_quantile(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => {
            return Err(Error::InvalidInput(
                "cannot pick a bandwidth for a zero-spread treatment group".into(),
            ))
        }
    };
    Ok(0.9 * spread * m.powf(-0.2))
}

fn gaussian_kernel_mean(treatments: &[f64], bandwidth: f64, a: f64) -> f64 {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bandwidth);
    let inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut acc = 0.0;
    for &aj in treatments {
        let d = a - aj;
        acc += (-d * d * inv2h2).exp();
    }
    // The Gaussian kernel is strictly positive on all of R; keep that true
    // in the far tails where the exponentials underflow.
    (norm * acc / treatments.len() as f64).max(1e-308)
}

/// Fits the conditional treatment density on the training samples.
///
/// With exact grouping every covariate group needs at least two samples;
/// the error names the offending group.
pub fn fit_conditional_density(
    config: &ConditionalDensityConfig,
    train: &[Sample],
) -> Result<KernelConditionalDensity> {
    if train.is_empty() {
        return Err(Error::InvalidInput("cannot fit a density on an empty training set".into()));
    }
    if let BandwidthRule::Fixed(h) = config.bandwidth {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("fixed bandwidth must be positive, got {h}")));
        }
    }
    if let CovariateGrouping::KernelWeighted(hx) = config.grouping {
        if !(hx.is_finite() && hx > 0.0) {
            return Err(Error::InvalidInput(format!(
                "covariate bandwidth must be positive, got {hx}"
            )));
        }
    }

    let groups = match config.grouping {
        CovariateGrouping::DiscreteExact => {
            // Bit-exact keys; BTreeMap keeps group order deterministic.
            let mut map: std::collections::BTreeMap<Vec<u64>, (Vec<f64>, Vec<f64>)> =
                std::collections::BTreeMap::new();
            for s in train {
                let bits: Vec<u64> = s.x.iter().map(|v| v.to_bits()).collect();
                let entry = map.entry(bits).or_insert_with(|| (s.x.clone(), Vec::new()));
                entry.1.push(s.a);
            }
            let mut groups = Vec::with_capacity(map.len());
            for (_, (key, treatments)) in map {
                if treatments.len() < 2 {
                    return Err(Error::InsufficientData {
                        group: key,
                        count: treatments.len(),
                        needed: 2,
                    });
                }
                let bandwidth = match config.bandwidth {
                    BandwidthRule::Fixed(h) => h,
                    BandwidthRule::Silverman => silverman_bandwidth(&treatments)?,
                };
                groups.push(Group { key, treatments, bandwidth });
            }
            groups
        }
        CovariateGrouping::KernelWeighted(_) => {
            // One pooled pseudo-group; covariate weights are applied at
            // evaluation time.
            if train.len() < 2 {
                return Err(Error::InsufficientData {
                    group: train[0].x.clone(),
                    count: train.len(),
                    needed: 2,
                });
            }
            let treatments: Vec<f64> = train.iter().map(|s| s.a).collect();
            let bandwidth = match config.bandwidth {
                BandwidthRule::Fixed(h) => h,
                BandwidthRule::Silverman => silverman_bandwidth(&treatments)?,
            };
            train
                .iter()
                .map(|s| Group {
                    key: s.x.clone(),
                    treatments: vec![s.a],
                    bandwidth,
                })
                .collect()
        }
    };
    Ok(KernelConditionalDensity { config: *config, groups })
}

impl KernelConditionalDensity {
    /// Evaluates `pi_hat(a | x)`. Unknown exact groups evaluate to zero,
    /// which downstream positivity checks reject with context.
    pub fn evaluate(&self, a: f64, x: &[f64]) -> f64 {
        match self.config.grouping {
            CovariateGrouping::DiscreteExact => {
                for g in &self.groups {
                    if g.key.len() == x.len() && g.key.iter().zip(x).all(|(k, v)| k == v) {
                        return gaussian_kernel_mean(&g.treatments, g.bandwidth, a);
                    }
                }
                0.0
            }
            CovariateGrouping::KernelWeighted(hx) => {
                let inv2h2 = 1.0 / (2.0 * hx * hx);
                let mut weight_sum = 0.0;
                let mut acc = 0.0;
                for g in &self.groups {
                    let d2: f64 =
                        g.key.iter().zip(x).map(|(k, v)| (k - v) * (k - v)).sum();
                    let w = (-d2 * inv2h2).exp();
                    weight_sum += w;
                    acc += w * gaussian_kernel_mean(&g.treatments, g.bandwidth, a);
                }
                if weight_sum > 0.0 {
                    acc / weight_sum
                } else {
                    0.0
                }
            }
        }
    }

    /// Group keys in deterministic order (exact grouping only).
    pub fn group_keys(&self) -> Vec<Vec<f64>> {
        self.groups.iter().map(|g| g.key.clone()).collect()
    }

    const MAGIC: &'static str = "dosecp-propensity v1";

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, format!("{}\n{}\n", Self::MAGIC, body))?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (magic, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Io(format!("{}: missing density header", path.display())))?;
        if magic.trim() != Self::MAGIC {
            return Err(Error::Io(format!(
                "{}: expected header {:?}, found {:?}",
                path.display(),
                Self::MAGIC,
                magic
            )));
        }
        Ok(serde_json::from_str(body)?)
    }
}

impl PropensityModel for KernelConditionalDensity {
    fn density(&self, a: f64, x: &[f64]) -> f64 {
        self.evaluate(a, x)
    }
}
