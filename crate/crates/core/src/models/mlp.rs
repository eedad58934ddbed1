//! Small feedforward regressor trained in-house: dense layers, rectified
//! linear units, inverted dropout, and adaptive-moment gradient updates.
//! Self-contained and bit-reproducible for a given seed; the network sizes
//! used here (three hidden layers of width 16) do not warrant an external
//! learning framework.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{OutcomePredictor, Sample};

/// Training protocol for the regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Hidden-layer widths; activations are rectified-linear.
    pub layer_widths: Vec<usize>,
    /// Dropout rate in `[0, 1)`, applied to hidden activations.
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            layer_widths: vec![16, 16, 16],
            dropout_rate: 0.1,
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::InvalidInput("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidInput(format!(
                "dropout rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A trained regressor handle: weights, input standardization statistics,
/// and per-epoch loss diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    /// Layer dimensions `[input, hidden..., 1]`.
    dims: Vec<usize>,
    /// Row-major `out x in` weight matrices.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

fn standardization(inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = inputs[0].len();
    let n = inputs.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in inputs {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in inputs {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt().max(1e-9)).collect();
    (mean, std)
}

/// Trains the regressor on `(x, a) -> y` with mean-squared-error loss and
/// adaptive-moment updates. Deterministic for a given seed; fails with the
/// epoch index if the loss turns non-finite.
pub fn train_mlp(config: &MlpConfig, train: &[Sample], validation: &[Sample]) -> Result<Mlp> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let input_dim = train[0].x.len() + 1;
    let inputs: Vec<Vec<f64>> = train
        .iter()
        .map(|s| {
            let mut z = s.x.clone();
            z.push(s.a);
            z
        })
        .collect();
    let targets: Vec<f64> = train.iter().map(|s| s.y).collect();
    let (input_mean, input_std) = standardization(&inputs);
    let standardized: Vec<Vec<f64>> = inputs
        .iter()
        .map(|z| {
            z.iter()
                .zip(&input_mean)
                .zip(&input_std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();

    let mut dims = vec![input_dim];
    dims.extend_from_slice(&config.layer_widths);
    dims.push(1);

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..dims.len() - 1 {
        let fan_in = dims[l];
        let fan_out = dims[l + 1];
        // He initialization for the rectified hidden layers, smaller scale
        // for the linear output.
        let scale = if l + 2 == dims.len() {
            (1.0 / fan_in as f64).sqrt()
        } else {
            (2.0 / fan_in as f64).sqrt()
        };
        let normal = Normal::new(0.0, scale).expect("valid std");
        weights.push((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect());
        biases.push(vec![0.0; fan_out]);
    }

    let mut net = Mlp {
        config: config.clone(),
        dims,
        weights,
        biases,
        input_mean,
        input_std,
        train_loss: Vec::with_capacity(config.epochs),
        validation_loss: Vec::with_capacity(config.epochs),
    };
    let mut opt = Adam::new(&net);

    let n = standardized.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        // Fisher-Yates with the training stream keeps batches reproducible.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            epoch_loss += train_batch(&mut net, &mut opt, &standardized, &targets, batch, &mut rng);
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingFailure {
                epoch,
                reason: format!("non-finite training loss {epoch_loss}"),
            });
        }
        net.train_loss.push(epoch_loss);
        if !validation.is_empty() {
            net.validation_loss.push(net.mse(validation));
        }
    }
    Ok(net)
}

/// One gradient step over a batch; returns the summed squared error.
fn train_batch(
    net: &mut Mlp,
    opt: &mut Adam,
    inputs: &[Vec<f64>],
    targets: &[f64],
    batch: &[usize],
    rng: &mut ChaCha12Rng,
) -> f64 {
    let layers = net.weights.len();
    let mut grad_w: Vec<Vec<f64>> = net.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut loss_sum = 0.0;
    let keep = 1.0 - net.config.dropout_rate;

    for &idx in batch {
        // Forward, caching post-activation values and dropout masks.
        let mut activations: Vec<Vec<f64>> = vec![inputs[idx].clone()];
        let mut masks: Vec<Vec<f64>> = Vec::with_capacity(layers);
        for l in 0..layers {
            let (out_dim, in_dim) = (net.dims[l + 1], net.dims[l]);
            let prev = &activations[l];
            let mut out = vec![0.0; out_dim];
            for o in 0..out_dim {
                let row = &net.weights[l][o * in_dim..(o + 1) * in_dim];
                let mut acc = net.biases[l][o];
                for (w, v) in row.iter().zip(prev) {
                    acc += w * v;
                }
                out[o] = acc;
            }
            if l + 1 < layers {
                let mut mask = vec![0.0; out_dim];
                for (m, v) in mask.iter_mut().zip(out.iter_mut()) {
                    *v = v.max(0.0);
                    if net.config.dropout_rate > 0.0 {
                        *m = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                        *v *= *m;
                    } else {
                        *m = 1.0;
                    }
                }
                masks.push(mask);
            }
            activations.push(out);
        }

        let pred = activations[layers][0];
        let err = pred - targets[idx];
        loss_sum += err * err;

        // Backward.
        let batch_len = batch.len() as f64;
        let mut delta = vec![2.0 * err / batch_len];
        for l in (0..layers).rev() {
            let (out_dim, in_dim) = (net.dims[l + 1], net.dims[l]);
            let prev = &activations[l];
            for o in 0..out_dim {
                let d = delta[o];
                grad_b[l][o] += d;
                let row = &mut grad_w[l][o * in_dim..(o + 1) * in_dim];
                for (g, v) in row.iter_mut().zip(prev) {
                    *g += d * v;
                }
            }
            if l > 0 {
                let mut next_delta = vec![0.0; in_dim];
                for o in 0..out_dim {
                    let d = delta[o];
                    let row = &net.weights[l][o * in_dim..(o + 1) * in_dim];
                    for (nd, w) in next_delta.iter_mut().zip(row) {
                        *nd += d * w;
                    }
                }
                // Through dropout and the rectifier of layer l.
                let mask = &masks[l - 1];
                let act = &activations[l];
                for i in 0..in_dim {
                    next_delta[i] *= mask[i] * if act[i] > 0.0 { 1.0 } else { 0.0 };
                }
                delta = next_delta;
            }
        }
    }

    opt.step(net, &grad_w, &grad_b);
    loss_sum
}

/// Adaptive-moment estimates for every parameter.
struct Adam {
    t: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Mlp) -> Self {
        Adam {
            t: 0,
            m_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn step(&mut self, net: &mut Mlp, grad_w: &[Vec<f64>], grad_b: &[Vec<f64>]) {
        self.t += 1;
        let lr = net.config.learning_rate;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for l in 0..net.weights.len() {
            update(&mut net.weights[l], &grad_w[l], &mut self.m_w[l], &mut self.v_w[l], lr, bc1, bc2);
            update(&mut net.biases[l], &grad_b[l], &mut self.m_b[l], &mut self.v_b[l], lr, bc1, bc2);
        }

        fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, bc1: f64, bc2: f64) {
            for i in 0..p.len() {
                m[i] = Adam::BETA1 * m[i] + (1.0 - Adam::BETA1) * g[i];
                v[i] = Adam::BETA2 * v[i] + (1.0 - Adam::BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + Adam::EPS);
            }
        }
    }
}

impl Mlp {
    fn standardize(&self, x: &[f64], a: f64) -> Vec<f64> {
        let mut z: Vec<f64> = Vec::with_capacity(x.len() + 1);
        z.extend_from_slice(x);
        z.push(a);
        z.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn forward(&self, input: Vec<f64>, mut dropout: Option<&mut dyn FnMut() -> f64>) -> f64 {
        let layers = self.weights.len();
        let mut current = input;
        for l in 0..layers {
            let (out_dim, in_dim) = (self.dims[l + 1], self.dims[l]);
            let mut out = vec![0.0; out_dim];
            for o in 0..out_dim {
                let row = &self.weights[l][o * in_dim..(o + 1) * in_dim];
                let mut acc = self.biases[l][o];
                for (w, v) in row.iter().zip(&current) {
                    acc += w * v;
                }
                out[o] = acc;
            }
            if l + 1 < layers {
                for v in &mut out {
                    *v = v.max(0.0);
                    if let Some(mask) = dropout.as_mut() {
                        *v *= mask();
                    }
                }
            }
            current = out;
        }
        current[0]
    }

    /// Deterministic evaluation: dropout disabled; inverted dropout during
    /// training keeps the scale correct without rescaling here.
    pub fn predict_deterministic(&self, x: &[f64], a: f64) -> f64 {
        self.forward(self.standardize(x, a), None)
    }

    /// One stochastic forward pass with dropout active.
    pub fn predict_stochastic<R: Rng>(&self, x: &[f64], a: f64, rng: &mut R) -> f64 {
        let keep = 1.0 - self.config.dropout_rate;
        if self.config.dropout_rate == 0.0 {
            return self.predict_deterministic(x, a);
        }
        let mut mask = || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        self.forward(self.standardize(x, a), Some(&mut mask))
    }

    /// Mean squared error of deterministic predictions.
    pub fn mse(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples
            .iter()
            .map(|s| {
                let e = self.predict_deterministic(&s.x, s.a) - s.y;
                e * e
            })
            .sum::<f64>()
            / samples.len() as f64
    }

    const MAGIC: &'static str = "dosecp-mlp v1";

    /// Writes the checkpoint: a magic line followed by a JSON body with the
    /// config block and row-major 64-bit weight matrices.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, format!("{}\n{}\n", Self::MAGIC, body))?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (magic, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Io(format!("{}: missing checkpoint header", path.display())))?;
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

impl OutcomePredictor for Mlp {
    fn predict(&self, x: &[f64], a: f64) -> f64 {
        self.predict_deterministic(x, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_dataset(c: f64, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let t = (i as f64) / (n as f64);
                Sample::new(vec![t, 1.0 - t], 2.0 * t - 1.0, c)
            })
            .collect()
    }

    #[test]
    fn learns_a_constant_target() {
        let config = MlpConfig { epochs: 120, seed: 5, ..MlpConfig::default() };
        let train = constant_dataset(1.5, 500);
        let net = train_mlp(&config, &train, &[]).unwrap();
        for s in train.iter().step_by(50) {
            let pred = net.predict_deterministic(&s.x, s.a);
            assert!((pred - 1.5).abs() <= 0.05, "prediction {pred}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = MlpConfig { epochs: 10, seed: 42, ..MlpConfig::default() };
        let train = constant_dataset(0.3, 64);
        let a = train_mlp(&config, &train, &[]).unwrap();
        let b = train_mlp(&config, &train, &[]).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.biases, b.biases);
        assert_eq!(a.train_loss, b.train_loss);
    }

    #[test]
    fn different_seeds_differ() {
        let train = constant_dataset(0.3, 64);
        let a = train_mlp(&MlpConfig { epochs: 5, seed: 1, ..MlpConfig::default() }, &train, &[])
            .unwrap();
        let b = train_mlp(&MlpConfig { epochs: 5, seed: 2, ..MlpConfig::default() }, &train, &[])
            .unwrap();
        assert_ne!(a.weights, b.weights);
    }

    #[test]
    fn deterministic_prediction_is_pure() {
        let train = constant_dataset(0.3, 64);
        let net = train_mlp(&MlpConfig { epochs: 5, seed: 9, ..MlpConfig::default() }, &train, &[])
            .unwrap();
        let p1 = net.predict_deterministic(&[0.5, 0.5], 0.0);
        let p2 = net.predict_deterministic(&[0.5, 0.5], 0.0);
        assert_eq!(p1.to_bits(), p2.to_bits());
    }

    #[test]
    fn training_loss_stays_finite_and_decreases() {
        let config = MlpConfig { epochs: 60, seed: 3, ..MlpConfig::default() };
        // y = 0.5 * a + x_0, learnable.
        let train: Vec<Sample> = (0..400)
            .map(|i| {
                let t = (i as f64) / 400.0;
                Sample::new(vec![t], t * 4.0 - 2.0, 0.5 * (t * 4.0 - 2.0) + t)
            })
            .collect();
        let net = train_mlp(&config, &train, &train[..50]).unwrap();
        assert!(net.train_loss.iter().all(|l| l.is_finite()));
        assert!(net.validation_loss.iter().all(|l| l.is_finite()));
        let early: f64 = net.train_loss[..5].iter().sum();
        let late: f64 = net.train_loss[net.train_loss.len() - 5..].iter().sum();
        assert!(late < early, "loss should decrease: early {early}, late {late}");
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let train = constant_dataset(0.7, 64);
        let net = train_mlp(&MlpConfig { epochs: 5, seed: 8, ..MlpConfig::default() }, &train, &[])
            .unwrap();
        let dir = std::env::temp_dir().join("dosecp-mlp-roundtrip-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        net.save(&path).unwrap();
        let loaded = Mlp::load(&path).unwrap();
        assert_eq!(net, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_bad_config_and_empty_training_set() {
        let bad = MlpConfig { dropout_rate: 1.0, ..MlpConfig::default() };
        assert!(train_mlp(&bad, &constant_dataset(0.0, 4), &[]).is_err());
        assert!(train_mlp(&MlpConfig::default(), &[], &[]).is_err());
    }
}
