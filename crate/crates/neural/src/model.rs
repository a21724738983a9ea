//! Model configuration, parameters, initialization, and checkpointing.

use std::path::Path;

use gridflow_autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use gridflow_autodiff::{AdError, Dtype, Tensor};
use rand::{Rng, RngCore};

/// Input features per bus node: p, q, vm, va, sin va, cos va, one-hot type.
pub const BUS_FEATURES: usize = 9;
/// Decoded variables per bus: p, q, vm, va.
pub const DECODED: usize = 4;

/// Gaussian mixture over the start-noise added to unknown variables.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        // two symmetric components; magnitudes sized so a randomized start
        // stays an electrically plausible state (a 0.1 p.u. voltage error
        // already implies several p.u. of phantom line flow)
        NoiseSpec { weights: vec![0.5, 0.5], means: vec![-0.02, 0.02], std_devs: vec![0.01, 0.01] }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        NoiseSpec { weights: vec![1.0], means: vec![0.0], std_devs: vec![0.0] }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.weights.len() != self.means.len() || self.weights.len() != self.std_devs.len() {
            return Err("mixture component lists must have equal length".into());
        }
        if self.weights.is_empty() {
            return Err("mixture needs at least one component".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("mixture weights sum to {sum}, expected 1"));
        }
        if self.std_devs.iter().any(|s| *s < 0.0) {
            return Err("negative std dev".into());
        }
        Ok(())
    }

    /// One mixture draw: pick a component by weight, then Box-Muller.
    pub fn sample(&self, rng: &mut impl RngCore) -> f64 {
        let pick: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.weights.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if pick < acc {
                comp = i;
                break;
            }
        }
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        self.means[comp] + self.std_devs[comp] * z
    }
}

/// Which candidates the training loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Mean of the training loss over every iteration's candidate.
    Deep,
    /// Only the final iteration's candidate.
    Final,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ModelConfig {
    /// Hidden embedding width.
    pub d: usize,
    /// Layers per MLP.
    pub mlp_depth: usize,
    pub leaky_slope: f64,
    pub iterations_train: usize,
    pub iterations_infer: usize,
    pub restarts_infer: usize,
    pub noise: NoiseSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss_mode: LossMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 150,
            mlp_depth: 2,
            leaky_slope: 0.01,
            iterations_train: 30,
            iterations_infer: 50,
            restarts_infer: 10,
            noise: NoiseSpec::default(),
            learning_rate: 1e-3,
            batch_size: 16,
            loss_mode: LossMode::Deep,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d == 0 || self.mlp_depth == 0 {
            return Err("d and mlp_depth must be at least 1".into());
        }
        if self.iterations_train == 0 || self.iterations_infer == 0 || self.restarts_infer == 0 {
            return Err("iteration and restart counts must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

/// LSTM cell with gate order [input, forget, cell, output] stacked along
/// columns: w is (in x 4d), u is (d x 4d), b is (1 x 4d).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    pub w: Tensor<T>,
    pub u: Tensor<T>,
    pub b: Tensor<T>,
}

/// All trainable tensors. One LSTM cell per bus type, one for branches, and
/// one final cell ahead of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub d: usize,
    pub encoder: Mlp<T>,
    pub message: Mlp<T>,
    pub edge_receiver: Mlp<T>,
    pub transmitter: Mlp<T>,
    pub node_receiver: Mlp<T>,
    pub decoder: Mlp<T>,
    pub lstm_pq: LstmCell<T>,
    pub lstm_pv: LstmCell<T>,
    pub lstm_slack: LstmCell<T>,
    pub lstm_branch: LstmCell<T>,
    pub lstm_final: LstmCell<T>,
}

fn xavier<T: Dtype>(rows: usize, cols: usize, rng: &mut impl RngCore) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::from_f64(rng.random_range(-limit..limit))).collect();
    Tensor::new(rows, cols, data)
}

fn mlp<T: Dtype>(input: usize, hidden: usize, output: usize, depth: usize, rng: &mut impl RngCore) -> Mlp<T> {
    let mut layers = Vec::with_capacity(depth);
    let mut fan_in = input;
    for layer in 0..depth {
        let fan_out = if layer + 1 == depth { output } else { hidden };
        layers.push(Linear { w: xavier(fan_in, fan_out, rng), b: Tensor::zeros(1, fan_out) });
        fan_in = fan_out;
    }
    Mlp { layers }
}

fn lstm<T: Dtype>(input: usize, d: usize, rng: &mut impl RngCore) -> LstmCell<T> {
    let mut b = Tensor::zeros(1, 4 * d);
    // forget-gate bias starts at 1 so early iterations retain state
    for c in d..2 * d {
        b.set(0, c, T::one());
    }
    LstmCell { w: xavier(input, 4 * d, rng), u: xavier(d, 4 * d, rng), b }
}

impl<T: Dtype> ModelParams<T> {
    pub fn init(cfg: &ModelConfig, rng: &mut impl RngCore) -> Self {
        let d = cfg.d;
        let depth = cfg.mlp_depth;
        let mut decoder = mlp(2 * d, d, DECODED, depth, rng);
        // zero-init the output projection: a fresh model refines its start
        // state by nothing at all, instead of taking random steps that the
        // admittance matrix amplifies into enormous residuals
        if let Some(last) = decoder.layers.last_mut() {
            last.w = Tensor::zeros(last.w.rows(), last.w.cols());
        }
        ModelParams {
            d,
            encoder: mlp(BUS_FEATURES, d, d, depth, rng),
            message: mlp(d, d, d, depth, rng),
            edge_receiver: mlp(d + 2, d, d, depth, rng),
            transmitter: mlp(d, d, d, depth, rng),
            node_receiver: mlp(d, d, d, depth, rng),
            decoder,
            lstm_pq: lstm(2 * d, d, rng),
            lstm_pv: lstm(2 * d, d, rng),
            lstm_slack: lstm(2 * d, d, rng),
            lstm_branch: lstm(d, d, rng),
            lstm_final: lstm(d, d, rng),
        }
    }

    /// Named tensors in a fixed order (checkpoint manifest order, optimizer
    /// slot order).
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        fn mlp_entries<'a, T>(name: &str, m: &'a Mlp<T>, out: &mut Vec<(String, &'a Tensor<T>)>) {
            for (i, layer) in m.layers.iter().enumerate() {
                out.push((format!("{name}.{i}.w"), &layer.w));
                out.push((format!("{name}.{i}.b"), &layer.b));
            }
        }
        fn lstm_entries<'a, T>(
            name: &str,
            c: &'a LstmCell<T>,
            out: &mut Vec<(String, &'a Tensor<T>)>,
        ) {
            out.push((format!("{name}.w"), &c.w));
            out.push((format!("{name}.u"), &c.u));
            out.push((format!("{name}.b"), &c.b));
        }
        let mut out = Vec::new();
        mlp_entries("encoder", &self.encoder, &mut out);
        mlp_entries("message", &self.message, &mut out);
        mlp_entries("edge_receiver", &self.edge_receiver, &mut out);
        mlp_entries("transmitter", &self.transmitter, &mut out);
        mlp_entries("node_receiver", &self.node_receiver, &mut out);
        mlp_entries("decoder", &self.decoder, &mut out);
        lstm_entries("lstm_pq", &self.lstm_pq, &mut out);
        lstm_entries("lstm_pv", &self.lstm_pv, &mut out);
        lstm_entries("lstm_slack", &self.lstm_slack, &mut out);
        lstm_entries("lstm_branch", &self.lstm_branch, &mut out);
        lstm_entries("lstm_final", &self.lstm_final, &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = Vec::new();
        let mlps: [(&str, &mut Mlp<T>); 6] = [
            ("encoder", &mut self.encoder),
            ("message", &mut self.message),
            ("edge_receiver", &mut self.edge_receiver),
            ("transmitter", &mut self.transmitter),
            ("node_receiver", &mut self.node_receiver),
            ("decoder", &mut self.decoder),
        ];
        for (name, m) in mlps {
            for (i, layer) in m.layers.iter_mut().enumerate() {
                out.push((format!("{name}.{i}.w"), &mut layer.w));
                out.push((format!("{name}.{i}.b"), &mut layer.b));
            }
        }
        let cells: [(&str, &mut LstmCell<T>); 5] = [
            ("lstm_pq", &mut self.lstm_pq),
            ("lstm_pv", &mut self.lstm_pv),
            ("lstm_slack", &mut self.lstm_slack),
            ("lstm_branch", &mut self.lstm_branch),
            ("lstm_final", &mut self.lstm_final),
        ];
        for (name, c) in cells {
            out.push((format!("{name}.w"), &mut c.w));
            out.push((format!("{name}.u"), &mut c.u));
            out.push((format!("{name}.b"), &mut c.b));
        }
        out
    }

    pub fn save(&self, path: &Path, cfg: &ModelConfig) -> Result<(), AdError> {
        let config = serde_json::to_value(cfg).map_err(|e| AdError::Format(e.to_string()))?;
        let named = self.tensors();
        let entries: Vec<(String, &Tensor<T>)> =
            named.iter().map(|(n, t)| (n.clone(), *t)).collect();
        save_checkpoint(path, &config, &entries)
    }

    pub fn load(path: &Path) -> Result<(Self, ModelConfig), AdError> {
        let (config, tensors) = load_checkpoint::<T>(path)?;
        let cfg: ModelConfig =
            serde_json::from_value(config).map_err(|e| AdError::Format(e.to_string()))?;
        let mut map: std::collections::BTreeMap<String, Tensor<T>> = tensors.into_iter().collect();
        // build a skeleton with the right shapes, then fill by name
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut params = ModelParams::init(&cfg, &mut rng);
        for (name, slot) in params.tensors_mut() {
            let tensor = map.remove(&name).ok_or_else(|| {
                AdError::Format(format!("checkpoint missing tensor {name}"))
            })?;
            if tensor.shape() != slot.shape() {
                return Err(AdError::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        if let Some((name, _)) = map.into_iter().next() {
            return Err(AdError::Format(format!("checkpoint has unexpected tensor {name}")));
        }
        Ok((params, cfg))
    }
}

use rand::SeedableRng;

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let cfg = ModelConfig { d: 8, ..ModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::<f64>::init(&cfg, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        params.save(&path, &cfg).unwrap();
        let (loaded, cfg2) = ModelParams::<f64>::load(&path).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(loaded, params);
    }

    #[test]
    fn mixture_moments_match() {
        // mean of {(0.5, -0.1, 0.05), (0.5, 0.1, 0.05)} is 0 and the std is
        // sqrt(0.1^2 + 0.05^2)
        let spec = NoiseSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| spec.sample(&mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        let expect_std = (0.1f64.powi(2) + 0.05f64.powi(2)).sqrt();
        assert!(mean.abs() < 3e-3, "sample mean {mean}");
        assert!((var.sqrt() - expect_std).abs() < 0.05 * expect_std, "sample std {}", var.sqrt());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.noise.weights = vec![0.7, 0.7];
        assert!(cfg.validate().is_err());
        let bad = ModelConfig { d: 0, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parameter_count_scales_with_d() {
        let cfg = ModelConfig { d: 16, ..ModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::<f64>::init(&cfg, &mut rng);
        let total: usize = params.tensors().iter().map(|(_, t)| t.len()).sum();
        // rough structural bound: ~63 d^2 for the d-dominant blocks
        assert!(total > 50 * 16 * 16 && total < 80 * 16 * 16, "total {total}");
    }
}
