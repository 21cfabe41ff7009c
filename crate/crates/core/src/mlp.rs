//! Small dense classifier trained from scratch, no framework.
//!
//! Architecture: input -> ReLU hidden layers -> 2 softmax outputs
//! (index 0 = absent, index 1 = present), cross-entropy loss, Adam
//! updates. Everything is f64 and single-threaded, so a fixed seed gives
//! bit-identical weights on every run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correlator::{InputKind, Presence, WindowInstance};
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_TRAIN};

/// Hidden widths of the reference architecture.
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 64, 64];
/// Output classes: absent, present.
pub const NUM_CLASSES: usize = 2;
/// Model file schema version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How window features are conditioned before they reach the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide pdp features by the profile mean power, cdp features by its
    /// square root. Decisions become invariant to grid rescaling.
    ProfileMean,
    /// Feed raw window values (ablation mode).
    None,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Normalization::ProfileMean => write!(f, "profile_mean"),
            Normalization::None => write!(f, "none"),
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profile_mean" => Ok(Normalization::ProfileMean),
            "none" => Ok(Normalization::None),
            other => Err(Error::Config(format!(
                "unknown normalization '{}', valid values: profile_mean, none",
                other
            ))),
        }
    }
}

/// Applies `mode` to one window's features.
pub fn normalize_features(w: &WindowInstance, mode: Normalization) -> Result<Vec<f64>> {
    match mode {
        Normalization::None => Ok(w.features.clone()),
        Normalization::ProfileMean => {
            if !(w.profile_mean > 0.0) || !w.profile_mean.is_finite() {
                return Err(Error::Argument(format!(
                    "profile_mean must be finite and > 0 for profile_mean normalization, got {}",
                    w.profile_mean
                )));
            }
            let d = match w.input_kind {
                InputKind::Pdp => w.profile_mean,
                InputKind::Cdp => w.profile_mean.sqrt(),
            };
            Ok(w.features.iter().map(|f| f / d).collect())
        }
    }
}

/// One dense layer; weights are row-major over outputs:
/// `weights[o * in_dim + i]`, so z_o = bias_o + sum_i w[o][i] x_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            out.push(z);
        }
    }
}

/// Per-epoch training record kept in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub train_examples: usize,
    pub val_examples: usize,
    pub history: Vec<EpochStats>,
}

/// The classifier: layers plus the input contract it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_kind: InputKind,
    pub normalization: Normalization,
    pub layers: Vec<DenseLayer>,
    pub train_meta: TrainMeta,
}

impl MlpModel {
    /// Fan-in scaled uniform init, U(-1/sqrt(in), 1/sqrt(in)), biases zero.
    /// Draw order: layers front to back, weights row-major, then nothing
    /// for biases.
    pub fn new_random(input_kind: InputKind, input_dim: usize, hidden: &[usize], seed: u64, normalization: Normalization) -> Self {
        let mut rng = substream(seed, STREAM_TRAIN | 1);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(NUM_CLASSES);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (i, o) = (d[0], d[1]);
                let bound = 1.0 / (i as f64).sqrt();
                let weights = (0..i * o).map(|_| rng.gen_range(-bound..bound)).collect();
                DenseLayer {
                    in_dim: i,
                    out_dim: o,
                    weights,
                    bias: vec![0.0; o],
                }
            })
            .collect();
        MlpModel {
            input_kind,
            normalization,
            layers,
            train_meta: TrainMeta::default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }
}

/// Numerically stable softmax over `z` in place.
fn softmax(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Post-activation values of every layer for one input; `acts[0]` is the
/// input itself, the last entry holds the softmax probabilities.
fn forward_trace(m: &MlpModel, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(m.layers.len() + 1);
    acts.push(x.to_vec());
    let mut buf = Vec::new();
    for (li, layer) in m.layers.iter().enumerate() {
        layer.apply(acts.last().unwrap(), &mut buf);
        if li + 1 < m.layers.len() {
            for v in buf.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        } else {
            softmax(&mut buf);
        }
        acts.push(buf.clone());
    }
    acts
}

/// Class probabilities (absent, present) for already-normalized features.
pub fn forward(m: &MlpModel, x: &[f64]) -> Result<[f64; 2]> {
    if x.len() != m.input_dim() {
        return Err(Error::Argument(format!(
            "input length {} does not match model input dim {}",
            x.len(),
            m.input_dim()
        )));
    }
    let acts = forward_trace(m, x);
    let p = acts.last().unwrap();
    Ok([p[0], p[1]])
}

fn cross_entropy(p: &[f64], target: usize) -> f64 {
    -p[target].max(1e-300).ln()
}

/// Gradient buffers shaped like the model.
struct Grads {
    layers: Vec<DenseLayer>,
}

impl Grads {
    fn zeros_like(m: &MlpModel) -> Self {
        Grads {
            layers: m.layers.iter().map(|l| DenseLayer::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

/// Accumulates dLoss/dParams for one sample into `g`; returns the loss.
fn backward_accumulate(m: &MlpModel, x: &[f64], target: usize, g: &mut Grads) -> f64 {
    let acts = forward_trace(m, x);
    let probs = acts.last().unwrap();
    let loss = cross_entropy(probs, target);

    // softmax + cross-entropy: dL/dz = p - onehot
    let mut delta: Vec<f64> = probs.clone();
    delta[target] -= 1.0;

    for li in (0..m.layers.len()).rev() {
        let layer = &m.layers[li];
        let input = &acts[li];
        let gl = &mut g.layers[li];
        for o in 0..layer.out_dim {
            gl.bias[o] += delta[o];
            let row = &mut gl.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (slot, xi) in row.iter_mut().zip(input) {
                *slot += delta[o] * xi;
            }
        }
        if li > 0 {
            let mut prev = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += delta[o] * w;
                }
            }
            // ReLU gate: post-activation > 0 iff pre-activation > 0
            for (p, a) in prev.iter_mut().zip(&acts[li]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Training hyperparameters. Defaults follow the reference recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Epochs without improvement before the learning rate halves.
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub validation_fraction: f64,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            plateau_patience: 3,
            min_lr: 1e-6,
            validation_fraction: 0.15,
            normalization: Normalization::ProfileMean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be nonzero".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be > 0".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

fn mean_loss(m: &MlpModel, xs: &[Vec<f64>], ys: &[usize], idx: &[usize]) -> f64 {
    let total: f64 = idx
        .iter()
        .map(|&i| cross_entropy(forward_trace(m, &xs[i]).last().unwrap(), ys[i]))
        .sum();
    total / idx.len() as f64
}

/// Trains a classifier on labeled windows. Requires consistent input kind
/// and both classes present; returns the weights of the best-validation
/// epoch. Deterministic for a fixed config.
pub fn train(data: &[WindowInstance], cfg: &TrainConfig) -> Result<MlpModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let kind = data[0].input_kind;
    let dim = data[0].features.len();
    let mut xs = Vec::with_capacity(data.len());
    let mut ys = Vec::with_capacity(data.len());
    for (i, w) in data.iter().enumerate() {
        if w.input_kind != kind || w.features.len() != dim {
            return Err(Error::Training(format!(
                "instance {} has kind {} / {} features, expected {} / {}",
                i,
                w.input_kind,
                w.features.len(),
                kind,
                dim
            )));
        }
        let label = w.label.ok_or_else(|| {
            Error::Training(format!("instance {} is unlabeled; training needs labels", i))
        })?;
        if w.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::Training(format!("instance {} has non-finite features", i)));
        }
        xs.push(normalize_features(w, cfg.normalization)?);
        ys.push(match label {
            Presence::Absent => 0,
            Presence::Present => 1,
        });
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(Error::Training("training data contains a single class".into()));
    }

    // validation split: seeded shuffle, head goes to validation
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut split_rng = substream(cfg.seed, STREAM_TRAIN | 2);
    shuffle(&mut order, &mut split_rng);
    let val_n = ((xs.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, xs.len() - 1);
    let val_idx: Vec<usize> = order[..val_n].to_vec();
    let mut train_idx: Vec<usize> = order[val_n..].to_vec();
    if train_idx.iter().map(|&i| ys[i]).all(|y| y == ys[train_idx[0]]) {
        return Err(Error::Training("training split contains a single class".into()));
    }

    let mut model = MlpModel::new_random(kind, dim, &cfg.hidden, cfg.seed, cfg.normalization);
    let mut grads = Grads::zeros_like(&model);
    let mut adam_m = Grads::zeros_like(&model);
    let mut adam_v = Grads::zeros_like(&model);
    let mut step = 0u64;
    let mut lr = cfg.learning_rate;

    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_weights = model.layers.clone();
    let mut bad_epochs = 0usize;
    let mut history = Vec::new();
    let mut shuffle_rng = substream(cfg.seed, STREAM_TRAIN | 3);

    let mut epochs_run = 0;
    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        shuffle(&mut train_idx, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            grads.clear();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += backward_accumulate(&model, &xs[i], ys[i], &mut grads);
            }
            loss_sum += batch_loss;
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {}, learning rate {}",
                    epoch, lr
                )));
            }
            step += 1;
            adam_update(&mut model, &grads, &mut adam_m, &mut adam_v, step, lr, cfg, batch.len());
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_loss = mean_loss(&model, &xs, &ys, &val_idx);
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {}", epoch)));
        }
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_weights = model.layers.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs % cfg.plateau_patience == 0 {
                lr = (lr / 2.0).max(cfg.min_lr);
            }
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }

    model.layers = best_weights;
    let final_train_loss = mean_loss(&model, &xs, &ys, &train_idx);
    model.train_meta = TrainMeta {
        seed: cfg.seed,
        epochs_run,
        best_epoch,
        final_train_loss,
        final_val_loss: best_val,
        train_examples: train_idx.len(),
        val_examples: val_idx.len(),
        history,
    };
    Ok(model)
}

/// Fisher-Yates with the crate RNG.
fn shuffle(idx: &mut [usize], rng: &mut rand_chacha::ChaCha8Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    model: &mut MlpModel,
    grads: &Grads,
    m1: &mut Grads,
    m2: &mut Grads,
    step: u64,
    lr: f64,
    cfg: &TrainConfig,
    batch_len: usize,
) {
    let b1c = 1.0 - cfg.beta1.powi(step as i32);
    let b2c = 1.0 - cfg.beta2.powi(step as i32);
    let scale = 1.0 / batch_len as f64;
    for (li, layer) in model.layers.iter_mut().enumerate() {
        let g = &grads.layers[li];
        let m = &mut m1.layers[li];
        let v = &mut m2.layers[li];
        for (idx, w) in layer.weights.iter_mut().enumerate() {
            let gi = g.weights[idx] * scale;
            m.weights[idx] = cfg.beta1 * m.weights[idx] + (1.0 - cfg.beta1) * gi;
            v.weights[idx] = cfg.beta2 * v.weights[idx] + (1.0 - cfg.beta2) * gi * gi;
            *w -= lr * (m.weights[idx] / b1c) / ((v.weights[idx] / b2c).sqrt() + cfg.epsilon);
        }
        for (idx, b) in layer.bias.iter_mut().enumerate() {
            let gi = g.bias[idx] * scale;
            m.bias[idx] = cfg.beta1 * m.bias[idx] + (1.0 - cfg.beta1) * gi;
            v.bias[idx] = cfg.beta2 * v.bias[idx] + (1.0 - cfg.beta2) * gi * gi;
            *b -= lr * (m.bias[idx] / b1c) / ((v.bias[idx] / b2c).sqrt() + cfg.epsilon);
        }
    }
}

/// Compares the analytic gradient with central finite differences over
/// every parameter; returns the maximum relative error. The denominator is
/// floored so parameters on dead paths (true gradient zero) do not blow up
/// the ratio.
pub fn gradient_check(m: &MlpModel, x: &[f64], target: usize, h: f64) -> Result<f64> {
    if x.len() != m.input_dim() {
        return Err(Error::Argument("input length mismatch".into()));
    }
    if target >= NUM_CLASSES {
        return Err(Error::Argument(format!("target {} out of range", target)));
    }
    if !(h > 0.0) {
        return Err(Error::Argument("step h must be > 0".into()));
    }
    let mut grads = Grads::zeros_like(m);
    backward_accumulate(m, x, target, &mut grads);

    let mut worst: f64 = 0.0;
    let mut probe = m.clone();
    for li in 0..m.layers.len() {
        let n_w = m.layers[li].weights.len();
        let n_b = m.layers[li].bias.len();
        for idx in 0..n_w + n_b {
            let orig = if idx < n_w {
                m.layers[li].weights[idx]
            } else {
                m.layers[li].bias[idx - n_w]
            };
            let slot = |probe: &mut MlpModel, val: f64| {
                if idx < n_w {
                    probe.layers[li].weights[idx] = val;
                } else {
                    probe.layers[li].bias[idx - n_w] = val;
                }
            };
            slot(&mut probe, orig + h);
            let up = cross_entropy(forward_trace(&probe, x).last().unwrap(), target);
            slot(&mut probe, orig - h);
            let down = cross_entropy(forward_trace(&probe, x).last().unwrap(), target);
            slot(&mut probe, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = if idx < n_w {
                grads.layers[li].weights[idx]
            } else {
                grads.layers[li].bias[idx - n_w]
            };
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Multiply-add FLOP count of one forward pass: 2 * in * out per dense
/// layer, the convention the architecture is quoted in. Activations are
/// accounted separately in `flops_breakdown`.
pub fn count_flops(m: &MlpModel) -> u64 {
    m.layers.iter().map(|l| 2 * (l.in_dim * l.out_dim) as u64).sum()
}

/// FLOP accounting constants for the non-MAC work, per unit.
pub const RELU_FLOPS_PER_UNIT: u64 = 1;
pub const SOFTMAX_FLOPS_PER_OUTPUT: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub dense_mac: u64,
    pub bias_add: u64,
    pub activations: u64,
    pub total: u64,
}

/// Full per-inference cost including bias adds and activations.
pub fn flops_breakdown(m: &MlpModel) -> FlopsBreakdown {
    let dense_mac = count_flops(m);
    let bias_add: u64 = m.layers.iter().map(|l| l.out_dim as u64).sum();
    let hidden_units: u64 = m.layers[..m.layers.len() - 1].iter().map(|l| l.out_dim as u64).sum();
    let activations = hidden_units * RELU_FLOPS_PER_UNIT
        + m.layers.last().unwrap().out_dim as u64 * SOFTMAX_FLOPS_PER_OUTPUT;
    FlopsBreakdown {
        dense_mac,
        bias_add,
        activations,
        total: dense_mac + bias_add + activations,
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    input_kind: InputKind,
    normalization: Normalization,
    layers: Vec<DenseLayer>,
    train_meta: TrainMeta,
}

/// Writes the model as a self-describing JSON document. f64 values use
/// shortest round-trip encoding, so save/load is numerically exact.
pub fn save_model(m: &MlpModel, path: &std::path::Path) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        input_kind: m.input_kind,
        normalization: m.normalization,
        layers: m.layers.clone(),
        train_meta: m.train_meta.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::ModelFormat(format!("serialize: {}", e)))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<MlpModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::ModelFormat(format!("{}: {}", path.display(), e)))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "{}: format version {} not supported (expected {})",
            path.display(),
            file.format_version,
            MODEL_FORMAT_VERSION
        )));
    }
    for (li, l) in file.layers.iter().enumerate() {
        if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
            return Err(Error::ModelFormat(format!(
                "{}: layer {} shape mismatch",
                path.display(),
                li
            )));
        }
    }
    Ok(MlpModel {
        input_kind: file.input_kind,
        normalization: file.normalization,
        layers: file.layers,
        train_meta: file.train_meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelModel;

    fn toy_instance(label: Presence, seed_val: f64, kind: InputKind) -> WindowInstance {
        // present: ramp peaking at the right edge; absent: flat-ish floor
        let n = 13;
        let features: Vec<f64> = match kind {
            InputKind::Pdp => (0..n)
                .map(|j| match label {
                    Presence::Present => 1.0 + if j == 10 { 8.0 + seed_val } else { seed_val * (j as f64 / 13.0) },
                    Presence::Absent => 1.0 + seed_val * ((j * 7 % 5) as f64 / 5.0),
                })
                .collect(),
            InputKind::Cdp => unreachable!("toy data is pdp"),
        };
        WindowInstance {
            snr_db: 0.0,
            channel: ChannelModel::Awgn,
            num_rx: 1,
            input_kind: kind,
            base_index: 0,
            window_index: 0,
            rapid: Some(0),
            label: Some(label),
            true_delay_samples: None,
            features,
            profile_mean: 1.0,
        }
    }

    fn toy_set(n: usize) -> Vec<WindowInstance> {
        (0..n)
            .map(|i| {
                let v = (i % 17) as f64 / 17.0;
                if i % 2 == 0 {
                    toy_instance(Presence::Present, v, InputKind::Pdp)
                } else {
                    toy_instance(Presence::Absent, v, InputKind::Pdp)
                }
            })
            .collect()
    }

    #[test]
    fn reference_architecture_flop_counts() {
        let pdp = MlpModel::new_random(InputKind::Pdp, 13, &DEFAULT_HIDDEN, 0, Normalization::ProfileMean);
        assert_eq!(count_flops(&pdp), 28_160);
        let cdp = MlpModel::new_random(InputKind::Cdp, 26, &DEFAULT_HIDDEN, 0, Normalization::ProfileMean);
        assert_eq!(count_flops(&cdp), 31_488);
        let bd = flops_breakdown(&pdp);
        assert_eq!(bd.dense_mac, 28_160);
        assert_eq!(bd.bias_add, 128 + 64 + 64 + 2);
        assert_eq!(bd.activations, 256 * RELU_FLOPS_PER_UNIT + 2 * SOFTMAX_FLOPS_PER_OUTPUT);
        assert_eq!(bd.total, bd.dense_mac + bd.bias_add + bd.activations);
    }

    #[test]
    fn forward_outputs_probabilities() {
        let m = MlpModel::new_random(InputKind::Pdp, 13, &[16, 8], 3, Normalization::None);
        let x: Vec<f64> = (0..13).map(|i| i as f64 / 13.0).collect();
        let p = forward(&m, &x).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!(p[0] >= 0.0 && p[1] >= 0.0);
        assert!(forward(&m, &x[..5]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MlpModel::new_random(InputKind::Pdp, 13, &[16, 8], 5, Normalization::None);
        let mut rng = substream(9, 0);
        let x: Vec<f64> = (0..13).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = gradient_check(&m, &x, 1, 1e-5).unwrap();
        assert!(err < 1e-4, "max rel error {}", err);
    }

    #[test]
    fn gradient_check_tight_away_from_relu_kinks() {
        // positive inputs and biases push every pre-activation well past 0
        let mut m = MlpModel::new_random(InputKind::Pdp, 13, &[16, 8], 6, Normalization::None);
        for l in &mut m.layers {
            for b in &mut l.bias {
                *b = 1.0;
            }
        }
        let x: Vec<f64> = (0..13).map(|i| 0.5 + i as f64 / 26.0).collect();
        let err = gradient_check(&m, &x, 0, 1e-5).unwrap();
        assert!(err < 1e-6, "max rel error {}", err);
    }

    #[test]
    fn gradient_check_zero_model_degenerate_but_finite() {
        let mut m = MlpModel::new_random(InputKind::Pdp, 13, &[8], 7, Normalization::None);
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let x = vec![0.0; 13];
        let err = gradient_check(&m, &x, 1, 1e-5).unwrap();
        assert!(err.is_finite());
        // analytic output-bias gradient is p - y = (0.5, -0.5); verify directly
        let mut g = Grads::zeros_like(&m);
        backward_accumulate(&m, &x, 1, &mut g);
        let out = g.layers.last().unwrap();
        assert!((out.bias[0] - 0.5).abs() < 1e-12);
        assert!((out.bias[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn trains_separable_toy_problem() {
        let data = toy_set(400);
        let cfg = TrainConfig {
            hidden: vec![16, 8],
            max_epochs: 60,
            batch_size: 32,
            seed: 1,
            normalization: Normalization::None,
            ..Default::default()
        };
        let m = train(&data, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|w| {
                let p = forward(&m, &normalize_features(w, Normalization::None).unwrap()).unwrap();
                let decided = if p[1] >= 0.5 { Presence::Present } else { Presence::Absent };
                decided == w.label.unwrap()
            })
            .count();
        let acc = correct as f64 / data.len() as f64;
        assert!(acc >= 0.95, "toy accuracy {}", acc);
        // loss came down substantially from the first epoch
        let h = &m.train_meta.history;
        assert!(h.last().unwrap().train_loss < 0.5 * h[0].train_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_set(200);
        let cfg = TrainConfig {
            hidden: vec![8],
            max_epochs: 10,
            batch_size: 32,
            seed: 42,
            normalization: Normalization::None,
            ..Default::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_single_class_and_unlabeled() {
        let mut data = toy_set(50);
        let cfg = TrainConfig {
            hidden: vec![8],
            max_epochs: 2,
            ..Default::default()
        };
        for w in &mut data {
            w.label = Some(Presence::Present);
        }
        assert!(matches!(train(&data, &cfg), Err(Error::Training(_))));
        data[0].label = None;
        assert!(matches!(train(&data, &cfg), Err(Error::Training(_))));
    }

    #[test]
    fn non_finite_features_fail_with_diagnostics() {
        let mut data = toy_set(64);
        data[10].features[3] = f64::NAN;
        let cfg = TrainConfig {
            hidden: vec![8],
            max_epochs: 3,
            batch_size: 16,
            normalization: Normalization::None,
            ..Default::default()
        };
        match train(&data, &cfg) {
            Err(Error::Training(msg)) => assert!(msg.contains("instance 10"), "message: {}", msg),
            other => panic!("expected training error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let data = toy_set(120);
        let cfg = TrainConfig {
            hidden: vec![8, 4],
            max_epochs: 5,
            batch_size: 32,
            seed: 9,
            normalization: Normalization::ProfileMean,
            ..Default::default()
        };
        let m = train(&data, &cfg).unwrap();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn load_rejects_truncated_and_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = MlpModel::new_random(InputKind::Pdp, 13, &[4], 0, Normalization::None);
        save_model(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, bumped).unwrap();
        match load_model(&path) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("version"), "{}", msg),
            other => panic!("expected format error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn normalization_modes() {
        let w = WindowInstance {
            snr_db: 0.0,
            channel: ChannelModel::Awgn,
            num_rx: 1,
            input_kind: InputKind::Pdp,
            base_index: 0,
            window_index: 0,
            rapid: Some(0),
            label: None,
            true_delay_samples: None,
            features: vec![2.0; 13],
            profile_mean: 4.0,
        };
        assert_eq!(normalize_features(&w, Normalization::None).unwrap(), vec![2.0; 13]);
        assert_eq!(normalize_features(&w, Normalization::ProfileMean).unwrap(), vec![0.5; 13]);
        let mut cdp = w.clone();
        cdp.input_kind = InputKind::Cdp;
        cdp.features = vec![2.0; 26];
        // cdp features are amplitudes: divide by sqrt(mean power)
        assert_eq!(normalize_features(&cdp, Normalization::ProfileMean).unwrap(), vec![1.0; 26]);
        let mut broken = w;
        broken.profile_mean = 0.0;
        assert!(normalize_features(&broken, Normalization::ProfileMean).is_err());
    }
}
