//! Two-layer detector head trained with binary cross-entropy and Adam.
//!
//! `p = sigmoid(w2 . relu(w1 x + b1) + b2)`, with `p` the attack probability.

use std::path::Path;

use thiserror::Error;

use crate::dataset::{split_holdout, DatasetError, DatasetManifest, Label, Split};
use crate::features::{Descriptor, FeatureSet, FLIP_SUFFIX};
use crate::kvconfig::{ConfigError, KeyValues};
use crate::rng::SplitMix64;

pub const MODEL_MAGIC: &[u8; 4] = b"MKMD";
pub const MODEL_VERSION: u32 = 1;
/// Probabilities are clamped to `[EPS_P, 1 - EPS_P]` inside the loss.
pub const EPS_P: f64 = 1e-7;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no feature row for `{0}`")]
    MissingFeatures(String),
    #[error("training split holds a single class")]
    SingleClassTrainingSet,
    #[error("input has {got} values, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("config: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    KeyValue(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden_dim: usize,
    pub holdout_fraction: f64,
    pub augment_flip: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 30,
            batch_size: 16,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden_dim: 64,
            holdout_fraction: 0.1,
            augment_flip: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "learning_rate",
        "epochs",
        "batch_size",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "hidden_dim",
        "holdout_fraction",
        "augment_flip",
        "seed",
    ];

    /// Reads the known keys, falling back to defaults; other keys are ignored.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, TrainError> {
        let d = Self::default();
        let cfg = Self {
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            epochs: kv.parse_or("epochs", d.epochs)?,
            batch_size: kv.parse_or("batch_size", d.batch_size)?,
            adam_beta1: kv.parse_or("adam_beta1", d.adam_beta1)?,
            adam_beta2: kv.parse_or("adam_beta2", d.adam_beta2)?,
            adam_eps: kv.parse_or("adam_eps", d.adam_eps)?,
            hidden_dim: kv.parse_or("hidden_dim", d.hidden_dim)?,
            holdout_fraction: kv.parse_or("holdout_fraction", d.holdout_fraction)?,
            augment_flip: kv.bool_or("augment_flip", d.augment_flip)?,
            seed: kv.parse_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout_fraction must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }

    /// `(key, value)` pairs in a fixed order, for logs and hashing.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("holdout_fraction", self.holdout_fraction.to_string()),
            ("augment_flip", self.augment_flip.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Classifier parameters plus what they were trained on.
///
/// Parameters are stored flat: `w1` (row-major, `hidden x input`), `b1`,
/// `w2`, then `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    input_dim: usize,
    hidden_dim: usize,
    params: Vec<f64>,
    pub descriptor_id: String,
    pub best_epoch: u32,
    pub holdout_accuracy: f64,
    pub seed: u64,
}

pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
    hidden_dim * input_dim + 2 * hidden_dim + 1
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DetectorModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, descriptor_id: &str) -> Self {
        Self {
            input_dim,
            hidden_dim,
            params: vec![0.0; param_count(input_dim, hidden_dim)],
            descriptor_id: descriptor_id.to_string(),
            best_epoch: 0,
            holdout_accuracy: 0.0,
            seed: 0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, descriptor_id: &str, rng: &mut SplitMix64) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim, descriptor_id);
        let a1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for w in m.w1_mut() {
            *w = rng.uniform(-a1, a1);
        }
        let a2 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let off = hidden_dim * input_dim + hidden_dim;
        for w in &mut m.params[off..off + hidden_dim] {
            *w = rng.uniform(-a2, a2);
        }
        m
    }

    pub fn from_params(input_dim: usize, hidden_dim: usize, params: Vec<f64>, descriptor_id: &str) -> Result<Self, TrainError> {
        let n = param_count(input_dim, hidden_dim);
        if params.len() != n {
            return Err(TrainError::ShapeMismatch(params.len(), n));
        }
        let mut m = Self::zeros(input_dim, hidden_dim, descriptor_id);
        m.params = params;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.hidden_dim * self.input_dim]
    }

    fn w1_mut(&mut self) -> &mut [f64] {
        let n = self.hidden_dim * self.input_dim;
        &mut self.params[..n]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.hidden_dim * self.input_dim;
        &self.params[o..o + self.hidden_dim]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.hidden_dim * self.input_dim + self.hidden_dim;
        &self.params[o..o + self.hidden_dim]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    fn hidden_pre(&self, x: &[f64], z: &mut [f64]) {
        let (w1, b1) = (self.w1(), self.b1());
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &w1[j * self.input_dim..(j + 1) * self.input_dim];
            *zj = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn logit(&self, x: &[f64], z: &mut [f64]) -> f64 {
        self.hidden_pre(x, z);
        self.b2() + self.w2().iter().zip(z.iter()).map(|(w, &zj)| w * zj.max(0.0)).sum::<f64>()
    }

    /// Attack probability for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<f64, TrainError> {
        if x.len() != self.input_dim {
            return Err(TrainError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut z = vec![0.0; self.hidden_dim];
        Ok(sigmoid(self.logit(x, &mut z)))
    }

    /// Hidden pre-activations, exposed for gradient checks near the ReLU kink.
    pub fn hidden_preactivations(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.hidden_dim];
        self.hidden_pre(x, &mut z);
        z
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.descriptor_id.len() + 8 * self.params.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.descriptor_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.descriptor_id.as_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&self.best_epoch.to_le_bytes());
        out.extend_from_slice(&self.holdout_accuracy.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MODEL_MAGIC {
            return Err(TrainError::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != MODEL_VERSION {
            return Err(TrainError::Format(format!("unsupported version {version}")));
        }
        let len = cur.u32()? as usize;
        let descriptor_id = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| TrainError::Format("descriptor is not utf-8".into()))?
            .to_string();
        let input_dim = cur.u32()? as usize;
        let hidden_dim = cur.u32()? as usize;
        let n = param_count(input_dim, hidden_dim);
        let params = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
        let best_epoch = cur.u32()?;
        let holdout_accuracy = cur.f64()?;
        let seed = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
        if cur.pos != bytes.len() {
            return Err(TrainError::Format("trailing bytes".into()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::Format("non-finite parameter".into()));
        }
        Ok(Self { input_dim, hidden_dim, params, descriptor_id, best_epoch, holdout_accuracy, seed })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| TrainError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TrainError::Format("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, TrainError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Binary cross-entropy of a probability against a 0/1 target, and its
/// derivative with respect to `p`, both on the clamped probability.
pub fn bce_loss(p: f64, y: f64) -> (f64, f64) {
    let p = p.clamp(EPS_P, 1.0 - EPS_P);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    (loss, (p - y) / (p * (1.0 - p)))
}

/// Mean BCE over a batch and its gradient with respect to every parameter
/// (same layout as [`DetectorModel::params`]). Samples are reduced in order.
pub fn batch_loss_and_grad(model: &DetectorModel, xs: &[&[f64]], ys: &[f64]) -> Result<(f64, Vec<f64>), TrainError> {
    if xs.len() != ys.len() {
        return Err(TrainError::ShapeMismatch(xs.len(), ys.len()));
    }
    let (d, h) = (model.input_dim, model.hidden_dim);
    let mut grad = vec![0.0; model.params.len()];
    let mut z = vec![0.0; h];
    let mut total = 0.0;
    let scale = 1.0 / xs.len().max(1) as f64;
    let (o_b1, o_w2) = (h * d, h * d + h);
    let o_b2 = o_w2 + h;
    let w2 = model.w2();
    for (x, &y) in xs.iter().zip(ys) {
        if x.len() != d {
            return Err(TrainError::DimensionMismatch { expected: d, got: x.len() });
        }
        let p = sigmoid(model.logit(x, &mut z));
        total += bce_loss(p, y).0;
        // d loss / d logit for sigmoid + BCE.
        let dz = (p - y) * scale;
        grad[o_b2] += dz;
        for j in 0..h {
            if z[j] <= 0.0 {
                continue;
            }
            grad[o_w2 + j] += dz * z[j];
            let dh = dz * w2[j];
            grad[o_b1 + j] += dh;
            for (g, v) in grad[j * d..(j + 1) * d].iter_mut().zip(x.iter()) {
                *g += dh * v;
            }
        }
    }
    Ok((total * scale, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &TrainConfig) -> Result<(), TrainError> {
    if params.len() != grads.len() {
        return Err(TrainError::ShapeMismatch(params.len(), grads.len()));
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(TrainError::ShapeMismatch(params.len(), state.m.len()));
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// `key=value` lines written ahead of the CSV header.
    pub header: Vec<(String, String)>,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str("epoch,train_loss,holdout_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.holdout_accuracy));
        }
        out
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn row_f64(features: &FeatureSet, id: &str) -> Result<Vec<f64>, TrainError> {
    features
        .get(id)
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .ok_or_else(|| TrainError::MissingFeatures(id.to_string()))
}

fn accuracy(model: &DetectorModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let mut z = vec![0.0; model.hidden_dim];
    let correct = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| (sigmoid(model.logit(x, &mut z)) >= 0.5) == (y == 1.0))
        .count();
    correct as f64 / xs.len() as f64
}

/// Train on the manifest's `Train` records and select the epoch with the best
/// `Holdout` accuracy.
///
/// When the manifest has no `Holdout` records, the `Train` records are split
/// with `config.holdout_fraction` and `config.seed`. If `descriptor_id` parses
/// as a feature descriptor, its dimension must match the feature file.
pub fn train(
    features: &FeatureSet,
    manifest: &DatasetManifest,
    descriptor_id: &str,
    config: &TrainConfig,
) -> Result<(DetectorModel, TrainLog), TrainError> {
    config.validate()?;
    let dim = features.dim();
    if let Ok(d) = Descriptor::parse(descriptor_id) {
        if d.dim() != dim {
            return Err(TrainError::DimensionMismatch { expected: d.dim(), got: dim });
        }
    }

    let split_manifest;
    let manifest = if manifest.in_split(Split::Holdout).next().is_none() {
        let train: Vec<_> = manifest.in_split(Split::Train).cloned().collect();
        let sub = DatasetManifest::new(&manifest.name, train, Split::Train)?;
        split_manifest = split_holdout(&sub, config.holdout_fraction, config.seed)?;
        &split_manifest
    } else {
        manifest
    };

    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut classes = [false; 2];
    for r in manifest.in_split(Split::Train) {
        let y = r.label.target();
        classes[(r.label == Label::Attack) as usize] = true;
        train_x.push(row_f64(features, &r.sample_id)?);
        train_y.push(y);
        if config.augment_flip {
            train_x.push(row_f64(features, &format!("{}{FLIP_SUFFIX}", r.sample_id))?);
            train_y.push(y);
        }
    }
    if !(classes[0] && classes[1]) {
        return Err(TrainError::SingleClassTrainingSet);
    }
    let mut hold_x = Vec::new();
    let mut hold_y = Vec::new();
    for r in manifest.in_split(Split::Holdout) {
        hold_x.push(row_f64(features, &r.sample_id)?);
        hold_y.push(r.label.target());
    }

    let mut init_rng = SplitMix64::derive(config.seed, STREAM_INIT);
    let mut shuffle_rng = SplitMix64::derive(config.seed, STREAM_SHUFFLE);
    let mut model = DetectorModel::init(dim, config.hidden_dim, descriptor_id, &mut init_rng);
    model.seed = config.seed;
    let mut adam = AdamState::new(model.params.len());

    let mut log = TrainLog::default();
    for (k, v) in config.entries() {
        log.header.push((k.to_string(), v));
    }
    log.header.push(("descriptor".into(), descriptor_id.to_string()));
    log.header.push(("train_rows".into(), train_x.len().to_string()));
    log.header.push(("holdout_rows".into(), hold_x.len().to_string()));

    let mut best: Option<(DetectorModel, u32, f64)> = None;
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=config.epochs as u32 {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_x[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&model, &xs, &ys)?;
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut model.params, &grad, &mut adam, config)?;
        }
        let train_loss = loss_sum / train_x.len() as f64;
        let acc = accuracy(&model, &hold_x, &hold_y);
        log.epochs.push(EpochLog { epoch, train_loss, holdout_accuracy: acc });
        if best.as_ref().is_none_or(|(_, _, a)| acc > *a) {
            best = Some((model.clone(), epoch, acc));
        }
    }
    let (mut chosen, epoch, acc) = best.expect("at least one epoch");
    chosen.best_epoch = epoch;
    chosen.holdout_accuracy = acc;
    log.header.push(("best_epoch".into(), epoch.to_string()));
    Ok((chosen, log))
}
