//! Domain-adversarial classifier: a small feature extractor shared by a
//! class head and a domain head, the latter fed through a gradient
//! reversal layer whose strength follows a per-epoch schedule.
//!
//! Layout: flatten(HxW) -> linear -> ReLU -> linear -> ReLU -> dropout
//! gives the features; the class head is a linear map to C logits, the
//! domain head a linear map to one logit behind the reversal layer.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TensorId};
use crate::dataset::{DomainBatch, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, ChaCha8Rng};

pub const DEFAULT_HIDDEN_DIM: usize = 256;
pub const DEFAULT_FEATURE_DIM: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Strength of the reversed gradient as a function of training progress
/// `p` in `[0,1]`; out-of-range `p` is clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    Logistic {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    LinearInc,
    LinearDec,
    ParabolicInc,
    ParabolicDec,
    Constant {
        #[serde(default = "default_constant")]
        value: f64,
    },
}

fn default_gamma() -> f64 {
    10.0
}

fn default_constant() -> f64 {
    1.0
}

impl LambdaSchedule {
    pub fn logistic() -> Self {
        Self::Logistic { gamma: default_gamma() }
    }

    pub fn constant() -> Self {
        Self::Constant { value: default_constant() }
    }

    /// All six variants with default parameters, in a stable order.
    pub fn all() -> [LambdaSchedule; 6] {
        [
            Self::logistic(),
            Self::LinearInc,
            Self::LinearDec,
            Self::ParabolicInc,
            Self::ParabolicDec,
            Self::constant(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Logistic { .. } => "logistic",
            Self::LinearInc => "linear_inc",
            Self::LinearDec => "linear_dec",
            Self::ParabolicInc => "parabolic_inc",
            Self::ParabolicDec => "parabolic_dec",
            Self::Constant { .. } => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Logistic { gamma } if gamma <= 0.0 => Err(Error::InvalidSpec(format!(
                "logistic gamma must be positive, got {gamma}"
            ))),
            Self::Constant { value } if !(0.0..=1.0).contains(&value) => Err(Error::InvalidSpec(
                format!("constant lambda must be in [0,1], got {value}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn value(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            Self::Logistic { gamma } => 2.0 / (1.0 + (-gamma * p).exp()) - 1.0,
            Self::LinearInc => p,
            Self::LinearDec => 1.0 - p,
            Self::ParabolicInc => p * p,
            Self::ParabolicDec => (1.0 - p) * (1.0 - p),
            Self::Constant { value } => value,
        }
    }
}

/// Fraction of training elapsed at a given epoch: both endpoints are
/// attained; a single-epoch run sits at 0.
pub fn training_progress(epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        0.0
    } else {
        epoch as f64 / (epochs - 1) as f64
    }
}

/// How per-instance losses are reduced to the scalar objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LambdaSchedule,
    pub dann_enabled: bool,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.1,
            epochs: 50,
            weight_decay: 1e-4,
            batch_size: 64,
            seed: 0,
            schedule: LambdaSchedule::logistic(),
            dann_enabled: false,
            reduction: Reduction::Sum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "learning rate must be positive, got {}",
                self.lr0
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidSpec("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch size must be positive".into()));
        }
        self.schedule.validate()
    }

    /// Linearly decayed learning rate for a 0-based epoch index.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * (1.0 - epoch as f64 / self.epochs as f64)
    }
}

/// Dense layer parameters, weights row-major `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    /// Weights uniform in +/- sqrt(6/fan_in); biases zero.
    fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }
}

/// The full model: feature extractor, class head, domain head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DannModel {
    pub input_dim: usize,
    pub num_classes: usize,
    pub dropout_p: f64,
    pub hidden: LinearLayer,
    pub feature: LinearLayer,
    pub class_head: LinearLayer,
    pub domain_head: LinearLayer,
}

/// Number of parameter arrays in [`DannModel::params`] order.
pub const PARAM_ARRAYS: usize = 8;

impl DannModel {
    /// Initialization draws weights layer by layer (hidden, feature, class
    /// head, domain head) from the given generator.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        feature_dim: usize,
        num_classes: usize,
        dropout_p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || feature_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidSpec("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidSpec(format!("dropout probability {dropout_p}")));
        }
        Ok(Self {
            input_dim,
            num_classes,
            dropout_p,
            hidden: LinearLayer::init(input_dim, hidden_dim, rng),
            feature: LinearLayer::init(hidden_dim, feature_dim, rng),
            class_head: LinearLayer::init(feature_dim, num_classes, rng),
            domain_head: LinearLayer::init(feature_dim, 1, rng),
        })
    }

    /// Default widths for 28x28 inputs.
    pub fn with_default_dims(num_classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::new(
            28 * 28,
            DEFAULT_HIDDEN_DIM,
            DEFAULT_FEATURE_DIM,
            num_classes,
            DEFAULT_DROPOUT,
            rng,
        )
    }

    pub(crate) fn layers_mut(&mut self) -> [&mut LinearLayer; 4] {
        [
            &mut self.hidden,
            &mut self.feature,
            &mut self.class_head,
            &mut self.domain_head,
        ]
    }

    /// Stable flattened parameter order: per layer, weights then bias.
    pub fn params(&self) -> Vec<&[f64]> {
        [&self.hidden, &self.feature, &self.class_head, &self.domain_head]
            .into_iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// One SGD step with linearly decayed learning rate and weight decay on
    /// weights only (biases exempt).
    pub fn sgd_step(&mut self, grads: &ParamGrads, epoch: usize, cfg: &TrainConfig) -> Result<()> {
        if grads.arrays.len() != PARAM_ARRAYS {
            return Err(Error::TensorShape(format!(
                "{} gradient arrays for {PARAM_ARRAYS} parameters",
                grads.arrays.len()
            )));
        }
        let lr = cfg.learning_rate(epoch);
        let wd = cfg.weight_decay;
        for (layer_idx, layer) in self.layers_mut().into_iter().enumerate() {
            let gw = &grads.arrays[layer_idx * 2];
            let gb = &grads.arrays[layer_idx * 2 + 1];
            if gw.len() != layer.weights.len() || gb.len() != layer.bias.len() {
                return Err(Error::TensorShape("gradient/parameter size mismatch".into()));
            }
            for (w, &g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * (g + wd * *w);
            }
            for (b, &g) in layer.bias.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
        Ok(())
    }
}

/// Gradients for every parameter array, in [`DannModel::params`] order.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub arrays: Vec<Vec<f64>>,
}

/// Tape handles produced by one forward pass.
pub struct ForwardPass {
    pub features: TensorId,
    pub class_logits: TensorId,
    /// Present when the pass was built with a domain head.
    pub domain_logits: Option<TensorId>,
    param_ids: Vec<TensorId>,
}

impl ForwardPass {
    /// Collects parameter gradients after a backward sweep.
    pub fn grads(&self, tape: &Tape) -> ParamGrads {
        ParamGrads {
            arrays: self.param_ids.iter().map(|&id| tape.grad(id).to_vec()).collect(),
        }
    }
}

/// Runs the model forward on a flat batch (`inputs.len()` must be a
/// multiple of `input_dim`). `lambda` only affects gradients, never values.
pub fn forward(
    tape: &mut Tape,
    model: &DannModel,
    inputs: &[f64],
    lambda: f64,
    with_domain_head: bool,
    training: bool,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<ForwardPass> {
    if inputs.is_empty() || inputs.len() % model.input_dim != 0 {
        return Err(Error::TensorShape(format!(
            "{} inputs is not a batch of {}-dim rows",
            inputs.len(),
            model.input_dim
        )));
    }
    let batch = inputs.len() / model.input_dim;
    let x = tape.constant(batch, model.input_dim, inputs.to_vec())?;

    let mut param_ids = Vec::with_capacity(PARAM_ARRAYS);
    let mut lift = |tape: &mut Tape, layer: &LinearLayer| -> Result<(TensorId, TensorId)> {
        let w = tape.leaf(layer.in_dim, layer.out_dim, layer.weights.clone())?;
        let b = tape.leaf(1, layer.out_dim, layer.bias.clone())?;
        param_ids.push(w);
        param_ids.push(b);
        Ok((w, b))
    };
    let (w1, b1) = lift(tape, &model.hidden)?;
    let (w2, b2) = lift(tape, &model.feature)?;
    let (wc, bc) = lift(tape, &model.class_head)?;
    let (wd, bd) = lift(tape, &model.domain_head)?;

    let h_lin = tape.linear(x, w1, b1)?;
    let h = tape.relu(h_lin);
    let f_lin = tape.linear(h, w2, b2)?;
    let f_act = tape.relu(f_lin);
    let features = tape.dropout(f_act, model.dropout_p, dropout_rng, training)?;

    let class_logits = tape.linear(features, wc, bc)?;
    let domain_logits = if with_domain_head {
        let reversed = tape.gradient_reversal(features, lambda);
        Some(tape.linear(reversed, wd, bd)?)
    } else {
        None
    };

    Ok(ForwardPass {
        features,
        class_logits,
        domain_logits,
        param_ids,
    })
}

/// Row-wise softmax of raw logit values.
pub fn softmax_rows(logits: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / denom));
    }
    out
}

/// Combined objective: class term `Σ (1-d_i)·CE_i` plus, when domain
/// logits are given, the domain term `Σ BCE_i`. `Mean` reduction divides
/// the whole sum by the batch size.
pub fn dann_loss(
    tape: &mut Tape,
    class_logits: TensorId,
    labels: &[usize],
    domain: &[u8],
    domain_logits: Option<TensorId>,
    reduction: Reduction,
) -> Result<TensorId> {
    if labels.len() != domain.len() {
        return Err(Error::TensorShape(format!(
            "{} labels vs {} domain flags",
            labels.len(),
            domain.len()
        )));
    }
    if let Some(&bad) = domain.iter().find(|&&d| d > 1) {
        return Err(Error::InvalidSpec(format!("domain flag {bad} is not 0/1")));
    }
    let weights: Vec<f64> = domain.iter().map(|&d| 1.0 - f64::from(d)).collect();
    let ce = tape.softmax_cross_entropy(class_logits, labels)?;
    let class_term = tape.weighted_sum(ce, &weights)?;
    let total = match domain_logits {
        Some(dl) => {
            let bce = tape.sigmoid_bce(dl, domain)?;
            let domain_term = tape.sum(bce)?;
            tape.add(class_term, domain_term)?
        }
        None => class_term,
    };
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => tape.scale(total, 1.0 / labels.len() as f64),
    })
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

/// Serializes epoch records as JSON lines.
pub fn render_log(records: &[EpochRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize"))
        .fold(String::new(), |mut acc, line| {
            acc.push_str(&line);
            acc.push('\n');
            acc
        })
}

// Stream tag for dropout draws, distinct from batching streams.
const DROPOUT_STREAM: u64 = 0xD0_07;

/// Trains in place. Target data (unlabeled) requires `dann_enabled`; with
/// it, every batch is half source, half target, and the class term sees
/// only source instances. Returns the per-epoch log.
pub fn train(
    model: &mut DannModel,
    source: &LabeledDataset,
    target: Option<&LabeledDataset>,
    val: Option<&LabeledDataset>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if target.is_some() && !cfg.dann_enabled {
        return Err(Error::TargetWithoutDann);
    }
    if source.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if source.height * source.width != model.input_dim {
        return Err(Error::Incompatible(format!(
            "model expects {} inputs, images are {}x{}",
            model.input_dim, source.height, source.width
        )));
    }

    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lambda = cfg.schedule.value(training_progress(epoch, cfg.epochs));
        let mut dropout_rng = stream_rng(cfg.seed, DROPOUT_STREAM, epoch as u64);
        let batches = crate::dataset::make_batches(
            source,
            target,
            cfg.batch_size,
            cfg.seed,
            epoch as u64,
        )?;

        let mut loss_total = 0.0;
        for batch in &batches {
            let loss = train_step(model, batch, lambda, epoch, cfg, &mut dropout_rng)?;
            loss_total += loss;
        }
        let val_accuracy = val.map(|ds| {
            let predictions = evaluate(model, ds);
            let correct = predictions
                .iter()
                .enumerate()
                .filter(|&(i, &p)| p == ds.label(i))
                .count();
            correct as f64 / ds.len() as f64
        });
        log.push(EpochRecord {
            epoch,
            lambda,
            lr: cfg.learning_rate(epoch),
            train_loss: loss_total / batches.len() as f64,
            val_accuracy,
        });
    }
    Ok(log)
}

fn train_step(
    model: &mut DannModel,
    batch: &DomainBatch,
    lambda: f64,
    epoch: usize,
    cfg: &TrainConfig,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let with_domain = cfg.dann_enabled;
    let mut tape = Tape::new();
    let pass = forward(
        &mut tape,
        model,
        &batch.inputs,
        lambda,
        with_domain,
        true,
        dropout_rng,
    )?;
    // Target labels are never read: masked entries are a placeholder class
    // whose loss contribution is annihilated by the zero weight.
    let labels = batch.masked_labels();
    let loss = dann_loss(
        &mut tape,
        pass.class_logits,
        &labels,
        &batch.domain,
        pass.domain_logits,
        cfg.reduction,
    )?;
    tape.backward(loss)?;
    let grads = pass.grads(&tape);
    model.sgd_step(&grads, epoch, cfg)?;
    Ok(tape.scalar(loss))
}

/// Predicted class per instance: argmax of the class probabilities, ties
/// broken toward the lowest index. Dropout runs in eval mode.
pub fn evaluate(model: &DannModel, ds: &LabeledDataset) -> Vec<usize> {
    let mut predictions = Vec::with_capacity(ds.len());
    let stride = ds.height * ds.width;
    let chunk = 512;
    let mut rng = stream_rng(0, 0, 0); // never consulted in eval mode
    let mut start = 0;
    while start < ds.len() {
        let end = (start + chunk).min(ds.len());
        let mut inputs = Vec::with_capacity((end - start) * stride);
        for i in start..end {
            inputs.extend(ds.image_bytes(i).iter().map(|&b| f64::from(b) / 255.0));
        }
        let mut tape = Tape::new();
        let pass = forward(&mut tape, model, &inputs, 0.0, false, false, &mut rng)
            .expect("shapes fixed by construction");
        let logits = tape.values(pass.class_logits);
        for row in logits.chunks(model.num_classes) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            predictions.push(best);
        }
        start = end;
    }
    predictions
}

/// Fraction of instances whose prediction matches the dataset label.
pub fn accuracy_of(predictions: &[usize], ds: &LabeledDataset) -> f64 {
    let correct = predictions
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p == ds.label(i))
        .count();
    correct as f64 / predictions.len().max(1) as f64
}

/// Serialized model + config, shapes embedded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: DannModel,
}

pub fn save_checkpoint(model: &DannModel, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint {
        config: *cfg,
        model: model.clone(),
    };
    let json = serde_json::to_string(&checkpoint)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}
