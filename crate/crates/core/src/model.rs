//! The embedding → BiLSTM → conv → pooling → FFNN classifier.
//!
//! The trunk (embedding, BiLSTM, convolution) is shared between tasks; each
//! task gets its own two-layer feed-forward head. Binary tasks end in one
//! sigmoid unit, task C in a three-way softmax.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, Task, Vocabulary, DEFAULT_SEQ_LEN};
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::activation::{relu, relu_backward, sigmoid_scalar, softmax, softmax_backward};
use crate::nn::dropout::{spatial_dropout, spatial_dropout_backward, ChannelMask};
use crate::nn::loss::{self, inverse_frequency_weights};
use crate::nn::lstm::BiLstmCache;
use crate::nn::pool::{self, concat};
use crate::nn::tensor::{axpy, Matrix, Param};
use crate::nn::{conv::ConvCache, AdamState, BiLstm, Conv1d, Dense, Parameterized};
use crate::rng::{self, Rng};

/// Scale applied to the raw user count before it joins the pooled features.
pub const USER_COUNT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Hidden units per LSTM direction.
    pub lstm_hidden: usize,
    pub conv_width: usize,
    pub conv_filters: usize,
    pub ffnn_hidden: usize,
    pub output_units: usize,
    pub use_user_count: bool,
}

impl Default for ModelArch {
    fn default() -> Self {
        ModelArch {
            seq_len: DEFAULT_SEQ_LEN,
            vocab_size: 2,
            embed_dim: 100,
            lstm_hidden: 128,
            conv_width: 2,
            conv_filters: 64,
            ffnn_hidden: 10,
            output_units: 1,
            use_user_count: false,
        }
    }
}

/// One row of the per-layer summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

impl ModelArch {
    pub fn for_task(task: Task, vocab_size: usize) -> Self {
        ModelArch { vocab_size, output_units: task.output_units(), ..ModelArch::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.seq_len,
            self.vocab_size,
            self.embed_dim,
            self.lstm_hidden,
            self.conv_width,
            self.conv_filters,
            self.ffnn_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("architecture sizes must be positive".into()));
        }
        if !matches!(self.output_units, 1 | 3) {
            return Err(Error::InvalidArgument(format!("output units must be 1 or 3, got {}", self.output_units)));
        }
        if self.conv_width > self.seq_len {
            return Err(Error::InvalidArgument("conv width exceeds sequence length".into()));
        }
        Ok(())
    }

    pub fn pooled_dim(&self) -> usize {
        2 * self.conv_filters
    }

    pub fn ffnn_input(&self) -> usize {
        self.pooled_dim() + usize::from(self.use_user_count)
    }

    /// Layer-by-layer output shapes and parameter counts.
    pub fn layer_summary(&self) -> Vec<LayerSummary> {
        let conv_len = self.seq_len + 1 - self.conv_width;
        vec![
            LayerSummary { name: "embedding", output_shape: vec![self.seq_len, self.embed_dim], params: self.vocab_size * self.embed_dim },
            LayerSummary { name: "spatial_dropout", output_shape: vec![self.seq_len, self.embed_dim], params: 0 },
            LayerSummary {
                name: "bidirectional",
                output_shape: vec![self.seq_len, 2 * self.lstm_hidden],
                params: BiLstm::param_count(self.embed_dim, self.lstm_hidden),
            },
            LayerSummary {
                name: "conv",
                output_shape: vec![conv_len, self.conv_filters],
                params: Conv1d::param_count(self.conv_width, 2 * self.lstm_hidden, self.conv_filters),
            },
            LayerSummary { name: "max_pooling", output_shape: vec![self.conv_filters], params: 0 },
            LayerSummary { name: "average_pooling", output_shape: vec![self.conv_filters], params: 0 },
            LayerSummary { name: "concatenate", output_shape: vec![self.pooled_dim()], params: 0 },
            LayerSummary {
                name: "dense",
                output_shape: vec![self.ffnn_hidden],
                params: Dense::param_count(self.ffnn_input(), self.ffnn_hidden),
            },
            LayerSummary {
                name: "dense",
                output_shape: vec![self.output_units],
                params: Dense::param_count(self.ffnn_hidden, self.output_units),
            },
        ]
    }

    pub fn total_params(&self) -> usize {
        self.layer_summary().iter().map(|l| l.params).sum()
    }
}

/// Render a layer summary as an aligned table.
pub fn format_summary(rows: &[LayerSummary]) -> String {
    let mut s = format!("{:<18} {:<14} {:>10}\n", "layer", "output shape", "params");
    for r in rows {
        let shape = format!("({})", r.output_shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", "));
        s.push_str(&format!("{:<18} {:<14} {:>10}\n", r.name, shape, r.params));
    }
    let total: usize = rows.iter().map(|r| r.params).sum();
    s.push_str(&format!("{:<18} {:<14} {:>10}\n", "total", "", total));
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `V × d`, trainable.
    pub embedding: Param,
    pub bilstm: BiLstm,
    pub conv: Conv1d,
    pub dense1: Dense,
    pub dense_out: Dense,
}

/// Number of leading tensors in [`Parameterized::params`] order that form the
/// shared trunk.
const TRUNK_TENSORS: usize = 9;

impl Parameterized for ModelParams {
    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.embedding];
        v.extend(self.bilstm.params());
        v.extend(self.conv.params());
        v.extend(self.dense1.params());
        v.extend(self.dense_out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.bilstm.params_mut());
        v.extend(self.conv.params_mut());
        v.extend(self.dense1.params_mut());
        v.extend(self.dense_out.params_mut());
        v
    }
}

const TENSOR_NAMES: [&str; 13] = [
    "embedding",
    "bilstm.forward.w_input",
    "bilstm.forward.w_recurrent",
    "bilstm.forward.bias",
    "bilstm.backward.w_input",
    "bilstm.backward.w_recurrent",
    "bilstm.backward.bias",
    "conv.kernel",
    "conv.bias",
    "dense1.weight",
    "dense1.bias",
    "dense_out.weight",
    "dense_out.bias",
];

impl ModelParams {
    /// All-zero parameters of the right shapes.
    pub fn zeros(arch: &ModelArch) -> Self {
        ModelParams {
            embedding: Param::zeros(arch.vocab_size, arch.embed_dim),
            bilstm: BiLstm::zeros(arch.embed_dim, arch.lstm_hidden),
            conv: Conv1d::zeros(arch.conv_width, 2 * arch.lstm_hidden, arch.conv_filters),
            dense1: Dense::zeros(arch.ffnn_input(), arch.ffnn_hidden),
            dense_out: Dense::zeros(arch.ffnn_hidden, arch.output_units),
        }
    }

    /// Layer summary computed from the actual tensors.
    pub fn layer_summary(&self, arch: &ModelArch) -> Vec<LayerSummary> {
        let mut rows = arch.layer_summary();
        let actual = [
            self.embedding.len(),
            0,
            self.bilstm.num_params(),
            self.conv.num_params(),
            0,
            0,
            0,
            self.dense1.num_params(),
            self.dense_out.num_params(),
        ];
        for (r, n) in rows.iter_mut().zip(actual) {
            r.params = n;
        }
        rows
    }

    pub fn trunk(&self) -> Vec<&Param> {
        self.params().into_iter().take(TRUNK_TENSORS).collect()
    }

    fn head_params_mut(&mut self) -> Vec<&mut Param> {
        self.params_mut().into_iter().skip(TRUNK_TENSORS).collect()
    }

    fn check_arch(&self, arch: &ModelArch) -> Result<()> {
        let reference = ModelParams::zeros(arch);
        for ((name, a), b) in TENSOR_NAMES.iter().zip(self.params()).zip(reference.params()) {
            if !a.value.same_shape(&b.value) {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, architecture needs {}x{}",
                    a.value.rows, a.value.cols, b.value.rows, b.value.cols
                )));
            }
        }
        Ok(())
    }
}

fn fresh_head(arch: &ModelArch, rng: &mut Rng) -> (Dense, Dense) {
    let d1 = Dense::init(arch.ffnn_input(), arch.ffnn_hidden, rng);
    let d2 = Dense::init(arch.ffnn_hidden, arch.output_units, rng);
    (d1, d2)
}

/// Build a model: embedding seeded from `embedding`, everything else
/// Glorot-uniform with zero biases (LSTM forget gates start at 1).
pub fn build(arch: &ModelArch, embedding: Matrix, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    if embedding.rows != arch.vocab_size || embedding.cols != arch.embed_dim {
        return Err(Error::Shape(format!(
            "embedding matrix is {}x{}, architecture needs {}x{}",
            embedding.rows, embedding.cols, arch.vocab_size, arch.embed_dim
        )));
    }
    let mut rng = rng::seeded(seed);
    let bilstm = BiLstm::init(arch.embed_dim, arch.lstm_hidden, &mut rng);
    let conv = Conv1d::init(arch.conv_width, 2 * arch.lstm_hidden, arch.conv_filters, &mut rng);
    let (dense1, dense_out) = fresh_head(arch, &mut rng);
    Ok(ModelParams { embedding: Param::new(embedding), bilstm, conv, dense1, dense_out })
}

/// Reuse the trunk of a task-A model under a freshly initialised head sized
/// for `task`.
pub fn transfer(source: &ModelParams, source_arch: &ModelArch, task: Task, seed: u64) -> Result<(ModelParams, ModelArch)> {
    if task == Task::A {
        return Err(Error::InvalidArgument("transfer targets task B or C".into()));
    }
    if source_arch.output_units != Task::A.output_units() {
        return Err(Error::InvalidArgument("source model is not a task-A model".into()));
    }
    source.check_arch(source_arch)?;
    let arch = ModelArch { output_units: task.output_units(), ..*source_arch };
    let mut rng = rng::seeded(seed);
    let (dense1, dense_out) = fresh_head(&arch, &mut rng);
    let mut params = ModelParams {
        embedding: source.embedding.clone(),
        bilstm: source.bilstm.clone(),
        conv: source.conv.clone(),
        dense1,
        dense_out,
    };
    params.zero_grad();
    Ok((params, arch))
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    indices: Vec<usize>,
    dropped: Matrix,
    mask: Option<ChannelMask>,
    bilstm: BiLstmCache,
    lstm_out: Matrix,
    conv: ConvCache,
    conv_out_rows: usize,
    argmax: Vec<usize>,
    features: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Forward pass for one example. Returns class probabilities: one value
/// `P(class 1)` for binary heads, a distribution otherwise.
pub fn forward(
    params: &ModelParams,
    arch: &ModelArch,
    example: &EncodedExample,
    dropout: f64,
    train: bool,
    rng: &mut Rng,
) -> Result<ForwardCache> {
    if example.indices.len() != arch.seq_len {
        return Err(Error::Shape(format!("sequence length {} != {}", example.indices.len(), arch.seq_len)));
    }
    let vocab = params.embedding.value.rows;
    let d = params.embedding.value.cols;
    let mut embedded = Matrix::zeros(arch.seq_len, d);
    for (t, &idx) in example.indices.iter().enumerate() {
        if idx >= vocab {
            return Err(Error::InvalidArgument(format!("token index {idx} out of range for vocabulary of {vocab}")));
        }
        embedded.row_mut(t).copy_from_slice(params.embedding.value.row(idx));
    }
    let (dropped, mask) = spatial_dropout(&embedded, dropout, train, rng)?;
    let (lstm_out, bilstm) = params.bilstm.forward(&dropped)?;
    let (conv_out, conv) = params.conv.forward(&lstm_out)?;
    let (max, argmax) = pool::global_max_pool(&conv_out);
    let avg = pool::global_avg_pool(&conv_out);
    let mut features = concat(&max, &avg);
    if arch.use_user_count {
        features.push(example.user_count as f64 * USER_COUNT_SCALE);
    }
    let hidden_pre = params.dense1.forward(&features)?;
    let hidden = relu(&hidden_pre);
    let logits = params.dense_out.forward(&hidden)?;
    let probs = if logits.len() == 1 { vec![sigmoid_scalar(logits[0])] } else { softmax(&logits) };
    Ok(ForwardCache {
        indices: example.indices.clone(),
        dropped,
        mask,
        bilstm,
        lstm_out,
        conv,
        conv_out_rows: conv_out.rows,
        argmax,
        features,
        hidden_pre,
        hidden,
        probs,
    })
}

/// Backward pass from `dL/d logits`; accumulates into `params`' gradients.
pub fn backward(params: &mut ModelParams, arch: &ModelArch, cache: &ForwardCache, d_logits: &[f64]) {
    let d_hidden = params.dense_out.backward(&cache.hidden, d_logits);
    let d_hidden_pre = relu_backward(&cache.hidden_pre, &d_hidden);
    let d_features = params.dense1.backward(&cache.features, &d_hidden_pre);
    let f = arch.conv_filters;
    let mut d_conv = pool::global_max_pool_backward(cache.conv_out_rows, &cache.argmax, &d_features[..f]);
    d_conv.add_assign(&pool::global_avg_pool_backward(cache.conv_out_rows, &d_features[f..2 * f]));
    let d_lstm = params.conv.backward(&cache.lstm_out, &cache.conv, &d_conv);
    let d_dropped = params.bilstm.backward(&cache.dropped, &cache.bilstm, &d_lstm);
    let d_embedded = spatial_dropout_backward(&d_dropped, cache.mask.as_ref());
    for (t, &idx) in cache.indices.iter().enumerate() {
        axpy(1.0, d_embedded.row(t), params.embedding.grad.row_mut(idx));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// Cross-entropy with inverse-frequency class weights from the training set.
    WeightedCrossEntropy,
    SoftF1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Only update the head; used after [`transfer`].
    pub freeze_trunk: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            weight_decay: 0.0,
            dropout: 0.5,
            batch_size: 32,
            max_epochs: 10,
            patience: 2,
            seed: 0,
            loss: LossKind::CrossEntropy,
            freeze_trunk: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("patience and batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

fn probs_matrix(caches: &[ForwardCache], k: usize) -> Matrix {
    let mut m = Matrix::zeros(caches.len(), k);
    for (i, c) in caches.iter().enumerate() {
        if c.probs.len() == 1 {
            m.set(i, 0, 1.0 - c.probs[0]);
            m.set(i, 1, c.probs[0]);
        } else {
            m.row_mut(i).copy_from_slice(&c.probs);
        }
    }
    m
}

fn onehot(labels: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

/// Batch loss and `dL/d logits` for each example.
pub fn loss_and_logit_grads(
    caches: &[ForwardCache],
    labels: &[usize],
    kind: LossKind,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if caches.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    let binary = caches[0].probs.len() == 1;
    let k = if binary { 2 } else { caches[0].probs.len() };
    let n = caches.len() as f64;
    let weights = match kind {
        LossKind::WeightedCrossEntropy => class_weights,
        _ => None,
    };
    match kind {
        LossKind::CrossEntropy | LossKind::WeightedCrossEntropy => {
            // Sigmoid/softmax fused with cross-entropy: dL/dz = w·(p − y)/N.
            let loss = if binary {
                let p: Vec<f64> = caches.iter().map(|c| c.probs[0]).collect();
                let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                loss::bce(&p, &y, weights)?.0
            } else {
                loss::categorical_ce(&probs_matrix(caches, k), &onehot(labels, k), weights)?.0
            };
            let grads = caches
                .iter()
                .zip(labels)
                .map(|(c, &l)| {
                    let w = weights.map_or(1.0, |w| w[l]);
                    if binary {
                        vec![w * (c.probs[0] - l as f64) / n]
                    } else {
                        c.probs.iter().enumerate().map(|(j, &p)| w * (p - f64::from(j == l)) / n).collect()
                    }
                })
                .collect();
            Ok((loss, grads))
        }
        LossKind::SoftF1 => {
            let (loss, dp) = loss::soft_f1(&probs_matrix(caches, k), &onehot(labels, k))?;
            let grads = caches
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if binary {
                        let p = c.probs[0];
                        vec![(dp.get(i, 1) - dp.get(i, 0)) * p * (1.0 - p)]
                    } else {
                        softmax_backward(&c.probs, dp.row(i))
                    }
                })
                .collect();
            Ok((loss, grads))
        }
    }
}

/// Forward + backward over a batch, accumulating gradients into `params`.
pub fn accumulate_batch(
    params: &mut ModelParams,
    arch: &ModelArch,
    batch: &[&EncodedExample],
    kind: LossKind,
    class_weights: Option<&[f64]>,
    dropout: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let caches = batch
        .iter()
        .map(|ex| forward(params, arch, ex, dropout, dropout > 0.0, rng))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
    let (loss, grads) = loss_and_logit_grads(&caches, &labels, kind, class_weights)?;
    for (cache, g) in caches.iter().zip(&grads) {
        backward(params, arch, cache, g);
    }
    Ok(loss)
}

/// Class probabilities in evaluation mode.
pub fn predict_proba(params: &ModelParams, arch: &ModelArch, examples: &[EncodedExample]) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::seeded(0);
    examples
        .iter()
        .map(|ex| forward(params, arch, ex, 0.0, false, &mut rng).map(|c| c.probs))
        .collect()
}

/// Label from probabilities: `p ≥ 0.5` for binary heads, otherwise argmax
/// with ties to the lowest class index.
pub fn decide(probs: &[f64]) -> usize {
    if probs.len() == 1 {
        return usize::from(probs[0] >= 0.5);
    }
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &ModelParams, arch: &ModelArch, examples: &[EncodedExample]) -> Result<Vec<usize>> {
    Ok(predict_proba(params, arch, examples)?.iter().map(|p| decide(p)).collect())
}

/// Patience-based early stopping on a metric where larger is better.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, stale: 0 }
    }

    pub fn update(&mut self, epoch: usize, metric: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if metric <= b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, metric));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    /// `(epoch, metric)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// CSV `epoch,train_loss,val_accuracy,val_macro_f1`.
pub fn write_history_csv<W: Write>(history: &[EpochRecord], mut w: W) -> Result<()> {
    writeln!(w, "epoch,train_loss,val_accuracy,val_macro_f1")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_accuracy, r.val_macro_f1)?;
    }
    Ok(())
}

/// Mini-batch Adam training with per-epoch validation and early stopping on
/// validation accuracy. Returns the parameters of the best epoch.
pub fn train(
    mut params: ModelParams,
    arch: &ModelArch,
    train_set: &[EncodedExample],
    val_set: &[EncodedExample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    arch.validate()?;
    params.check_arch(arch)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty".into()));
    }
    let k = if arch.output_units == 1 { 2 } else { arch.output_units };
    let labels: Vec<usize> = train_set.iter().map(|e| e.label).collect();
    let class_weights = inverse_frequency_weights(&labels, k);
    let val_labels: Vec<usize> = val_set.iter().map(|e| e.label).collect();

    let mut rng = rng::seeded(config.seed);
    let mut adam = AdamState::new();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = params.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            params.zero_grad();
            let loss = accumulate_batch(&mut params, arch, &batch, config.loss, Some(&class_weights), config.dropout, &mut rng)?;
            loss_sum += loss * batch.len() as f64;
            let mut tensors = if config.freeze_trunk { params.head_params_mut() } else { params.params_mut() };
            adam.step(&mut tensors, config.learning_rate, config.weight_decay);
        }
        let preds = predict(&params, arch, val_set)?;
        let report = eval::evaluate(&val_labels, &preds, k)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_accuracy: report.accuracy,
            val_macro_f1: report.macro_f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, val accuracy {:.4}, val macro-F1 {:.4}",
            record.train_loss,
            record.val_accuracy,
            record.val_macro_f1
        );
        history.push(record);
        match stopper.update(epoch, report.accuracy) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    best.zero_grad();
    let best_epoch = stopper.best().map_or(0, |(e, _)| e);
    Ok(TrainOutcome { params: best, history, best_epoch })
}

const MAGIC: &[u8; 5] = b"OFLG1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    arch: ModelArch,
    vocab_hash: String,
    tensors: Vec<TensorEntry>,
}

/// Write `OFLG1`, a one-line JSON header, then every tensor as little-endian
/// `f64` in manifest order.
pub fn save<W: Write>(params: &ModelParams, arch: &ModelArch, vocab_hash: &str, mut w: W) -> Result<()> {
    params.check_arch(arch)?;
    let tensors = TENSOR_NAMES
        .iter()
        .zip(params.params())
        .map(|(name, p)| TensorEntry { name: (*name).to_string(), rows: p.value.rows, cols: p.value.cols })
        .collect();
    let header = FileHeader { arch: *arch, vocab_hash: vocab_hash.to_string(), tensors };
    w.write_all(MAGIC)?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for p in params.params() {
        let mut buf = Vec::with_capacity(p.len() * 8);
        for v in &p.value.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// A model read back from disk.
pub struct LoadedModel {
    pub params: ModelParams,
    pub arch: ModelArch,
    pub vocab_hash: String,
}

pub fn load<R: Read>(mut r: R) -> Result<LoadedModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelFile("bad magic bytes".into()));
    }
    let rest = &bytes[MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::ModelFile("truncated header".into()))?;
    let header: FileHeader = serde_json::from_slice(&rest[..nl])?;
    header.arch.validate()?;
    let mut payload = &rest[nl + 1..];

    let mut params = ModelParams::zeros(&header.arch);
    if header.tensors.len() != TENSOR_NAMES.len() {
        return Err(Error::ModelFile(format!("expected {} tensors, found {}", TENSOR_NAMES.len(), header.tensors.len())));
    }
    for (entry, p) in header.tensors.iter().zip(params.params_mut()) {
        if entry.rows != p.value.rows || entry.cols != p.value.cols {
            return Err(Error::ModelFile(format!("tensor {} has shape {}x{}, inconsistent with the architecture", entry.name, entry.rows, entry.cols)));
        }
        let need = p.len() * 8;
        if payload.len() < need {
            return Err(Error::ModelFile(format!("truncated payload in tensor {}", entry.name)));
        }
        for (v, chunk) in p.value.data.iter_mut().zip(payload[..need].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        payload = &payload[need..];
    }
    if !payload.is_empty() {
        return Err(Error::ModelFile(format!("{} trailing bytes after the last tensor", payload.len())));
    }
    Ok(LoadedModel { params, arch: header.arch, vocab_hash: header.vocab_hash })
}

/// [`load`] and verify the model was trained against `vocab`.
pub fn load_checked<R: Read>(r: R, vocab: &Vocabulary) -> Result<LoadedModel> {
    let m = load(r)?;
    let found = vocab.content_hash();
    if m.vocab_hash != found {
        return Err(Error::VocabMismatch { expected: m.vocab_hash, found });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch(out: usize) -> ModelArch {
        ModelArch {
            seq_len: 6,
            vocab_size: 12,
            embed_dim: 4,
            lstm_hidden: 3,
            conv_width: 2,
            conv_filters: 5,
            ffnn_hidden: 4,
            output_units: out,
            use_user_count: false,
        }
    }

    fn small_model(arch: &ModelArch, seed: u64) -> ModelParams {
        let emb = Matrix::uniform(arch.vocab_size, arch.embed_dim, 0.5, &mut rng::seeded(seed + 100));
        build(arch, emb, seed).unwrap()
    }

    fn example(indices: Vec<usize>, label: usize) -> EncodedExample {
        EncodedExample { indices, user_count: 2, label }
    }

    #[test]
    fn table_parameter_counts() {
        let arch = ModelArch { vocab_size: 21_251, ..ModelArch::default() };
        let counts: Vec<usize> = arch.layer_summary().iter().map(|l| l.params).collect();
        assert_eq!(counts, vec![2_125_100, 0, 234_496, 32_832, 0, 0, 0, 1_290, 11]);
        assert_eq!(arch.total_params(), 2_393_729);
        let shapes: Vec<Vec<usize>> = arch.layer_summary().into_iter().map(|l| l.output_shape).collect();
        assert_eq!(shapes[2], vec![63, 256]);
        assert_eq!(shapes[3], vec![62, 64]);
        assert_eq!(shapes[6], vec![128]);

        let with_users = ModelArch { use_user_count: true, ..arch };
        assert_eq!(with_users.layer_summary()[7].params, 1_300);
    }

    #[test]
    fn build_is_deterministic_and_checks_shapes() {
        let arch = small_arch(1);
        assert_eq!(small_model(&arch, 4), small_model(&arch, 4));
        assert_ne!(small_model(&arch, 4), small_model(&arch, 5));
        assert!(build(&arch, Matrix::zeros(3, 4), 0).is_err());
        let m = small_model(&arch, 4);
        assert_eq!(&m.bilstm.forward.bias.value.data[3..6], &[1.0; 3]);
        assert_eq!(m.num_params(), arch.total_params());
    }

    #[test]
    fn output_ranges() {
        let arch = small_arch(1);
        let m = small_model(&arch, 1);
        let mut rng = rng::seeded(0);
        let c = forward(&m, &arch, &example(vec![0, 3, 4, 5, 6, 7], 1), 0.5, true, &mut rng).unwrap();
        assert!(c.probs[0] > 0.0 && c.probs[0] < 1.0);

        let arch3 = small_arch(3);
        let m3 = small_model(&arch3, 1);
        let c = forward(&m3, &arch3, &example(vec![2, 3, 4, 5, 6, 7], 1), 0.0, false, &mut rng).unwrap();
        assert!((c.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        assert!(forward(&m, &arch, &example(vec![0, 0, 0, 0, 0, 99], 0), 0.0, false, &mut rng).is_err());
        assert!(forward(&m, &arch, &example(vec![0, 0], 0), 0.0, false, &mut rng).is_err());
    }

    #[test]
    fn zero_head_gives_one_half() {
        let arch = small_arch(1);
        let mut m = small_model(&arch, 1);
        m.bilstm = BiLstm::zeros(arch.embed_dim, arch.lstm_hidden);
        m.conv = Conv1d::zeros(arch.conv_width, 2 * arch.lstm_hidden, arch.conv_filters);
        m.dense1 = Dense::zeros(arch.ffnn_input(), arch.ffnn_hidden);
        m.dense_out = Dense::zeros(arch.ffnn_hidden, 1);
        let p = predict_proba(&m, &arch, &[example(vec![0; 6], 0)]).unwrap();
        assert_eq!(p[0][0], 0.5);
    }

    #[test]
    fn user_count_ignored_when_disabled() {
        let arch = small_arch(1);
        let m = small_model(&arch, 2);
        let a = predict_proba(&m, &arch, &[EncodedExample { indices: vec![2, 3, 4, 5, 6, 7], user_count: 0, label: 0 }]).unwrap();
        let b = predict_proba(&m, &arch, &[EncodedExample { indices: vec![2, 3, 4, 5, 6, 7], user_count: 9, label: 0 }]).unwrap();
        assert_eq!(a, b);

        let arch_u = ModelArch { use_user_count: true, ..arch };
        let m = small_model(&arch_u, 2);
        assert_eq!(m.dense1.input_dim(), 2 * arch.conv_filters + 1);
        let a = predict_proba(&m, &arch_u, &[EncodedExample { indices: vec![2, 3, 4, 5, 6, 7], user_count: 0, label: 0 }]).unwrap();
        let b = predict_proba(&m, &arch_u, &[EncodedExample { indices: vec![2, 3, 4, 5, 6, 7], user_count: 9, label: 0 }]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn decision_rules() {
        assert_eq!(decide(&[0.5]), 1);
        assert_eq!(decide(&[0.4999]), 0);
        assert_eq!(decide(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(decide(&[0.5, 0.5, 0.0]), 0);
    }

    #[test]
    fn early_stopping_rule() {
        let mut s = EarlyStopping::new(2);
        let accs = [0.70, 0.74, 0.73, 0.72, 0.80];
        let mut stopped = None;
        for (i, &a) in accs.iter().enumerate() {
            if s.update(i + 1, a) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(4));
        assert_eq!(s.best(), Some((2, 0.74)));
    }

    #[test]
    fn transfer_shapes_and_trunk() {
        let arch = small_arch(1);
        let src = small_model(&arch, 3);
        let (c, arch_c) = transfer(&src, &arch, Task::C, 9).unwrap();
        assert_eq!(arch_c.output_units, 3);
        assert_eq!(c.dense_out.num_params(), arch.ffnn_hidden * 3 + 3);
        for (a, b) in c.trunk().iter().zip(src.trunk()) {
            assert!(a.value.data.iter().zip(&b.value.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let (b, _) = transfer(&src, &arch, Task::B, 9).unwrap();
        assert!(b.dense1.weight.value.same_shape(&src.dense1.weight.value));
        assert_ne!(b.dense1.weight.value, src.dense1.weight.value);
        assert!(transfer(&src, &arch, Task::A, 9).is_err());
        assert!(transfer(&c, &arch_c, Task::B, 9).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let arch = small_arch(3);
        let m = small_model(&arch, 6);
        let vocab = Vocabulary::build(&[vec!["a"; 1]]);
        let mut buf = Vec::new();
        save(&m, &arch, &vocab.content_hash(), &mut buf).unwrap();
        assert_eq!(&buf[..5], b"OFLG1");
        let back = load_checked(buf.as_slice(), &vocab).unwrap();
        assert_eq!(back.arch, arch);
        let ex = [example(vec![1, 2, 3, 4, 5, 6], 0)];
        let p0 = predict_proba(&m, &arch, &ex).unwrap();
        let p1 = predict_proba(&back.params, &back.arch, &ex).unwrap();
        assert_eq!(p0[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(), p1[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>());

        let other = Vocabulary::build(&[vec!["b"; 1]]);
        assert!(matches!(load_checked(buf.as_slice(), &other), Err(Error::VocabMismatch { .. })));
        assert!(load(&buf[..buf.len() - 3]).is_err());
        assert!(load(&buf[..20]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(load(extra.as_slice()).is_err());
    }

    #[test]
    fn training_rejects_empty_sets() {
        let arch = small_arch(1);
        let m = small_model(&arch, 1);
        let ex = vec![example(vec![2; 6], 1)];
        assert!(train(m.clone(), &arch, &[], &ex, &TrainConfig::default()).is_err());
        assert!(train(m, &arch, &ex, &[], &TrainConfig::default()).is_err());
    }
}
