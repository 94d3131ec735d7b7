//! The weighted multi-task objective, optimizers, epochs, evaluation and
//! early stopping.
//!
//! The objective for one batch is
//!
//! ```text
//! total = a1 * CE(label) + a2 * CE(row) + a3 * CE(col) + lambda * sum(w^2)
//! ```
//!
//! where each `CE` is the mean softmax cross-entropy of its head over the
//! batch and the penalty covers the weight tensors of the trunk and of every
//! head with a positive weight.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::{LabelTriple, TensorDataset};
use crate::gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, Probe};
use crate::model::{BackwardOptions, Mode, MultiHeadOutput, Network};
use crate::ops::cross_entropy_index;
use crate::rng::{domain, RngStream};
use crate::scalar::Scalar;
use crate::tensor::{argmax, ParamRole, ParamTensor, Tensor};

/// Batch size used by [`evaluate`]; results do not depend on it beyond
/// float summation order.
pub const EVAL_BATCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub keep_prob: f64,
    /// Weights of the label, row and column losses.
    pub alphas: [f64; 3],
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            learning_rate: 1e-4,
            l2_lambda: 0.01,
            keep_prob: 0.3,
            alphas: [1.0, 0.35, 0.65],
            max_epochs: 300,
            early_stop_patience: 20,
            early_stop_min_delta: 1e-4,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

pub fn validate_alphas(alphas: [f64; 3]) -> Result<()> {
    if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) || !(alphas[0] > 0.0) {
        return Err(Error::Validation(format!(
            "alphas {alphas:?} must be finite and non-negative with a1 > 0"
        )));
    }
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        validate_alphas(self.alphas)?;
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Validation(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::Validation(format!("L2 lambda {} must be >= 0", self.l2_lambda)));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Validation(format!("keep probability {} outside (0, 1]", self.keep_prob)));
        }
        if !(self.early_stop_min_delta >= 0.0) {
            return Err(Error::Validation("early-stop min delta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Losses of one batch or split. `total` includes `l2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub label: f64,
    pub row: f64,
    pub col: f64,
    pub l2: f64,
}

/// Whether a parameter takes part in the objective under `alphas`: trunk
/// parameters always do, a head only when its weight is positive.
pub fn participates(name: &str, alphas: [f64; 3]) -> bool {
    Network::<f32>::head_of(name).is_none_or(|h| alphas[h] > 0.0)
}

/// L2 penalty over participating weight tensors, accumulated in `f64`.
pub fn objective_l2<T: Scalar>(params: &[ParamTensor<T>], alphas: [f64; 3], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for p in params {
        if p.role == ParamRole::Weight && participates(&p.name, alphas) {
            for &x in p.value.data() {
                let x = x.to_f64();
                sum += x * x;
            }
        }
    }
    lambda * sum
}

/// Adds `2 * lambda * w` to the gradient of every participating weight.
pub fn apply_l2_gradient<T: Scalar>(params: &mut [ParamTensor<T>], alphas: [f64; 3], lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    let factor = T::from_f64(2.0 * lambda);
    for p in params.iter_mut() {
        if p.role == ParamRole::Weight && participates(&p.name, alphas) {
            for (g, &x) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
                *g += factor * x;
            }
        }
    }
}

fn head_loss<T: Scalar>(logits: &Tensor<T>, targets: impl Iterator<Item = u16>, scale: T) -> Result<(f64, Tensor<T>)> {
    let width = logits.shape()[1];
    let mut grad = Tensor::zeros(logits.shape());
    let mut sum = 0.0f64;
    for ((row, g), target) in logits
        .data()
        .chunks_exact(width)
        .zip(grad.data_mut().chunks_exact_mut(width))
        .zip(targets)
    {
        let t = target as usize;
        if t == 0 || t > width {
            return Err(Error::Validation(format!("target class {t} outside 1..={width}")));
        }
        sum += cross_entropy_index(row, t - 1, g).to_f64();
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok((sum, grad))
}

/// Weighted three-task loss and the gradients of `total` with respect to
/// each head's logits.
pub fn multitask_loss<T: Scalar>(
    outputs: &MultiHeadOutput<T>,
    targets: &[LabelTriple],
    alphas: [f64; 3],
    params: &[ParamTensor<T>],
    l2_lambda: f64,
) -> Result<(LossBreakdown, MultiHeadOutput<T>)> {
    validate_alphas(alphas)?;
    if !(l2_lambda >= 0.0) {
        return Err(Error::Validation(format!("L2 lambda {l2_lambda} must be >= 0")));
    }
    let b = outputs.batch_size();
    for head in outputs.heads() {
        if head.rank() != 2 || head.shape()[0] != b || targets.len() != b {
            return Err(Error::dim("multitask_loss", head.shape(), &[targets.len()]));
        }
    }
    let scale = |a: f64| T::from_f64(a / b as f64);
    let (l1, g1) = head_loss(&outputs.label_logits, targets.iter().map(|t| t.label), scale(alphas[0]))?;
    let (l2, g2) = head_loss(&outputs.row_logits, targets.iter().map(|t| t.row), scale(alphas[1]))?;
    let (l3, g3) = head_loss(&outputs.col_logits, targets.iter().map(|t| t.col), scale(alphas[2]))?;
    let n = b as f64;
    let (label, row, col) = (l1 / n, l2 / n, l3 / n);
    let penalty = objective_l2(params, alphas, l2_lambda);
    let total = alphas[0] * label + alphas[1] * row + alphas[2] * col + penalty;
    Ok((
        LossBreakdown {
            total,
            label,
            row,
            col,
            l2: penalty,
        },
        MultiHeadOutput {
            label_logits: g1,
            row_logits: g2,
            col_logits: g3,
        },
    ))
}

/// Optimizer state. Adam uses the usual decay constants 0.9 / 0.999 and
/// epsilon 1e-8 with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T = f32> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    /// First and second moments, parallel to the network parameters. Empty
    /// for SGD.
    pub moments: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &[ParamTensor<T>]) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => params
                .iter()
                .map(|p| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())))
                .collect(),
        };
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments,
        }
    }

    pub fn step(&mut self, params: &mut [ParamTensor<T>]) {
        self.step += 1;
        let lr = T::from_f64(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (x, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *x -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
                let (c1, c2) = (T::ONE - b1, T::ONE - b2);
                let bias1 = T::from_f64(1.0 - libm::pow(self.beta1, t as f64));
                let bias2 = T::from_f64(1.0 - libm::pow(self.beta2, t as f64));
                let eps = T::from_f64(self.epsilon);
                for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
                    let it = p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(p.grad.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
                    for ((x, &g), (mi, vi)) in it {
                        *mi = b1 * *mi + c1 * g;
                        *vi = b2 * *vi + c2 * g * g;
                        let mhat = *mi / bias1;
                        let vhat = *vi / bias2;
                        *x -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Mean losses and argmax accuracies over a split.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub total_loss: f64,
    pub label_loss: f64,
    pub row_loss: f64,
    pub col_loss: f64,
    pub label_acc: f64,
    pub row_acc: f64,
    pub col_acc: f64,
    /// L2 term folded into `total_loss`.
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train: SplitMetrics,
    pub val: Option<SplitMetrics>,
    pub seconds: f64,
}

#[derive(Default)]
struct MetricsAccumulator {
    samples: usize,
    total: f64,
    label: f64,
    row: f64,
    col: f64,
    l2: f64,
    correct: [usize; 3],
}

impl MetricsAccumulator {
    fn add<T: Scalar>(&mut self, loss: &LossBreakdown, out: &MultiHeadOutput<T>, targets: &[LabelTriple]) {
        let n = targets.len();
        let w = n as f64;
        self.samples += n;
        self.total += loss.total * w;
        self.label += loss.label * w;
        self.row += loss.row * w;
        self.col += loss.col * w;
        self.l2 += loss.l2 * w;
        for (h, logits) in out.heads().into_iter().enumerate() {
            let width = logits.shape()[1];
            for (row, t) in logits.data().chunks_exact(width).zip(targets) {
                let want = [t.label, t.row, t.col][h] as usize - 1;
                if argmax(row) == want {
                    self.correct[h] += 1;
                }
            }
        }
    }

    fn finish(&self) -> SplitMetrics {
        let n = self.samples.max(1) as f64;
        SplitMetrics {
            total_loss: self.total / n,
            label_loss: self.label / n,
            row_loss: self.row / n,
            col_loss: self.col / n,
            label_acc: self.correct[0] as f64 / n,
            row_acc: self.correct[1] as f64 / n,
            col_acc: self.correct[2] as f64 / n,
            l2: self.l2 / n,
        }
    }
}

/// Stream id for the dropout draws of one batch.
fn dropout_stream(epoch: usize, batch: usize) -> u64 {
    domain::DROPOUT | (epoch as u64) << 24 | batch as u64
}

/// One pass over `data` in seeded shuffled order, updating the network after
/// every batch. The final partial batch is included. Returned metrics are
/// running training-mode averages weighted by batch size.
pub fn train_epoch<T: Scalar>(
    network: &mut Network<T>,
    optimizer: &mut Optimizer<T>,
    data: &TensorDataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<SplitMetrics> {
    train_epoch_with(network, optimizer, data, config, epoch, BackwardOptions::default())
}

pub fn train_epoch_with<T: Scalar>(
    network: &mut Network<T>,
    optimizer: &mut Optimizer<T>,
    data: &TensorDataset,
    config: &TrainConfig,
    epoch: usize,
    backward: BackwardOptions,
) -> Result<SplitMetrics> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    RngStream::new(config.seed, domain::SHUFFLE | epoch as u64).shuffle(&mut order);
    let mut acc = MetricsAccumulator::default();
    for (b, indices) in order.chunks(config.batch_size).enumerate() {
        let (images, targets) = data.batch::<T>(indices);
        let mut rng = RngStream::new(config.seed, dropout_stream(epoch, b));
        let (out, cache) = network.forward(&images, Mode::Train { keep_prob: config.keep_prob }, &mut rng)?;
        let (loss, grads) = multitask_loss(&out, &targets, config.alphas, network.params(), config.l2_lambda)?;
        network.zero_grad();
        network.backward_with(cache, &grads, backward)?;
        apply_l2_gradient(network.params_mut(), config.alphas, config.l2_lambda);
        optimizer.step(network.params_mut());
        acc.add(&loss, &out, &targets);
    }
    Ok(acc.finish())
}

/// Evaluation-mode losses and accuracies. Never mutates the network.
pub fn evaluate<T: Scalar>(network: &Network<T>, data: &TensorDataset, alphas: [f64; 3], l2_lambda: f64) -> Result<SplitMetrics> {
    let mut acc = MetricsAccumulator::default();
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (images, targets) = data.batch::<T>(chunk);
        let out = network.forward_eval(&images)?;
        let (loss, _) = multitask_loss(&out, &targets, alphas, network.params(), l2_lambda)?;
        acc.add(&loss, &out, &targets);
    }
    Ok(acc.finish())
}

/// Fraction of samples whose independently predicted label sits at the
/// independently predicted `(row, col)`.
pub fn consistency_rate<T: Scalar>(
    network: &Network<T>,
    data: &TensorDataset,
    grid: &crate::grid::AlphabetGrid,
) -> Result<f64> {
    let mut consistent = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (images, _) = data.batch::<T>(chunk);
        let out = network.forward_eval(&images)?;
        let [l, r, c] = out.heads();
        let (wl, wr, wc) = (l.shape()[1], r.shape()[1], c.shape()[1]);
        for i in 0..chunk.len() {
            let label = argmax(&l.data()[i * wl..(i + 1) * wl]) as u16 + 1;
            let row = argmax(&r.data()[i * wr..(i + 1) * wr]) as u16 + 1;
            let col = argmax(&c.data()[i * wc..(i + 1) * wc]) as u16 + 1;
            if grid.label_to_grid(label).is_ok_and(|cell| cell == (row, col)) {
                consistent += 1;
            }
        }
    }
    Ok(consistent as f64 / data.len().max(1) as f64)
}

/// Patience-based stopping on a monitored loss. An epoch improves only when
/// it beats the best value so far by more than `min_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        let improved = match self.best {
            None => true,
            Some(best) => best - loss > self.min_delta,
        };
        if improved {
            self.best = Some(loss);
            self.best_epoch = epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: self.since_best >= self.patience,
        }
    }
}

/// Replays `history` through [`EarlyStopping`]; true when the rule would
/// have stopped by the last entry.
pub fn early_stop(history: &[f64], patience: usize, min_delta: f64) -> bool {
    let mut rule = EarlyStopping::new(patience, min_delta);
    history
        .iter()
        .enumerate()
        .any(|(i, &loss)| rule.observe(i + 1, loss).stop)
}

/// What one epoch of [`TrainState::run_epoch`] produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub record: MetricsRecord,
    pub improved: bool,
    pub stop: bool,
}

/// Everything a training run needs to continue: the network, optimizer
/// state, early-stopping counters and the best network so far. Restoring
/// all of it reproduces the remaining epochs exactly.
#[derive(Debug, Clone)]
pub struct TrainState<T = f32> {
    pub config: TrainConfig,
    pub network: Network<T>,
    pub optimizer: Optimizer<T>,
    pub stopping: EarlyStopping,
    pub best: Network<T>,
    /// Epochs completed so far.
    pub epoch: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(network: Network<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, network.params());
        Ok(Self {
            stopping: EarlyStopping::new(config.early_stop_patience, config.early_stop_min_delta),
            best: network.clone(),
            optimizer,
            network,
            config,
            epoch: 0,
        })
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.max_epochs
    }

    /// Trains one epoch, evaluates on `val` (or monitors the training loss
    /// when there is no validation split) and applies early stopping.
    pub fn run_epoch(&mut self, train: &TensorDataset, val: Option<&TensorDataset>) -> Result<EpochOutcome> {
        let epoch = self.epoch + 1;
        let train_metrics = train_epoch(&mut self.network, &mut self.optimizer, train, &self.config, epoch)?;
        let val_metrics = match val {
            Some(v) if !v.is_empty() => Some(evaluate(&self.network, v, self.config.alphas, self.config.l2_lambda)?),
            _ => None,
        };
        self.epoch = epoch;
        let monitored = val_metrics.map_or(train_metrics.total_loss, |m| m.total_loss);
        let decision = self.stopping.observe(epoch, monitored);
        if decision.improved {
            self.best = self.network.clone();
        }
        Ok(EpochOutcome {
            record: MetricsRecord {
                epoch,
                train: train_metrics,
                val: val_metrics,
                seconds: 0.0,
            },
            improved: decision.improved,
            stop: decision.stop,
        })
    }
}

/// Finite-difference check of the full objective (all three heads and the
/// L2 term) at a fixed batch. Training mode reuses one dropout stream for
/// every probe, so the mask stays fixed.
#[allow(clippy::too_many_arguments)]
pub fn check_network_gradients(
    network: &Network<f64>,
    images: &Tensor<f64>,
    targets: &[LabelTriple],
    alphas: [f64; 3],
    l2_lambda: f64,
    mode: Mode,
    backward: BackwardOptions,
    options: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut probe_net = network.clone();
    let mut params = network.params().to_vec();
    let mut failure = None;
    let report = gradient_check(
        &mut params,
        |p, with_grad| {
            for (dst, src) in probe_net.params_mut().iter_mut().zip(p.iter()) {
                dst.value.data_mut().copy_from_slice(src.value.data());
            }
            let mut rng = RngStream::new(options.seed, domain::GRADCHECK | 1);
            let run = |net: &mut Network<f64>, rng: &mut RngStream| -> Result<Probe> {
                let (out, cache) = net.forward(images, mode, rng)?;
                let (loss, grads) = multitask_loss(&out, targets, alphas, net.params(), l2_lambda)?;
                let pattern = cache.activation_pattern();
                if with_grad {
                    net.zero_grad();
                    net.backward_with(cache, &grads, backward)?;
                    apply_l2_gradient(net.params_mut(), alphas, l2_lambda);
                }
                Ok(Probe { loss: loss.total, pattern })
            };
            match run(&mut probe_net, &mut rng) {
                Ok(probe) => {
                    if with_grad {
                        for (dst, src) in p.iter_mut().zip(probe_net.params()) {
                            dst.grad.data_mut().copy_from_slice(src.grad.data());
                        }
                    }
                    probe
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    Probe { loss: f64::NAN, pattern: 0 }
                }
            }
        },
        options,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
