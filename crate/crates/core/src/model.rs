//! The shared-trunk, three-head network.
//!
//! Default architecture on a 32x32 canvas:
//!
//! ```text
//! 32x32x1 -> conv5x80 -> ReLU -> pool2 -> conv5x64 -> ReLU -> pool2
//!         -> flatten(1600) -> dense512 -> ReLU -> dropout
//!         -> { dense265 (label), dense34 (row), dense9 (column) }
//! ```
//!
//! Everything up to the dropout output is computed once per image and feeds
//! all three heads (hard parameter sharing).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AlphabetGrid;
use crate::ops::{
    self, conv2d_backward_from_patches, conv2d_forward_with_patches, dense_backward, dense_forward,
    dropout, dropout_backward, maxpool2_backward, maxpool2_forward, relu_backward, relu_in_place,
    softmax, DropoutMask, Patches, PoolMask,
};
use crate::rng::{domain, RngStream};
use crate::scalar::Scalar;
use crate::tensor::{ParamRole, ParamTensor, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub filter_size: usize,
    pub filters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSizes {
    pub labels: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub canvas: usize,
    /// Each stage is a valid convolution, ReLU, then 2x2 max pooling.
    pub conv_stages: Vec<ConvStage>,
    pub hidden: usize,
    pub heads: HeadSizes,
    /// Default keep probability for training-mode forward passes.
    pub keep_prob: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            canvas: 32,
            conv_stages: vec![
                ConvStage { filter_size: 5, filters: 80 },
                ConvStage { filter_size: 5, filters: 64 },
            ],
            hidden: 512,
            heads: HeadSizes { labels: 265, rows: 34, cols: 9 },
            keep_prob: 0.3,
        }
    }
}

/// Spatial sides after the input and after each conv and pool step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    pub sides: Vec<usize>,
    pub channels: usize,
    pub flatten: usize,
}

impl ModelConfig {
    /// Default architecture with head sizes taken from `grid`.
    pub fn for_grid(grid: &AlphabetGrid) -> Self {
        Self {
            heads: HeadSizes {
                labels: grid.num_labels() as usize,
                rows: grid.num_rows() as usize,
                cols: grid.num_cols() as usize,
            },
            ..Self::default()
        }
    }

    /// Applies `(M - N + 1)` for each convolution and halving for each pool.
    pub fn trace(&self) -> Result<ShapeTrace> {
        if self.canvas == 0 {
            return Err(Error::Config("canvas size must be positive".into()));
        }
        let mut side = self.canvas;
        let mut sides = vec![side];
        let mut channels = 1;
        for (i, stage) in self.conv_stages.iter().enumerate() {
            if stage.filters == 0 {
                return Err(Error::Config(format!("conv stage {} has no filters", i + 1)));
            }
            side = ops::conv_output_side(side, stage.filter_size).ok_or_else(|| {
                Error::Config(format!(
                    "conv stage {}: a {n}x{n} filter on a {side}x{side} map violates (M - N + 1) >= 1",
                    i + 1,
                    n = stage.filter_size
                ))
            })?;
            sides.push(side);
            if !side.is_multiple_of(2) {
                return Err(Error::Config(format!(
                    "conv stage {}: output side {side} is odd, so 2x2 pooling is not integral",
                    i + 1
                )));
            }
            side /= 2;
            sides.push(side);
            channels = stage.filters;
        }
        Ok(ShapeTrace {
            flatten: side * side * channels,
            sides,
            channels,
        })
    }

    pub fn validate(&self, grid: Option<&AlphabetGrid>) -> Result<ShapeTrace> {
        let trace = self.trace()?;
        if self.hidden == 0 || self.heads.labels == 0 || self.heads.rows == 0 || self.heads.cols == 0 {
            return Err(Error::Config("hidden width and head sizes must be positive".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep probability {} outside (0, 1]", self.keep_prob)));
        }
        if let Some(grid) = grid {
            let expect = (grid.num_labels() as usize, grid.num_rows() as usize, grid.num_cols() as usize);
            let got = (self.heads.labels, self.heads.rows, self.heads.cols);
            if expect != got {
                return Err(Error::Config(format!(
                    "head sizes {got:?} do not match the grid's (labels, rows, cols) {expect:?}"
                )));
            }
        }
        Ok(trace)
    }
}

/// Per-head logits, one row per image: `[B, labels]`, `[B, rows]`, `[B, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadOutput<T = f32> {
    pub label_logits: Tensor<T>,
    pub row_logits: Tensor<T>,
    pub col_logits: Tensor<T>,
}

impl<T: Scalar> MultiHeadOutput<T> {
    pub fn batch_size(&self) -> usize {
        self.label_logits.shape()[0]
    }

    pub fn heads(&self) -> [&Tensor<T>; 3] {
        [&self.label_logits, &self.row_logits, &self.col_logits]
    }

    pub fn all_finite(&self) -> bool {
        self.heads().iter().all(|t| t.all_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { keep_prob: f64 },
    Eval,
}

struct StageCache<T> {
    patches: Patches<T>,
    activated: Tensor<T>,
    mask: PoolMask,
}

/// Intermediate values a training forward pass keeps for backward.
pub struct ForwardCache<T> {
    stages: Vec<StageCache<T>>,
    pooled_shape: Vec<usize>,
    flat: Tensor<T>,
    hidden: Tensor<T>,
    dropout: DropoutMask,
    dropped: Tensor<T>,
    /// Number of (image, conv layer) evaluations performed.
    pub conv_evaluations: usize,
}

impl<T: Scalar> ForwardCache<T> {
    /// Digest of every piecewise-linear branch taken: ReLU signs, pooling
    /// winners and dropout keeps. Two passes with equal digests lie on the
    /// same linear piece of the trunk.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = Fnv::default();
        for stage in &self.stages {
            stage.activated.data().iter().for_each(|&v| h.bit(v > T::ZERO));
            stage.mask.winners().iter().for_each(|&w| h.word(w as u64));
        }
        self.hidden.data().iter().for_each(|&v| h.bit(v > T::ZERO));
        self.dropout.kept.iter().for_each(|&k| h.bit(k));
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn word(&mut self, v: u64) {
        for byte in v.to_le_bytes() {
            self.0 = (self.0 ^ byte as u64).wrapping_mul(0x100_0000_01b3);
        }
    }

    fn bit(&mut self, b: bool) {
        self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BackwardOptions {
    /// Flips the sign of the label-head bias gradient. Negative control for
    /// the gradient checker.
    pub inject_fault: bool,
}

pub const FAULT_PARAM: &str = "head_label.bias";

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    config: ModelConfig,
    params: Vec<ParamTensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u16,
    pub row: u16,
    pub col: u16,
    pub label_confidence: f64,
    pub row_confidence: f64,
    pub col_confidence: f64,
    /// Whether the predicted label sits at the predicted `(row, col)`.
    pub consistent: bool,
}

const HEAD_NAMES: [&str; 3] = ["head_label", "head_row", "head_col"];

impl<T: Scalar> Network<T> {
    /// Fan-in scaled uniform initialization, `U(-b, b)` with
    /// `b = sqrt(6 / fan_in)`; biases start at zero.
    pub fn build(config: &ModelConfig, grid: &AlphabetGrid, seed: u64) -> Result<Self> {
        config.validate(Some(grid))?;
        Self::build_unchecked_grid(config, seed)
    }

    /// Like [`Network::build`] without binding head sizes to a grid.
    pub fn build_unchecked_grid(config: &ModelConfig, seed: u64) -> Result<Self> {
        let trace = config.validate(None)?;
        let mut rng = RngStream::new(seed, domain::INIT);
        let mut params = Vec::new();
        let mut init = |name: String, shape: &[usize], fan_in: usize, rng: &mut RngStream| {
            let bound = libm::sqrt(6.0 / fan_in as f64);
            let w = Tensor::from_fn(shape, |_| T::from_f64(rng.uniform_in(-bound, bound)));
            let b = Tensor::zeros(&shape[shape.len() - 1..]);
            params.push(ParamTensor::new(format!("{name}.weight"), ParamRole::Weight, w));
            params.push(ParamTensor::new(format!("{name}.bias"), ParamRole::Bias, b));
        };
        let mut cin = 1;
        for (i, s) in config.conv_stages.iter().enumerate() {
            let n = s.filter_size;
            init(format!("conv{}", i + 1), &[n, n, cin, s.filters], n * n * cin, &mut rng);
            cin = s.filters;
        }
        init("hidden".into(), &[trace.flatten, config.hidden], trace.flatten, &mut rng);
        let heads = [config.heads.labels, config.heads.rows, config.heads.cols];
        for (name, size) in HEAD_NAMES.iter().zip(heads) {
            init((*name).into(), &[config.hidden, size], config.hidden, &mut rng);
        }
        Ok(Self {
            config: config.clone(),
            params,
        })
    }

    /// Reassembles a network from named tensors, e.g. a loaded checkpoint.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut net = Self::build_unchecked_grid(config, 0)?;
        if tensors.len() != net.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                net.params.len(),
                tensors.len()
            )));
        }
        for (name, value) in tensors {
            let p = net
                .params
                .iter_mut()
                .find(|p| p.name == name)
                .ok_or_else(|| Error::Config(format!("unexpected parameter {name}")))?;
            if p.value.shape() != value.shape() {
                return Err(Error::dim("Network::from_tensors", p.value.shape(), value.shape()));
            }
            p.value = value;
        }
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Trunk first, then label, row and column heads.
    pub fn params(&self) -> &[ParamTensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.iter().map(ParamTensor::cast).collect(),
        }
    }

    /// Head index (0 label, 1 row, 2 column) a parameter belongs to.
    pub fn head_of(name: &str) -> Option<usize> {
        HEAD_NAMES.iter().position(|h| name.strip_prefix(h).is_some_and(|r| r.starts_with('.')))
    }

    fn stage_params(&self, i: usize) -> (&Tensor<T>, &Tensor<T>) {
        (&self.params[2 * i].value, &self.params[2 * i + 1].value)
    }

    fn dense_index(&self, layer: usize) -> usize {
        2 * self.config.conv_stages.len() + 2 * layer
    }

    /// Forward pass over a `[B, S, S, 1]` batch (or a single `[S, S, 1]`
    /// image). Dropout draws from `rng` only in training mode.
    pub fn forward(&self, images: &Tensor<T>, mode: Mode, rng: &mut RngStream) -> Result<(MultiHeadOutput<T>, ForwardCache<T>)> {
        let s = self.config.canvas;
        let batch = match *images.shape() {
            [h, w, 1] if h == s && w == s => 1,
            [b, h, w, 1] if h == s && w == s => b,
            _ => return Err(Error::dim("Network::forward", images.shape(), &[s, s, 1])),
        };
        let mut x = if images.rank() == 3 {
            images.clone().reshape(&[1, s, s, 1])?
        } else {
            images.clone()
        };
        let mut stages = Vec::with_capacity(self.config.conv_stages.len());
        let mut conv_evaluations = 0;
        for i in 0..self.config.conv_stages.len() {
            let (w, b) = self.stage_params(i);
            let (mut y, patches) = conv2d_forward_with_patches(&x, w, b)?;
            conv_evaluations += batch;
            relu_in_place(&mut y);
            let (pooled, mask) = maxpool2_forward(&y)?;
            stages.push(StageCache { patches, activated: y, mask });
            x = pooled;
        }
        let pooled_shape = x.shape().to_vec();
        let flat_width = x.len() / batch;
        let flat = x.reshape(&[batch, flat_width])?;

        let hi = self.dense_index(0);
        let mut hidden = dense_forward(&flat, &self.params[hi].value, &self.params[hi + 1].value)?;
        relu_in_place(&mut hidden);
        let (dropped, dmask) = match mode {
            Mode::Train { keep_prob } => dropout(&hidden, keep_prob, rng, true)?,
            Mode::Eval => dropout(&hidden, 1.0, rng, false)?,
        };

        let mut logits = Vec::with_capacity(3);
        for head in 0..3 {
            let k = self.dense_index(1 + head);
            logits.push(dense_forward(&dropped, &self.params[k].value, &self.params[k + 1].value)?);
        }
        let col_logits = logits.pop().expect("three heads");
        let row_logits = logits.pop().expect("three heads");
        let label_logits = logits.pop().expect("three heads");
        Ok((
            MultiHeadOutput {
                label_logits,
                row_logits,
                col_logits,
            },
            ForwardCache {
                stages,
                pooled_shape,
                flat,
                hidden,
                dropout: dmask,
                dropped,
                conv_evaluations,
            },
        ))
    }

    /// Evaluation-mode forward pass; a pure function of parameters and input.
    pub fn forward_eval(&self, images: &Tensor<T>) -> Result<MultiHeadOutput<T>> {
        let mut unused = RngStream::new(0, 0);
        self.forward(images, Mode::Eval, &mut unused).map(|(o, _)| o)
    }

    /// Accumulates parameter gradients (`+=`) for upstream logit gradients.
    pub fn backward(&mut self, cache: ForwardCache<T>, grads: &MultiHeadOutput<T>) -> Result<()> {
        self.backward_with(cache, grads, BackwardOptions::default())
    }

    pub fn backward_with(&mut self, cache: ForwardCache<T>, grads: &MultiHeadOutput<T>, options: BackwardOptions) -> Result<()> {
        let ForwardCache {
            stages,
            pooled_shape,
            flat,
            hidden,
            dropout: dmask,
            dropped,
            ..
        } = cache;

        let mut g_dropped: Option<Tensor<T>> = None;
        for (head, g) in grads.heads().into_iter().enumerate() {
            let k = self.dense_index(1 + head);
            let dg = dense_backward(g, &dropped, &self.params[k].value)?;
            accumulate(&mut self.params[k].grad, &dg.weights);
            if options.inject_fault && head == 0 {
                accumulate(&mut self.params[k + 1].grad, &dg.bias.map(|v| -v));
            } else {
                accumulate(&mut self.params[k + 1].grad, &dg.bias);
            }
            match &mut g_dropped {
                None => g_dropped = Some(dg.input),
                Some(acc) => accumulate(acc, &dg.input),
            }
        }
        let g_hidden = dropout_backward(&g_dropped.expect("three heads"), &dmask)?;
        let g_hidden = relu_backward(&g_hidden, &hidden)?;
        let hi = self.dense_index(0);
        let dg = dense_backward(&g_hidden, &flat, &self.params[hi].value)?;
        accumulate(&mut self.params[hi].grad, &dg.weights);
        accumulate(&mut self.params[hi + 1].grad, &dg.bias);

        let mut g = dg.input.reshape(&pooled_shape)?;
        for (i, stage) in stages.iter().enumerate().rev() {
            let g_act = maxpool2_backward(&g, &stage.mask)?;
            let g_pre = relu_backward(&g_act, &stage.activated)?;
            let cg = conv2d_backward_from_patches(&g_pre, &stage.patches, &self.params[2 * i].value, i > 0)?;
            accumulate(&mut self.params[2 * i].grad, &cg.filters);
            accumulate(&mut self.params[2 * i + 1].grad, &cg.bias);
            if let Some(gi) = cg.input {
                g = gi;
            }
        }
        Ok(())
    }

    /// Independent per-head argmax with softmax confidence.
    pub fn predict(&self, image: &Tensor<T>, grid: &AlphabetGrid) -> Result<Prediction> {
        let out = self.forward_eval(image)?;
        let pick = |t: &Tensor<T>| {
            let p = softmax(t.data());
            let i = crate::tensor::argmax(&p);
            (i as u16 + 1, p[i].to_f64())
        };
        let (label, label_confidence) = pick(&out.label_logits);
        let (row, row_confidence) = pick(&out.row_logits);
        let (col, col_confidence) = pick(&out.col_logits);
        let consistent = grid.label_to_grid(label).is_ok_and(|cell| cell == (row, col));
        Ok(Prediction {
            label,
            row,
            col,
            label_confidence,
            row_confidence,
            col_confidence,
            consistent,
        })
    }
}

fn accumulate<T: Scalar>(acc: &mut Tensor<T>, g: &Tensor<T>) {
    debug_assert_eq!(acc.len(), g.len());
    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}
