//! Fully-connected ReLU network engine.
//!
//! A network is described by an [`MlpConfig`] and its parameters live in a
//! flat [`WeightVector`]. Keeping every parameter in one contiguous buffer
//! lets the curve code treat networks as points of `R^|net|`: a point on a
//! curve is just an affine combination of buffers sharing one [`Layout`].
//!
//! Hidden layer `l` computes `relu(bn(a W_lᵀ + b_l))`, where `bn` is the
//! optional batch normalization `γ (x − μ) / (σ + ε) + β`. The output layer
//! is a plain affine map producing logits.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical-stability constant added to the batch standard deviation.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Input width, hidden widths, then the number of classes.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub batch_norm: bool,
    /// Coefficient of the squared norm of the weight matrices added to the loss.
    #[serde(default)]
    pub l2_coeff: f64,
}

impl MlpConfig {
    pub fn new(layer_sizes: Vec<usize>, batch_norm: bool, l2_coeff: f64) -> Result<Self> {
        let config = MlpConfig {
            layer_sizes,
            activation: Activation::Relu,
            batch_norm,
            l2_coeff,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(
                "at least an input and an output layer are required".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        if self.class_count() < 2 {
            return Err(Error::InvalidConfig(
                "output layer needs at least two classes".into(),
            ));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l2_coeff must be finite and non-negative, got {}",
                self.l2_coeff
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    /// Number of affine layers (`n` in the `tⁿ` logit scaling identity).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn has_bn_layer(&self, layer: usize) -> bool {
        self.batch_norm && layer + 1 < self.num_layers()
    }

    pub fn layout(&self) -> Arc<Layout> {
        Arc::new(Layout::for_config(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

/// One contiguous block of a [`WeightVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub layer: usize,
    pub kind: ParamKind,
    /// `(rows, cols)`; vectors are stored as `(len, 1)`.
    pub shape: (usize, usize),
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    blocks: Vec<ParamBlock>,
    param_count: usize,
}

impl Layout {
    /// Per layer: weight matrix `(out, in)`, bias, then BN scale and shift
    /// for hidden layers when batch normalization is on.
    pub fn for_config(config: &MlpConfig) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |layer, kind, shape: (usize, usize)| {
            blocks.push(ParamBlock {
                layer,
                kind,
                shape,
                offset,
            });
            offset += shape.0 * shape.1;
        };
        for (layer, pair) in config.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            push(layer, ParamKind::Weight, (fan_out, fan_in));
            push(layer, ParamKind::Bias, (fan_out, 1));
            if config.has_bn_layer(layer) {
                push(layer, ParamKind::BnScale, (fan_out, 1));
                push(layer, ParamKind::BnShift, (fan_out, 1));
            }
        }
        let param_count = blocks.iter().map(ParamBlock::len).sum();
        Layout {
            blocks,
            param_count,
        }
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn block(&self, layer: usize, kind: ParamKind) -> Option<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| b.layer == layer && b.kind == kind)
    }
}

/// Owned parameters of one layer, the unflattened form of a [`WeightVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn: Option<(Array1<f64>, Array1<f64>)>,
}

/// A point in weight space: flat values plus the layout that gives them meaning.
#[derive(Debug, Clone)]
pub struct WeightVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl PartialEq for WeightVector {
    fn eq(&self, other: &Self) -> bool {
        self.same_layout(other) && self.values == other.values
    }
}

impl WeightVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        WeightVector {
            values: vec![0.0; layout.param_count()],
            layout,
        }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::DimensionMismatch {
                what: "weight vector",
                expected: layout.param_count(),
                found: values.len(),
            });
        }
        Ok(WeightVector { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &WeightVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn check_layout(&self, other: &WeightVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    pub fn block(&self, layer: usize, kind: ParamKind) -> Option<&[f64]> {
        let block = self.layout.block(layer, kind)?;
        Some(&self.values[block.range()])
    }

    pub fn block_mut(&mut self, layer: usize, kind: ParamKind) -> Option<&mut [f64]> {
        let range = self.layout.block(layer, kind)?.range();
        Some(&mut self.values[range])
    }

    pub fn matrix(&self, layer: usize) -> Option<ArrayView2<'_, f64>> {
        let block = self.layout.block(layer, ParamKind::Weight)?;
        ArrayView2::from_shape(block.shape, &self.values[block.range()]).ok()
    }

    pub fn vector(&self, layer: usize, kind: ParamKind) -> Option<ArrayView1<'_, f64>> {
        self.block(layer, kind).map(ArrayView1::from)
    }

    pub fn dot(&self, other: &WeightVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &WeightVector) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn sub(&self, other: &WeightVector) -> WeightVector {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        WeightVector {
            values,
            layout: self.layout.clone(),
        }
    }

    pub fn distance(&self, other: &WeightVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Squared norm of the weight-matrix blocks only (the regularized part).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layout
            .blocks()
            .iter()
            .filter(|b| b.kind == ParamKind::Weight)
            .flat_map(|b| self.values[b.range()].iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn unflatten(&self) -> Vec<LayerParams> {
        let num_layers = self
            .layout
            .blocks()
            .iter()
            .map(|b| b.layer + 1)
            .max()
            .unwrap_or(0);
        (0..num_layers)
            .map(|layer| LayerParams {
                weight: self.matrix(layer).expect("weight block").to_owned(),
                bias: self
                    .vector(layer, ParamKind::Bias)
                    .expect("bias block")
                    .to_owned(),
                bn: self.vector(layer, ParamKind::BnScale).map(|scale| {
                    let shift = self.vector(layer, ParamKind::BnShift).expect("bn shift");
                    (scale.to_owned(), shift.to_owned())
                }),
            })
            .collect()
    }

    pub fn flatten(layout: Arc<Layout>, layers: &[LayerParams]) -> Result<Self> {
        let mut out = WeightVector::zeros(layout);
        let blocks = out.layout.blocks().to_vec();
        for block in blocks {
            let layer = layers.get(block.layer).ok_or(Error::LayoutMismatch)?;
            let source: Vec<f64> = match block.kind {
                ParamKind::Weight => layer.weight.iter().copied().collect(),
                ParamKind::Bias => layer.bias.to_vec(),
                ParamKind::BnScale => layer.bn.as_ref().ok_or(Error::LayoutMismatch)?.0.to_vec(),
                ParamKind::BnShift => layer.bn.as_ref().ok_or(Error::LayoutMismatch)?.1.to_vec(),
            };
            if source.len() != block.len() {
                return Err(Error::DimensionMismatch {
                    what: "layer parameters",
                    expected: block.len(),
                    found: source.len(),
                });
            }
            out.values[block.range()].copy_from_slice(&source);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnLayerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Statistics used by batch-normalized hidden layers in eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormStats {
    pub layers: Vec<BnLayerStats>,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    /// Normalize with the statistics of the batch being processed.
    Train,
    Eval(&'a BatchNormStats),
}

/// Inputs paired with class labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    inputs: ArrayView2<'a, f64>,
    labels: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: ArrayView2<'a, f64>, labels: &'a [usize]) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "batch labels",
                expected: inputs.nrows(),
                found: labels.len(),
            });
        }
        Ok(Batch { inputs, labels })
    }

    pub fn inputs(&self) -> ArrayView2<'a, f64> {
        self.inputs
    }

    pub fn labels(&self) -> &'a [usize] {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, config: &MlpConfig) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        check_inputs(config, self.inputs)?;
        let classes = config.class_count();
        if let Some((row, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes,
            });
        }
        Ok(())
    }
}

/// A mini-batch gathered from a larger dataset.
#[derive(Debug, Clone)]
pub struct OwnedBatch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

impl OwnedBatch {
    pub fn gather(batch: Batch<'_>, rows: &[usize]) -> Self {
        OwnedBatch {
            inputs: batch.inputs.select(Axis(0), rows),
            labels: rows.iter().map(|&r| batch.labels[r]).collect(),
        }
    }

    pub fn view(&self) -> Batch<'_> {
        Batch {
            inputs: self.inputs.view(),
            labels: &self.labels,
        }
    }
}

fn check_inputs(config: &MlpConfig, inputs: ArrayView2<'_, f64>) -> Result<()> {
    if inputs.ncols() != config.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input features",
            expected: config.input_dim(),
            found: inputs.ncols(),
        });
    }
    Ok(())
}

fn check_weights(w: &WeightVector, config: &MlpConfig) -> Result<()> {
    let expected = Layout::for_config(config);
    if **w.layout() != expected {
        return Err(Error::DimensionMismatch {
            what: "weight layout",
            expected: expected.param_count(),
            found: w.len(),
        });
    }
    Ok(())
}

/// He fan-in initialization: `W ~ N(0, 2 / fan_in)`, zero biases, `γ = 1`, `β = 0`.
pub fn init_params(config: &MlpConfig, seed: u64) -> WeightVector {
    let layout = config.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = WeightVector::zeros(layout.clone());
    for block in layout.blocks() {
        let slot = &mut w.values[block.range()];
        match block.kind {
            ParamKind::Weight => {
                let std = (2.0 / block.shape.1 as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                slot.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            }
            ParamKind::BnScale => slot.fill(1.0),
            ParamKind::Bias | ParamKind::BnShift => slot.fill(0.0),
        }
    }
    w
}

struct BnCache {
    xhat: Array2<f64>,
    mean: Array1<f64>,
    std: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    /// Input of the ReLU (post-BN when BN is on); unused for the output layer.
    relu_in: Array2<f64>,
    bn: Option<BnCache>,
}

struct ForwardPass {
    logits: Array2<f64>,
    caches: Vec<LayerCache>,
}

fn forward_pass(
    w: &WeightVector,
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
    mode: BnMode<'_>,
    keep_cache: bool,
) -> Result<ForwardPass> {
    let num_layers = config.num_layers();
    let mut caches = Vec::with_capacity(if keep_cache { num_layers } else { 0 });
    let mut act = inputs.to_owned();
    let mut bn_index = 0;
    for layer in 0..num_layers {
        let weight = w.matrix(layer).ok_or(Error::LayoutMismatch)?;
        let bias = w
            .vector(layer, ParamKind::Bias)
            .ok_or(Error::LayoutMismatch)?;
        let mut pre = act.dot(&weight.t());
        pre += &bias;
        if layer + 1 == num_layers {
            if keep_cache {
                caches.push(LayerCache {
                    input: act,
                    relu_in: Array2::zeros((0, 0)),
                    bn: None,
                });
            }
            return Ok(ForwardPass {
                logits: pre,
                caches,
            });
        }
        let mut bn_cache = None;
        let relu_in = if config.has_bn_layer(layer) {
            let (mean, std) = match mode {
                BnMode::Train => {
                    // shifted by the first row so constant columns get σ = 0 exactly
                    let m = pre.nrows() as f64;
                    let first = pre.row(0).to_owned();
                    let mean = (&pre - &first).sum_axis(Axis(0)) / m + &first;
                    let centered = &pre - &mean;
                    let var = centered.mapv(|x| x * x).sum_axis(Axis(0)) / m;
                    (mean, var.mapv(f64::sqrt))
                }
                BnMode::Eval(stats) => {
                    let layer_stats = stats
                        .layers
                        .get(bn_index)
                        .ok_or(Error::MissingBatchNormStats)?;
                    if layer_stats.mean.len() != pre.ncols() || layer_stats.std.len() != pre.ncols()
                    {
                        return Err(Error::DimensionMismatch {
                            what: "batch-norm statistics",
                            expected: pre.ncols(),
                            found: layer_stats.mean.len(),
                        });
                    }
                    (
                        Array1::from(layer_stats.mean.clone()),
                        Array1::from(layer_stats.std.clone()),
                    )
                }
            };
            bn_index += 1;
            let denom = std.mapv(|s| s + BN_EPS);
            let xhat = (&pre - &mean) / &denom;
            let gamma = w
                .vector(layer, ParamKind::BnScale)
                .ok_or(Error::LayoutMismatch)?;
            let beta = w
                .vector(layer, ParamKind::BnShift)
                .ok_or(Error::LayoutMismatch)?;
            let out = &xhat * &gamma + beta;
            bn_cache = Some(BnCache { xhat, mean, std });
            out
        } else {
            pre
        };
        let next = relu_in.mapv(|x| x.max(0.0));
        if keep_cache {
            caches.push(LayerCache {
                input: act,
                relu_in,
                bn: bn_cache,
            });
        } else if let Some(cache) = bn_cache {
            // Statistics are still needed by `bn_recompute_stats`.
            caches.push(LayerCache {
                input: Array2::zeros((0, 0)),
                relu_in: Array2::zeros((0, 0)),
                bn: Some(cache),
            });
        }
        act = next;
    }
    unreachable!("config has at least one layer")
}

/// Logits for `inputs`, shape `(rows, classes)`.
pub fn forward(
    w: &WeightVector,
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
    mode: BnMode<'_>,
) -> Result<Array2<f64>> {
    check_weights(w, config)?;
    check_inputs(config, inputs)?;
    if inputs.nrows() == 0 {
        return Ok(Array2::zeros((0, config.class_count())));
    }
    Ok(forward_pass(w, config, inputs, mode, false)?.logits)
}

fn log_softmax_row(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    row.mapv(|x| x - lse)
}

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut probs = logits.to_owned();
    for mut row in probs.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    probs
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| -log_softmax_row(row)[y])
        .sum();
    total / labels.len() as f64
}

/// Regularized training loss and its gradient.
///
/// Loss is the batch-mean cross-entropy plus `λ‖W‖²` over the weight
/// matrices. Batch-normalized layers use the statistics of `batch`.
pub fn loss_and_grad(
    w: &WeightVector,
    config: &MlpConfig,
    batch: Batch<'_>,
) -> Result<(f64, WeightVector)> {
    check_weights(w, config)?;
    batch.check(config)?;
    let pass = forward_pass(w, config, batch.inputs, BnMode::Train, true)?;
    let m = batch.len() as f64;

    let mut delta = softmax(pass.logits.view());
    for (mut row, &y) in delta.rows_mut().into_iter().zip(batch.labels) {
        row[y] -= 1.0;
    }
    delta /= m;
    let ce = cross_entropy(pass.logits.view(), batch.labels);
    let loss = ce + config.l2_coeff * w.weight_sq_norm();

    let mut grad = WeightVector::zeros(w.layout().clone());
    let num_layers = config.num_layers();
    for (layer, cache) in pass.caches.iter().enumerate().rev() {
        if layer + 1 < num_layers {
            // delta is currently dL/d(relu output)
            let mut d_relu = delta;
            d_relu.zip_mut_with(&cache.relu_in, |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = match &cache.bn {
                Some(bn) => {
                    let gamma = w
                        .vector(layer, ParamKind::BnScale)
                        .ok_or(Error::LayoutMismatch)?;
                    let d_gamma = (&d_relu * &bn.xhat).sum_axis(Axis(0));
                    let d_beta = d_relu.sum_axis(Axis(0));
                    grad.block_mut(layer, ParamKind::BnScale)
                        .ok_or(Error::LayoutMismatch)?
                        .copy_from_slice(d_gamma.as_slice().expect("contiguous"));
                    grad.block_mut(layer, ParamKind::BnShift)
                        .ok_or(Error::LayoutMismatch)?
                        .copy_from_slice(d_beta.as_slice().expect("contiguous"));
                    bn_backward(&(&d_relu * &gamma), bn)
                }
                None => d_relu,
            };
        }
        // delta is dL/d(pre-activation) of this layer
        let weight = w.matrix(layer).ok_or(Error::LayoutMismatch)?;
        let mut d_weight = delta.t().dot(&cache.input);
        d_weight.scaled_add(2.0 * config.l2_coeff, &weight);
        let d_bias = delta.sum_axis(Axis(0));
        grad.block_mut(layer, ParamKind::Weight)
            .ok_or(Error::LayoutMismatch)?
            .iter_mut()
            .zip(d_weight.iter())
            .for_each(|(g, &d)| *g = d);
        grad.block_mut(layer, ParamKind::Bias)
            .ok_or(Error::LayoutMismatch)?
            .copy_from_slice(d_bias.as_slice().expect("contiguous"));
        if layer > 0 {
            delta = delta.dot(&weight);
        } else {
            break;
        }
    }
    Ok((loss, grad))
}

/// Backward pass through `x̂ = (x − μ) / (σ + ε)` with batch statistics.
/// `d_xhat` is the gradient w.r.t. `x̂`.
fn bn_backward(d_xhat: &Array2<f64>, bn: &BnCache) -> Array2<f64> {
    let m = d_xhat.nrows() as f64;
    let mut out = Array2::zeros(d_xhat.raw_dim());
    for j in 0..d_xhat.ncols() {
        let sigma = bn.std[j];
        let s = sigma + BN_EPS;
        let h = d_xhat.column(j);
        let xhat = bn.xhat.column(j);
        // centered input d = x̂ s
        let mut e: Array1<f64> = h.mapv(|v| v / s);
        if sigma > 0.0 {
            let h_dot_d: f64 = h.iter().zip(xhat.iter()).map(|(a, b)| a * b * s).sum();
            let coeff = h_dot_d / (s * s * m * sigma);
            e.zip_mut_with(&xhat, |ei, &xh| *ei -= coeff * xh * s);
        }
        let mean_e = e.sum() / m;
        out.column_mut(j).assign(&e.mapv(|v| v - mean_e));
    }
    out
}

/// Result of evaluating a network on a labeled dataset.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub error_rate: f64,
    pub mean_nll: f64,
    pub probabilities: Array2<f64>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Array2<f64>, labels: &[usize]) -> Self {
        let n = labels.len() as f64;
        let mut wrong = 0usize;
        let mut nll = 0.0;
        for (row, &y) in probabilities.rows().into_iter().zip(labels) {
            if argmax(row) != y {
                wrong += 1;
            }
            nll -= row[y].ln();
        }
        Prediction {
            error_rate: wrong as f64 / n,
            mean_nll: nll / n,
            probabilities,
        }
    }

    pub fn predicted_labels(&self) -> Vec<usize> {
        self.probabilities.rows().into_iter().map(argmax).collect()
    }
}

/// Error rate, mean negative log-likelihood and class probabilities.
///
/// Batch-normalized networks need `stats`; use [`bn_recompute_stats`] on the
/// training data to obtain them.
pub fn predict_eval(
    w: &WeightVector,
    config: &MlpConfig,
    data: Batch<'_>,
    stats: Option<&BatchNormStats>,
) -> Result<Prediction> {
    data.check(config)?;
    let logits = eval_logits(w, config, data.inputs, stats)?;
    let n = data.len() as f64;
    let mut wrong = 0usize;
    let mut nll = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(data.labels) {
        if argmax(row) != y {
            wrong += 1;
        }
        nll -= log_softmax_row(row)[y];
    }
    Ok(Prediction {
        error_rate: wrong as f64 / n,
        mean_nll: nll / n,
        probabilities: softmax(logits.view()),
    })
}

/// Logits in eval mode, requiring statistics exactly when BN is on.
pub fn eval_logits(
    w: &WeightVector,
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
    stats: Option<&BatchNormStats>,
) -> Result<Array2<f64>> {
    match (config.batch_norm, stats) {
        (true, None) => Err(Error::MissingBatchNormStats),
        (true, Some(stats)) => forward(w, config, inputs, BnMode::Eval(stats)),
        (false, _) => forward(w, config, inputs, BnMode::Train),
    }
}

/// Full-dataset mean and biased standard deviation of every BN layer's input,
/// computed in one pass where each layer is normalized with the statistics
/// just computed for it.
pub fn bn_recompute_stats(
    w: &WeightVector,
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
) -> Result<BatchNormStats> {
    if !config.batch_norm {
        return Err(Error::BatchNormDisabled);
    }
    check_weights(w, config)?;
    check_inputs(config, inputs)?;
    if inputs.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let pass = forward_pass(w, config, inputs, BnMode::Train, false)?;
    let layers = pass
        .caches
        .into_iter()
        .filter_map(|c| c.bn)
        .map(|bn| BnLayerStats {
            mean: bn.mean.to_vec(),
            std: bn.std.to_vec(),
        })
        .collect();
    Ok(BatchNormStats {
        layers,
        eps: BN_EPS,
    })
}

/// Stats when the network needs them, `None` otherwise.
pub fn stats_if_needed(
    w: &WeightVector,
    config: &MlpConfig,
    inputs: ArrayView2<'_, f64>,
) -> Result<Option<BatchNormStats>> {
    if config.batch_norm {
        bn_recompute_stats(w, config, inputs).map(Some)
    } else {
        Ok(None)
    }
}

/// Regularized loss on a whole dataset in eval mode.
pub fn full_loss(
    w: &WeightVector,
    config: &MlpConfig,
    data: Batch<'_>,
    stats: Option<&BatchNormStats>,
) -> Result<f64> {
    data.check(config)?;
    let logits = eval_logits(w, config, data.inputs, stats)?;
    Ok(cross_entropy(logits.view(), data.labels) + config.l2_coeff * w.weight_sq_norm())
}
