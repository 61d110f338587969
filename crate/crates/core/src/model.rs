//! Dense feed-forward network with forward/backward passes over arbitrary
//! contiguous layer ranges.
//!
//! Layers are numbered `1..=W`. Hidden layers apply ReLU; layer `W` emits raw
//! logits and the softmax is folded into [`softmax_cross_entropy`]. Activations
//! are row-major `(batch, features)` matrices of `f64`.
//!
//! Splitting a network between two parties is just two range passes: the
//! lower party runs `forward_range(1..=L)` and hands its output to the upper
//! party, which runs `forward_range(L+1..=W)`. Backward mirrors this with the
//! boundary gradient returned by [`ModelParams::backward_range`].

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Shape `(out_dim, in_dim)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Inclusive, 1-based range of layers `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerRange {
    first: usize,
    last: usize,
}

impl LayerRange {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if first == 0 || first > last {
            return Err(Error::InvalidInput(format!(
                "layer range {first}..={last} must satisfy 1 <= first <= last"
            )));
        }
        Ok(Self { first, last })
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, layer: usize) -> bool {
        (self.first..=self.last).contains(&layer)
    }

    pub fn layers(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

impl std::fmt::Display for LayerRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..={}", self.first, self.last)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    dims: Vec<usize>,
    layers: Vec<DenseLayer>,
}

impl ModelParams {
    /// Builds a `W = dims.len() - 1` layer MLP with fan-in scaled uniform
    /// weights in `[-sqrt(6/fan_in), sqrt(6/fan_in)]` and zero biases.
    pub fn init_mlp(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = rng::stream(seed, &[rng::TAG_INIT]);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
                DenseLayer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidInput("model has no layers".into()));
        };
        let mut dims = vec![first.in_dim()];
        for (idx, layer) in layers.iter().enumerate() {
            let expected_in = *dims.last().expect("non-empty");
            if layer.in_dim() != expected_in {
                return Err(Error::Shape(format!(
                    "layer {} expects input width {} but previous layer emits {}",
                    idx + 1,
                    layer.in_dim(),
                    expected_in
                )));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {} bias has {} entries for {} outputs",
                    idx + 1,
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            dims.push(layer.out_dim());
        }
        validate_dims(&dims)?;
        let model = Self { dims, layers };
        if !model.is_finite() {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(model)
    }

    /// Number of layers `W`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer widths, `W + 1` entries starting with the input width.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// 1-based layer access. Panics when `k` is outside `1..=W`.
    pub fn layer(&self, k: usize) -> &DenseLayer {
        &self.layers[k - 1]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut DenseLayer {
        &mut self.layers[k - 1]
    }

    pub fn full_range(&self) -> LayerRange {
        LayerRange {
            first: 1,
            last: self.num_layers(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.dims == other.dims
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_range(&self, range: LayerRange) -> Result<()> {
        if range.last > self.num_layers() {
            return Err(Error::InvalidInput(format!(
                "layer range {range} exceeds model depth {}",
                self.num_layers()
            )));
        }
        Ok(())
    }

    /// Runs layers `range` on `input`, returning the range output and the
    /// cache needed by [`ModelParams::backward_range`].
    pub fn forward_range(
        &self,
        range: LayerRange,
        input: &Array2<f64>,
    ) -> Result<(Array2<f64>, ActivationCache)> {
        self.check_range(range)?;
        let in_dim = self.dims[range.first - 1];
        if input.ncols() != in_dim {
            return Err(Error::Shape(format!(
                "layer {} expects {} input features, got {}",
                range.first,
                in_dim,
                input.ncols()
            )));
        }

        let mut pre = Vec::with_capacity(range.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(range.len());
        for k in range.layers() {
            let layer = self.layer(k);
            let prev = post.last().unwrap_or(input);
            let z = prev.dot(&layer.weight.t()) + &layer.bias;
            let a = if k < self.num_layers() {
                z.mapv(relu)
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(a);
        }
        let output = post.last().expect("range is non-empty").clone();
        Ok((
            output,
            ActivationCache {
                range,
                input: input.clone(),
                pre,
                post,
            },
        ))
    }

    /// Logits of the full network.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.forward_range(self.full_range(), input).map(|(out, _)| out)
    }

    /// Back-propagates `upstream` (the loss gradient w.r.t. the output of
    /// `cache.range().last()`) through the cached range.
    ///
    /// Returns unweighted gradients (`scale == 1`) for exactly the cached
    /// layers, and the gradient w.r.t. the range input. For a split network
    /// the latter is the boundary tensor sent back to the lower party.
    pub fn backward_range(
        &self,
        cache: &ActivationCache,
        upstream: &Array2<f64>,
    ) -> Result<(GradientSlice, Array2<f64>)> {
        let range = cache.range;
        self.check_range(range)?;
        let batch = cache.input.nrows();
        let out_dim = self.dims[range.last];
        if upstream.dim() != (batch, out_dim) {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, expected ({batch}, {out_dim})",
                upstream.dim()
            )));
        }
        for (offset, k) in range.layers().enumerate() {
            if cache.pre[offset].ncols() != self.dims[k] {
                return Err(Error::Shape(format!(
                    "cache for layer {k} has width {}, model has {}",
                    cache.pre[offset].ncols(),
                    self.dims[k]
                )));
            }
        }

        let mut grads = Vec::with_capacity(range.len());
        let mut delta = upstream.clone();
        for offset in (0..range.len()).rev() {
            let k = range.first + offset;
            let layer = self.layer(k);
            if k < self.num_layers() {
                Zip::from(&mut delta)
                    .and(&cache.pre[offset])
                    .for_each(|d, &z| *d *= relu_grad(z));
            }
            let prev = if offset == 0 {
                &cache.input
            } else {
                &cache.post[offset - 1]
            };
            let weight = delta.t().dot(prev);
            let bias = delta.sum_axis(Axis(0));
            let next = delta.dot(&layer.weight);
            grads.push(LayerGrad { weight, bias });
            delta = next;
        }
        grads.reverse();
        Ok((
            GradientSlice {
                range,
                grads,
                scale: 1.0,
            },
            delta,
        ))
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 layer widths (2 layers) to split a model, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidInput("layer widths must be >= 1".into()));
    }
    Ok(())
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Subgradient at 0 is 0.
#[inline]
fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Pre- and post-activations for a layer range.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    range: LayerRange,
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ActivationCache {
    pub fn range(&self) -> LayerRange {
        self.range
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.input
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn len(&self) -> usize {
        self.pre.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pre.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients for a contiguous layer range, with the aggregation weight of
/// the data owner already multiplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSlice {
    range: LayerRange,
    grads: Vec<LayerGrad>,
    scale: f64,
}

impl GradientSlice {
    pub fn range(&self) -> LayerRange {
        self.range
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn grad(&self, layer: usize) -> Option<&LayerGrad> {
        self.range
            .contains(layer)
            .then(|| &self.grads[layer - self.range.first])
    }

    pub fn grads(&self) -> &[LayerGrad] {
        &self.grads
    }

    /// Multiplies the gradients by an aggregation weight in `[0, 1]`.
    pub fn weighted(mut self, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidInput(format!(
                "aggregation weight {weight} outside [0, 1]"
            )));
        }
        for g in &mut self.grads {
            g.weight *= weight;
            g.bias *= weight;
        }
        self.scale *= weight;
        Ok(self)
    }

    fn check_against(&self, model: &ModelParams) -> Result<()> {
        model.check_range(self.range)?;
        for (k, g) in self.range.layers().zip(&self.grads) {
            let layer = model.layer(k);
            if g.weight.dim() != layer.weight.dim() || g.bias.len() != layer.bias.len() {
                return Err(Error::Shape(format!(
                    "gradient for layer {k} does not match the model's layer shape"
                )));
            }
        }
        Ok(())
    }
}

/// Applies cached, already-weighted gradient slices to `model`.
///
/// A layer covered by the slices moves by `-lr * sum(g)`; a layer in
/// `overlap` moves by `-2 * lr * sum(g)` and must be covered by both slices.
pub fn apply_cached_update(
    model: &mut ModelParams,
    own: &GradientSlice,
    partner: Option<&GradientSlice>,
    lr: f64,
    overlap: &BTreeSet<usize>,
) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::InvalidInput(format!("learning rate {lr} must be finite and >= 0")));
    }
    own.check_against(model)?;
    if let Some(p) = partner {
        p.check_against(model)?;
    }
    for &k in overlap {
        let in_both = own.range.contains(k) && partner.is_some_and(|p| p.range.contains(k));
        if !in_both {
            return Err(Error::Contract(format!(
                "overlap layer {k} must be covered by both gradient slices"
            )));
        }
    }

    for k in 1..=model.num_layers() {
        let own_g = own.grad(k);
        let partner_g = partner.and_then(|p| p.grad(k));
        let step = if overlap.contains(&k) { 2.0 * lr } else { lr };
        let layer = model.layer_mut(k);
        match (own_g, partner_g) {
            (None, None) => {}
            (Some(g), None) | (None, Some(g)) => {
                layer.weight.scaled_add(-step, &g.weight);
                layer.bias.scaled_add(-step, &g.bias);
            }
            (Some(a), Some(b)) => {
                layer.weight.scaled_add(-step, &(&a.weight + &b.weight));
                layer.bias.scaled_add(-step, &(&a.bias + &b.bias));
            }
        }
    }
    Ok(())
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if batch != labels.len() {
        return Err(Error::Shape(format!(
            "{batch} logit rows for {} labels",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    let mut grad = Array2::zeros((batch, classes));
    let mut total = 0.0;
    for (r, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[y];
        for (c, &v) in row.iter().enumerate() {
            grad[[r, c]] = (v - log_z).exp();
        }
        grad[[r, y]] -= 1.0;
    }
    let n = batch as f64;
    grad /= n;
    Ok((total / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Top-1 accuracy and mean cross-entropy of `model` on a labelled set.
pub fn evaluate(model: &ModelParams, features: &Array2<f64>, labels: &[usize]) -> Result<Evaluation> {
    let logits = model.forward(features)?;
    let (loss, _) = softmax_cross_entropy(&logits, labels)?;
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        loss,
    })
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
