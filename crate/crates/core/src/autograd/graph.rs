//! Dynamic computation graph with reverse-mode backward and per-node
//! gradient transforms.
//!
//! A [`Graph`] is an append-only tape: every op records its output value and
//! the nodes it consumed, so node indices are already a topological order.
//! It is built fresh for every forward pass and dropped after `backward`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kernels::{self, BnSaved, ConvGeom, PoolGeom};
use crate::error::{bail, Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Identity of a trainable parameter; keys a [`GradientMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Unique id of a model layer, assigned in forward order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LayerId(pub usize);

impl std::fmt::Display for LayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Input,
    Param,
    Mul,
    Add,
    Sum,
    Linear,
    Conv2d,
    BatchNorm,
    ReLU,
    MaxPool,
    AvgPool,
    ResidualAdd,
    Flatten,
    SoftmaxCE,
}

/// Where a node's gradient transform is applied during backward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpPoint {
    /// Scale every gradient the node emits after its local backward rule,
    /// including the gradients of the node's own parameters.
    #[default]
    InputSide,
    /// Scale the gradient arriving at the node's output, before the local rule.
    OutputSide,
    /// Like `InputSide`, but the node's own parameter gradients stay unscaled;
    /// only the flow towards data inputs is amplified.
    DataOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean/variance of a batch-norm layer. Variance is stored unbiased.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnParams {
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Mul,
    Add { residual: bool },
    Sum,
    Linear,
    Conv2d(ConvGeom),
    BatchNorm(BnSaved<T>),
    Relu,
    MaxPool { argmax: Vec<u32> },
    AvgPool(PoolGeom),
    Flatten,
    SoftmaxCe { probs: Vec<T>, labels: Vec<usize> },
}

impl<T> Op<T> {
    fn kind(&self) -> NodeKind {
        match self {
            Op::Input => NodeKind::Input,
            Op::Param(_) => NodeKind::Param,
            Op::Mul => NodeKind::Mul,
            Op::Add { residual: false } => NodeKind::Add,
            Op::Add { residual: true } => NodeKind::ResidualAdd,
            Op::Sum => NodeKind::Sum,
            Op::Linear => NodeKind::Linear,
            Op::Conv2d(_) => NodeKind::Conv2d,
            Op::BatchNorm(_) => NodeKind::BatchNorm,
            Op::Relu => NodeKind::ReLU,
            Op::MaxPool { .. } => NodeKind::MaxPool,
            Op::AvgPool(_) => NodeKind::AvgPool,
            Op::Flatten => NodeKind::Flatten,
            Op::SoftmaxCe { .. } => NodeKind::SoftmaxCE,
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<NodeId>,
    value: Option<Tensor<T>>,
    layer: Option<LayerId>,
    grad_transform: Option<f64>,
    requires_grad: bool,
}

/// Gradients keyed by parameter identity.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap<T = f32> {
    entries: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Scalar> GradientMap<T> {
    pub fn new() -> Self {
        GradientMap {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor<T>) {
        self.entries.insert(id, grad);
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: Scalar> Default for GradientMap<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    amp_point: AmpPoint,
    hooks_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            amp_point: AmpPoint::default(),
            hooks_enabled: true,
        }
    }

    pub fn with_amp_point(amp_point: AmpPoint) -> Self {
        Graph {
            amp_point,
            ..Self::new()
        }
    }

    /// When disabled, backward ignores every gradient transform.
    pub fn set_hooks_enabled(&mut self, enabled: bool) {
        self.hooks_enabled = enabled;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<NodeId>, value: Tensor<T>) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.push_leaf(op, inputs, value, requires_grad)
    }

    fn push_leaf(
        &mut self,
        op: Op<T>,
        inputs: Vec<NodeId>,
        value: Tensor<T>,
        requires_grad: bool,
    ) -> NodeId {
        self.nodes.push(Node {
            op,
            inputs,
            value: Some(value),
            layer: None,
            grad_transform: None,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node<T>> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("node {} not in graph", id.0)))
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor<T>> {
        self.node(id)?
            .value
            .as_ref()
            .ok_or_else(|| Error::State(format!("forward value of node {} was released", id.0)))
    }

    /// Gradient of the last backward's loss with respect to this node's value.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes
            .get(id.0)?
            .value
            .as_ref()?
            .grad
            .as_deref()
    }

    pub fn kind(&self, id: NodeId) -> Result<NodeKind> {
        Ok(self.node(id)?.op.kind())
    }

    pub fn layer_of(&self, id: NodeId) -> Option<LayerId> {
        self.nodes.get(id.0)?.layer
    }

    pub fn grad_transform(&self, id: NodeId) -> Option<f64> {
        self.nodes.get(id.0)?.grad_transform
    }

    /// Number of nodes currently carrying a gradient transform.
    pub fn transform_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.grad_transform.is_some())
            .count()
    }

    pub fn tag_layer(&mut self, id: NodeId, layer: LayerId) -> Result<()> {
        self.node(id)?;
        self.nodes[id.0].layer = Some(layer);
        Ok(())
    }

    /// Multiplies the gradient flowing through `id` by `factor` during
    /// backward. Re-attaching overwrites the previous factor.
    pub fn attach_grad_transform(&mut self, id: NodeId, factor: f64) -> Result<()> {
        validate_factor(factor)?;
        self.node(id)?;
        self.nodes[id.0].grad_transform = Some(factor);
        Ok(())
    }

    pub fn clear_grad_transforms(&mut self) {
        for n in &mut self.nodes {
            n.grad_transform = None;
        }
    }

    /// Drops every cached forward value; a later backward fails.
    pub fn release_cache(&mut self) {
        for n in &mut self.nodes {
            n.value = None;
        }
    }

    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push_leaf(Op::Input, vec![], value, true)
    }

    /// An input that never receives a gradient, such as a data batch.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push_leaf(Op::Input, vec![], value, false)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor<T>) -> NodeId {
        self.push_leaf(Op::Param(id), vec![], value, true)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        same_shape(va, vb, "mul")?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(va.shape(), data)?;
        Ok(self.push(Op::Mul, vec![a, b], out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.add_impl(a, b, false)
    }

    /// Skip-connection sum; identical arithmetic to [`Graph::add`] but tagged
    /// as a residual join.
    pub fn residual_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.add_impl(a, b, true)
    }

    fn add_impl(&mut self, a: NodeId, b: NodeId, residual: bool) -> Result<NodeId> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        same_shape(va, vb, "add")?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(va.shape(), data)?;
        Ok(self.push(Op::Add { residual }, vec![a, b], out))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total = self.value(a)?.sum();
        Ok(self.push(Op::Sum, vec![a], Tensor::scalar(total)))
    }

    /// `y = x·Wᵀ + b` for `x: [N, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (vx, vw, vb) = (self.value(x)?, self.value(w)?, self.value(b)?);
        let (n, d_in) = match vx.shape() {
            [n, d] => (*n, *d),
            s => bail!(Shape, "linear input must be [N, in], got {:?}", s),
        };
        let d_out = match vw.shape() {
            [o, i] if *i == d_in => *o,
            s => bail!(Shape, "linear weight {:?} incompatible with input width {}", s, d_in),
        };
        if vb.shape() != [d_out] {
            bail!(Shape, "linear bias {:?}, expected [{}]", vb.shape(), d_out);
        }
        let y = kernels::linear_forward(vx.data(), vw.data(), vb.data(), n, d_in, d_out);
        let out = Tensor::from_vec(&[n, d_out], y)?;
        Ok(self.push(Op::Linear, vec![x, w, b], out))
    }

    /// Zero-padded cross-correlation: `x: [N,C,H,W]`, `k: [F,C,kh,kw]`, `b: [F]`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (vx, vk, vb) = (self.value(x)?, self.value(k)?, self.value(b)?);
        let input = dims4(vx.shape(), "conv2d input")?;
        let [f, c, kh, kw] = dims4(vk.shape(), "conv2d kernel")?;
        if c != input[1] {
            bail!(Shape, "conv2d kernel has {} input channels, input has {}", c, input[1]);
        }
        if vb.shape() != [f] {
            bail!(Shape, "conv2d bias {:?}, expected [{}]", vb.shape(), f);
        }
        let geom = ConvGeom::new(input, f, kh, kw, stride, pad).ok_or_else(|| {
            Error::Shape(format!(
                "conv2d output extent non-positive for input {:?}, kernel {}x{}, stride {}, pad {}",
                input, kh, kw, stride, pad
            ))
        })?;
        let y = kernels::conv2d_forward(vx.data(), vk.data(), vb.data(), &geom);
        let out = Tensor::from_vec(&[geom.n, f, geom.oh, geom.ow], y)?;
        Ok(self.push(Op::Conv2d(geom), vec![x, k, b], out))
    }

    /// Per-channel batch normalization of `[N,C,H,W]` or `[N,C]` input.
    ///
    /// Train mode normalizes with biased batch statistics and folds them into
    /// `stats` by exponential averaging; eval mode normalizes with `stats`.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        stats: &mut RunningStats<T>,
        hyper: BnParams,
        mode: Mode,
    ) -> Result<NodeId> {
        let (vx, vg, vb) = (self.value(x)?, self.value(gamma)?, self.value(beta)?);
        let (n, channels, spatial) = match vx.shape() {
            [n, c] => (*n, *c, 1),
            [n, c, h, w] => (*n, *c, h * w),
            s => bail!(Shape, "batch_norm input must be [N,C] or [N,C,H,W], got {:?}", s),
        };
        if vg.shape() != [channels] || vb.shape() != [channels] {
            bail!(Shape, "batch_norm affine parameters must be [{}]", channels);
        }
        if stats.mean.len() != channels || stats.var.len() != channels {
            bail!(Shape, "running stats do not match {} channels", channels);
        }
        let eps = T::from_f64_lossy(hyper.eps);
        let (y, saved) = match mode {
            Mode::Train => {
                let count = n * spatial;
                if count < 2 {
                    bail!(
                        Argument,
                        "batch_norm in train mode needs at least 2 values per channel, got {}",
                        count
                    );
                }
                let (mean, var) = kernels::channel_moments(vx.data(), channels, spatial);
                let m = T::from_f64_lossy(hyper.momentum);
                let unbias = T::from_usize(count).unwrap() / T::from_usize(count - 1).unwrap();
                for c in 0..channels {
                    stats.mean[c] = (T::one() - m) * stats.mean[c] + m * mean[c];
                    stats.var[c] = (T::one() - m) * stats.var[c] + m * var[c] * unbias;
                }
                kernels::batchnorm_apply(
                    vx.data(),
                    &mean,
                    &var,
                    vg.data(),
                    vb.data(),
                    eps,
                    spatial,
                    true,
                )
            }
            Mode::Eval => kernels::batchnorm_apply(
                vx.data(),
                &stats.mean,
                &stats.var,
                vg.data(),
                vb.data(),
                eps,
                spatial,
                false,
            ),
        };
        let out = Tensor::from_vec(vx.shape(), y)?;
        Ok(self.push(Op::BatchNorm(saved), vec![x, gamma, beta], out))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let vx = self.value(x)?;
        let data = vx
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let out = Tensor::from_vec(vx.shape(), data)?;
        Ok(self.push(Op::Relu, vec![x], out))
    }

    pub fn max_pool(&mut self, x: NodeId, k: usize, stride: usize) -> Result<NodeId> {
        let vx = self.value(x)?;
        let input = dims4(vx.shape(), "max_pool input")?;
        let geom = pool_geom(input, k, stride)?;
        let (y, argmax) = kernels::maxpool_forward(vx.data(), &geom);
        let out = Tensor::from_vec(&[input[0], input[1], geom.oh, geom.ow], y)?;
        Ok(self.push(Op::MaxPool { argmax }, vec![x], out))
    }

    pub fn avg_pool(&mut self, x: NodeId, k: usize, stride: usize) -> Result<NodeId> {
        let vx = self.value(x)?;
        let input = dims4(vx.shape(), "avg_pool input")?;
        let geom = pool_geom(input, k, stride)?;
        let y = kernels::avgpool_forward(vx.data(), &geom);
        let out = Tensor::from_vec(&[input[0], input[1], geom.oh, geom.ow], y)?;
        Ok(self.push(Op::AvgPool(geom), vec![x], out))
    }

    /// Collapses all trailing axes: `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let vx = self.value(x)?;
        let n = vx.shape()[0];
        let mut out = vx.clone().reshape(&[n, vx.numel() / n])?;
        out.grad = None;
        Ok(self.push(Op::Flatten, vec![x], out))
    }

    /// Mean cross-entropy of `softmax(logits)` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let vl = self.value(logits)?;
        let (n, k) = match vl.shape() {
            [n, k] => (*n, *k),
            s => bail!(Shape, "logits must be [N, K], got {:?}", s),
        };
        if labels.len() != n {
            bail!(Shape, "{} labels for {} rows of logits", labels.len(), n);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            bail!(Argument, "label {} out of range 0..{}", bad, k);
        }
        let (loss, probs) = kernels::softmax_ce_forward(vl.data(), labels, k);
        Ok(self.push(
            Op::SoftmaxCe {
                probs,
                labels: labels.to_vec(),
            },
            vec![logits],
            Tensor::scalar(loss),
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every visited node's value tensor receives its gradient in `grad`.
    /// Returns the gradient of every parameter node in the graph, summed per
    /// [`ParamId`]; parameters the loss does not depend on get zeros.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradientMap<T>> {
        let root = self.value(loss)?;
        if root.numel() != 1 {
            bail!(Graph, "backward needs a scalar loss, node {} has shape {:?}", loss.0, root.shape());
        }
        let mut pending: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        pending[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(mut g) = pending[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if let Some(bad) = node.inputs.iter().find(|inp| inp.0 >= i) {
                bail!(Graph, "cycle: node {} consumes node {}", i, bad.0);
            }
            let transform = node
                .grad_transform
                .filter(|_| self.hooks_enabled)
                .filter(|&f| f != 1.0)
                .map(T::from_f64_lossy);
            if let (Some(f), AmpPoint::OutputSide) = (transform, self.amp_point) {
                scale(&mut g, f);
            }

            let mut input_grads = self.local_backward(i, &g)?;

            if let Some(f) = transform {
                match self.amp_point {
                    AmpPoint::InputSide => {
                        for (_, ig) in input_grads.iter_mut() {
                            scale(ig, f);
                        }
                    }
                    AmpPoint::DataOnly => {
                        for (inp, ig) in input_grads.iter_mut() {
                            if !matches!(self.nodes[inp.0].op, Op::Param(_)) {
                                scale(ig, f);
                            }
                        }
                    }
                    AmpPoint::OutputSide => {}
                }
            }
            for (inp, ig) in input_grads {
                if !self.nodes[inp.0].requires_grad {
                    continue;
                }
                match &mut pending[inp.0] {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(ig) {
                            *a = *a + v;
                        }
                    }
                    slot @ None => *slot = Some(ig),
                }
            }
            if let Some(v) = self.nodes[i].value.as_mut() {
                v.grad = Some(g);
            }
        }

        let mut map = GradientMap::new();
        for node in &self.nodes {
            if let Op::Param(id) = node.op {
                let value = node
                    .value
                    .as_ref()
                    .ok_or_else(|| Error::State("parameter value was released".into()))?;
                let grad = match (&value.grad, map.entries.remove(&id)) {
                    (Some(g), Some(mut prev)) => {
                        for (a, &v) in prev.data_mut().iter_mut().zip(g) {
                            *a = *a + v;
                        }
                        prev
                    }
                    (Some(g), None) => Tensor::from_vec(value.shape(), g.clone())?,
                    (None, Some(prev)) => prev,
                    (None, None) => Tensor::zeros(value.shape()),
                };
                map.insert(id, grad);
            }
        }
        Ok(map)
    }

    fn input_value(&self, i: usize, k: usize) -> Result<&Tensor<T>> {
        let id = self.nodes[i].inputs[k];
        self.nodes[id.0].value.as_ref().ok_or_else(|| {
            Error::State(format!("forward value of node {} missing for backward", id.0))
        })
    }

    /// Applies node `i`'s local rule to its output gradient `g`.
    fn local_backward(&self, i: usize, g: &[T]) -> Result<Vec<(NodeId, Vec<T>)>> {
        let node = &self.nodes[i];
        let out_value = node
            .value
            .as_ref()
            .ok_or_else(|| Error::State(format!("forward value of node {} missing", i)))?;
        let ins = &node.inputs;
        Ok(match &node.op {
            Op::Input | Op::Param(_) => vec![],
            Op::Mul => {
                let a = self.input_value(i, 0)?.data();
                let b = self.input_value(i, 1)?.data();
                let da = g.iter().zip(b).map(|(&gv, &bv)| gv * bv).collect();
                let db = g.iter().zip(a).map(|(&gv, &av)| gv * av).collect();
                vec![(ins[0], da), (ins[1], db)]
            }
            Op::Add { .. } => vec![(ins[0], g.to_vec()), (ins[1], g.to_vec())],
            Op::Sum => {
                let n = self.input_value(i, 0)?.numel();
                vec![(ins[0], vec![g[0]; n])]
            }
            Op::Flatten => vec![(ins[0], g.to_vec())],
            Op::Relu => {
                let dx = g
                    .iter()
                    .zip(out_value.data())
                    .map(|(&gv, &y)| if y > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![(ins[0], dx)]
            }
            Op::Linear => {
                let x = self.input_value(i, 0)?;
                let w = self.input_value(i, 1)?;
                let (n, d_in) = (x.shape()[0], x.shape()[1]);
                let d_out = w.shape()[0];
                let (dx, dw, db) = kernels::linear_backward(g, x.data(), w.data(), n, d_in, d_out);
                vec![(ins[0], dx), (ins[1], dw), (ins[2], db)]
            }
            Op::Conv2d(geom) => {
                let x = self.input_value(i, 0)?;
                let k = self.input_value(i, 1)?;
                let need_dx = self.nodes[ins[0].0].requires_grad;
                let (dx, dk, db) = kernels::conv2d_backward(g, x.data(), k.data(), geom, need_dx);
                let mut out = vec![(ins[1], dk), (ins[2], db)];
                if let Some(dx) = dx {
                    out.push((ins[0], dx));
                }
                out
            }
            Op::BatchNorm(saved) => {
                let gamma = self.input_value(i, 1)?;
                let (dx, dg, db) = kernels::batchnorm_backward(g, gamma.data(), saved);
                vec![(ins[0], dx), (ins[1], dg), (ins[2], db)]
            }
            Op::MaxPool { argmax } => {
                let n = self.input_value(i, 0)?.numel();
                vec![(ins[0], kernels::maxpool_backward(g, argmax, n))]
            }
            Op::AvgPool(geom) => vec![(ins[0], kernels::avgpool_backward(g, geom))],
            Op::SoftmaxCe { probs, labels } => {
                let k = probs.len() / labels.len();
                vec![(ins[0], kernels::softmax_ce_backward(g[0], probs, labels, k))]
            }
        })
    }

    #[cfg(test)]
    pub(crate) fn corrupt_inputs_for_test(&mut self, node: NodeId, inputs: Vec<NodeId>) {
        self.nodes[node.0].inputs = inputs;
    }
}

pub(crate) fn validate_factor(factor: f64) -> Result<()> {
    if !(factor.is_finite() && factor > 0.0) {
        bail!(Argument, "gradient transform factor must be finite and > 0, got {}", factor);
    }
    Ok(())
}

fn scale<T: Scalar>(g: &mut [T], f: T) {
    for v in g.iter_mut() {
        *v = *v * f;
    }
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        bail!(Shape, "{}: {:?} vs {:?}", op, a.shape(), b.shape());
    }
    Ok(())
}

fn dims4(shape: &[usize], what: &str) -> Result<[usize; 4]> {
    match shape {
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        s => bail!(Shape, "{} must be 4-D, got {:?}", what, s),
    }
}

fn pool_geom(input: [usize; 4], k: usize, stride: usize) -> Result<PoolGeom> {
    PoolGeom::new(input, k, stride).ok_or_else(|| {
        Error::Shape(format!(
            "pool window {} stride {} gives non-positive output for {:?}",
            k, stride, input
        ))
    })
}
