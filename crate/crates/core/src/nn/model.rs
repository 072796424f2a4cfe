use std::collections::BTreeMap;

use crate::autograd::{
    validate_factor, AmpPoint, BnParams, Graph, LayerId, Mode, NodeId, NodeKind, ParamId,
    RunningStats,
};
use crate::error::{bail, Result};
use crate::nn::config::{ArchConfig, BlockSpec, BnHyper, LayerSpec, ResidualBlockSpec};
use crate::rng::{self, Domain};
use crate::tensor::{Scalar, Tensor};

/// Where a layer sits in the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerRole {
    /// Outside any residual block.
    Plain,
    /// On a residual block's main path or its output join.
    Block { block: usize },
    /// The k-th (0 or 1) main-path batch-norm of a residual block.
    BlockBn { block: usize, position: usize },
    /// On a residual block's projection shortcut.
    Projection { block: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerInfo {
    pub id: LayerId,
    pub kind: NodeKind,
    pub role: LayerRole,
    pub params: Vec<ParamId>,
}

#[derive(Clone, Debug)]
enum UnitOp {
    Linear { w: ParamId, b: ParamId },
    Conv { w: ParamId, b: ParamId, stride: usize, pad: usize },
    Bn { gamma: ParamId, beta: ParamId, stats: usize, hyper: BnHyper },
    Relu,
    MaxPool { k: usize, stride: usize },
    AvgPool { k: usize, stride: usize },
    Flatten,
    ResidualAdd,
}

#[derive(Clone, Debug)]
struct Unit {
    id: LayerId,
    op: UnitOp,
}

#[derive(Clone, Debug)]
struct ResidualUnits {
    main: Vec<Unit>,
    projection: Vec<Unit>,
    add: Unit,
    out_relu: Unit,
}

#[derive(Clone, Debug)]
enum Block {
    Plain(Unit),
    Residual(ResidualUnits),
}

/// A built network: parameters, batch-norm running statistics, and the
/// registry of per-layer gradient transforms consulted on every forward.
#[derive(Clone, Debug)]
pub struct Model<T = f32> {
    config: ArchConfig,
    params: Vec<Tensor<T>>,
    param_names: Vec<String>,
    bn_stats: Vec<RunningStats<T>>,
    bn_names: Vec<String>,
    blocks: Vec<Block>,
    layers: Vec<LayerInfo>,
    transforms: BTreeMap<LayerId, f64>,
    amp_point: AmpPoint,
}

struct Builder<'a, T> {
    params: Vec<Tensor<T>>,
    param_names: Vec<String>,
    bn_stats: Vec<RunningStats<T>>,
    bn_names: Vec<String>,
    layers: Vec<LayerInfo>,
    rng: &'a mut rand_chacha::ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn uniform(&mut self, shape: &[usize], bound: f64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64_lossy((rng::unit_f64(self.rng) * 2.0 - 1.0) * bound))
            .collect();
        Tensor::from_vec(shape, data).expect("shape from validated config")
    }

    fn add_param(&mut self, layer: LayerId, name: &str, value: Tensor<T>) -> ParamId {
        self.params.push(value);
        self.param_names.push(format!("layer{}.{}", layer.0, name));
        ParamId(self.params.len() - 1)
    }

    /// Kaiming-uniform weights (ReLU gain, fan-in) and fan-in-scaled biases.
    fn weighted(&mut self, id: LayerId, w_shape: &[usize], fan_in: usize) -> (ParamId, ParamId) {
        let w_bound = (6.0 / fan_in as f64).sqrt();
        let b_bound = 1.0 / (fan_in as f64).sqrt();
        let w = self.uniform(w_shape, w_bound);
        let b = self.uniform(&[w_shape[0]], b_bound);
        (self.add_param(id, "weight", w), self.add_param(id, "bias", b))
    }

    fn unit(&mut self, spec: &LayerSpec, role: LayerRole) -> Unit {
        let id = LayerId(self.layers.len());
        let (op, kind) = match *spec {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                let (w, b) = self.weighted(id, &[out_features, in_features], in_features);
                (UnitOp::Linear { w, b }, NodeKind::Linear)
            }
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            } => {
                let (w, b) =
                    self.weighted(id, &[out_ch, in_ch, kernel, kernel], in_ch * kernel * kernel);
                (UnitOp::Conv { w, b, stride, pad }, NodeKind::Conv2d)
            }
            LayerSpec::BatchNorm { channels, hyper } => {
                let gamma = self.add_param(id, "gamma", Tensor::full(&[channels], T::one()));
                let beta = self.add_param(id, "beta", Tensor::zeros(&[channels]));
                self.bn_stats.push(RunningStats::new(channels));
                self.bn_names.push(format!("layer{}", id.0));
                let stats = self.bn_stats.len() - 1;
                (
                    UnitOp::Bn {
                        gamma,
                        beta,
                        stats,
                        hyper,
                    },
                    NodeKind::BatchNorm,
                )
            }
            LayerSpec::Relu => (UnitOp::Relu, NodeKind::ReLU),
            LayerSpec::MaxPool { kernel, stride } => (
                UnitOp::MaxPool {
                    k: kernel,
                    stride,
                },
                NodeKind::MaxPool,
            ),
            LayerSpec::AvgPool { kernel, stride } => (
                UnitOp::AvgPool {
                    k: kernel,
                    stride,
                },
                NodeKind::AvgPool,
            ),
            LayerSpec::Flatten => (UnitOp::Flatten, NodeKind::Flatten),
        };
        self.register(id, kind, role, &op);
        Unit { id, op }
    }

    fn register(&mut self, id: LayerId, kind: NodeKind, role: LayerRole, op: &UnitOp) {
        let params = match *op {
            UnitOp::Linear { w, b } | UnitOp::Conv { w, b, .. } => vec![w, b],
            UnitOp::Bn { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        };
        self.layers.push(LayerInfo {
            id,
            kind,
            role,
            params,
        });
    }

    fn residual(&mut self, spec: &ResidualBlockSpec, block: usize) -> ResidualUnits {
        let on_block = LayerRole::Block { block };
        let mut main = Vec::new();
        main.push(self.unit(&LayerSpec::conv3x3(spec.in_ch, spec.out_ch, spec.stride), on_block));
        main.push(self.unit(
            &LayerSpec::bn(spec.out_ch, spec.bn),
            LayerRole::BlockBn { block, position: 0 },
        ));
        main.push(self.unit(&LayerSpec::Relu, on_block));
        main.push(self.unit(&LayerSpec::conv3x3(spec.out_ch, spec.out_ch, 1), on_block));
        main.push(self.unit(
            &LayerSpec::bn(spec.out_ch, spec.bn),
            LayerRole::BlockBn { block, position: 1 },
        ));
        let mut projection = Vec::new();
        if spec.needs_projection() {
            let proj = LayerRole::Projection { block };
            projection.push(self.unit(
                &LayerSpec::Conv2d {
                    in_ch: spec.in_ch,
                    out_ch: spec.out_ch,
                    kernel: 1,
                    stride: spec.stride,
                    pad: 0,
                },
                proj,
            ));
            projection.push(self.unit(&LayerSpec::bn(spec.out_ch, spec.bn), proj));
        }
        let add_id = LayerId(self.layers.len());
        self.register(add_id, NodeKind::ResidualAdd, on_block, &UnitOp::ResidualAdd);
        let add = Unit {
            id: add_id,
            op: UnitOp::ResidualAdd,
        };
        let out_relu = self.unit(&LayerSpec::Relu, on_block);
        ResidualUnits {
            main,
            projection,
            add,
            out_relu,
        }
    }
}

/// Instantiates `config` with weights drawn from `seed`.
pub fn build_model<T: Scalar>(config: &ArchConfig, seed: u64) -> Result<Model<T>> {
    config.validate()?;
    let mut rng = rng::stream(seed, Domain::Init, 0);
    let mut b = Builder {
        params: Vec::new(),
        param_names: Vec::new(),
        bn_stats: Vec::new(),
        bn_names: Vec::new(),
        layers: Vec::new(),
        rng: &mut rng,
    };
    let mut blocks = Vec::new();
    let mut residual_index = 0;
    for spec in &config.blocks {
        match spec {
            BlockSpec::Layer(l) => blocks.push(Block::Plain(b.unit(l, LayerRole::Plain))),
            BlockSpec::Residual { residual } => {
                blocks.push(Block::Residual(b.residual(residual, residual_index)));
                residual_index += 1;
            }
        }
    }
    Ok(Model {
        config: config.clone(),
        params: b.params,
        param_names: b.param_names,
        bn_stats: b.bn_stats,
        bn_names: b.bn_names,
        blocks,
        layers: b.layers,
        transforms: BTreeMap::new(),
        amp_point: AmpPoint::default(),
    })
}

struct ForwardCtx<'a, T> {
    params: &'a [Tensor<T>],
    stats: &'a mut [RunningStats<T>],
    transforms: &'a BTreeMap<LayerId, f64>,
    mode: Mode,
}

impl<T: Scalar> ForwardCtx<'_, T> {
    fn param(&self, g: &mut Graph<T>, id: ParamId) -> NodeId {
        g.param(id, self.params[id.0].clone())
    }

    fn apply(&mut self, g: &mut Graph<T>, unit: &Unit, x: NodeId) -> Result<NodeId> {
        let out = match unit.op {
            UnitOp::Linear { w, b } => {
                let (w, b) = (self.param(g, w), self.param(g, b));
                g.linear(x, w, b)?
            }
            UnitOp::Conv { w, b, stride, pad } => {
                let (w, b) = (self.param(g, w), self.param(g, b));
                g.conv2d(x, w, b, stride, pad)?
            }
            UnitOp::Bn {
                gamma,
                beta,
                stats,
                hyper,
            } => {
                let (ga, be) = (self.param(g, gamma), self.param(g, beta));
                let hyper = BnParams {
                    eps: hyper.eps,
                    momentum: hyper.momentum,
                };
                g.batch_norm(x, ga, be, &mut self.stats[stats], hyper, self.mode)?
            }
            UnitOp::Relu => g.relu(x)?,
            UnitOp::MaxPool { k, stride } => g.max_pool(x, k, stride)?,
            UnitOp::AvgPool { k, stride } => g.avg_pool(x, k, stride)?,
            UnitOp::Flatten => g.flatten(x)?,
            UnitOp::ResidualAdd => unreachable!("residual joins take two inputs"),
        };
        self.finish(g, unit.id, out)
    }

    fn finish(&self, g: &mut Graph<T>, id: LayerId, out: NodeId) -> Result<NodeId> {
        g.tag_layer(out, id)?;
        if let Some(&f) = self.transforms.get(&id) {
            g.attach_grad_transform(out, f)?;
        }
        Ok(out)
    }
}

impl<T: Scalar> Model<T> {
    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn layer(&self, id: LayerId) -> Option<&LayerInfo> {
        self.layers.get(id.0)
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    /// Layer owning a parameter.
    pub fn param_layer(&self, id: ParamId) -> Option<LayerId> {
        self.layers
            .iter()
            .find(|l| l.params.contains(&id))
            .map(|l| l.id)
    }

    pub fn bn_stats(&self) -> &[RunningStats<T>] {
        &self.bn_stats
    }

    pub fn bn_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.bn_stats
    }

    pub fn bn_names(&self) -> &[String] {
        &self.bn_names
    }

    pub fn amp_point(&self) -> AmpPoint {
        self.amp_point
    }

    pub fn set_amp_point(&mut self, point: AmpPoint) {
        self.amp_point = point;
    }

    /// Empty graph configured with this model's amplification point.
    pub fn new_graph(&self) -> Graph<T> {
        Graph::with_amp_point(self.amp_point)
    }

    /// Installs factor `factor` on layer `id`; overwrites any earlier factor.
    pub fn attach_grad_transform(&mut self, id: LayerId, factor: f64) -> Result<()> {
        validate_factor(factor)?;
        if id.0 >= self.layers.len() {
            bail!(Argument, "layer {} not in model ({} layers)", id.0, self.layers.len());
        }
        self.transforms.insert(id, factor);
        Ok(())
    }

    pub fn clear_grad_transforms(&mut self) {
        self.transforms.clear();
    }

    pub fn grad_transforms(&self) -> &BTreeMap<LayerId, f64> {
        &self.transforms
    }

    /// Records the network on `g` and returns the logits node.
    pub fn forward(&mut self, g: &mut Graph<T>, x: NodeId, mode: Mode) -> Result<NodeId> {
        let expected = &self.config.input_shape;
        let got = g.value(x)?.shape();
        if &got[1..] != expected.as_slice() {
            bail!(Shape, "model expects per-sample input {:?}, got {:?}", expected, &got[1..]);
        }
        let mut ctx = ForwardCtx {
            params: &self.params,
            stats: &mut self.bn_stats,
            transforms: &self.transforms,
            mode,
        };
        let mut h = x;
        for block in &self.blocks {
            h = match block {
                Block::Plain(u) => ctx.apply(g, u, h)?,
                Block::Residual(r) => {
                    let mut main = h;
                    for u in &r.main {
                        main = ctx.apply(g, u, main)?;
                    }
                    let mut skip = h;
                    for u in &r.projection {
                        skip = ctx.apply(g, u, skip)?;
                    }
                    let joined = g.residual_add(main, skip)?;
                    let joined = ctx.finish(g, r.add.id, joined)?;
                    ctx.apply(g, &r.out_relu, joined)?
                }
            };
        }
        Ok(h)
    }

    /// Eval-mode logits without keeping the graph.
    pub fn logits(&mut self, images: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self.new_graph();
        let x = g.constant(images.clone());
        let out = self.forward(&mut g, x, Mode::Eval)?;
        Ok(g.value(out)?.clone())
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
            param_names: self.param_names.clone(),
            bn_stats: self
                .bn_stats
                .iter()
                .map(|s| RunningStats {
                    mean: s.mean.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
                    var: s.var.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
                })
                .collect(),
            bn_names: self.bn_names.clone(),
            blocks: self.blocks.clone(),
            layers: self.layers.clone(),
            transforms: self.transforms.clone(),
            amp_point: self.amp_point,
        }
    }
}
