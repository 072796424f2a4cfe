use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnHyper {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BnHyper {
    fn default() -> Self {
        BnHyper {
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        channels: usize,
        #[serde(default)]
        hyper: BnHyper,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn conv3x3(in_ch: usize, out_ch: usize, stride: usize) -> Self {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel: 3,
            stride,
            pad: 1,
        }
    }

    pub fn bn(channels: usize, hyper: BnHyper) -> Self {
        LayerSpec::BatchNorm { channels, hyper }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => in_features > 0 && out_features > 0,
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                ..
            } => in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0,
            LayerSpec::BatchNorm { channels, hyper } => {
                channels > 0
                    && hyper.eps > 0.0
                    && hyper.momentum > 0.0
                    && hyper.momentum <= 1.0
            }
            LayerSpec::MaxPool { kernel, stride } | LayerSpec::AvgPool { kernel, stride } => {
                kernel > 0 && stride > 0
            }
            LayerSpec::Relu | LayerSpec::Flatten => true,
        };
        if !ok {
            bail!(Config, "invalid layer hyper-parameters: {:?}", self);
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let mismatch = || Error::Shape(format!("{:?} cannot consume input {:?}", self, input));
        match (self, input) {
            (
                LayerSpec::Linear {
                    in_features,
                    out_features,
                },
                [d],
            ) if d == in_features => Ok(vec![*out_features]),
            (
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                },
                [c, h, w],
            ) if c == in_ch => {
                if h + 2 * pad < *kernel || w + 2 * pad < *kernel {
                    return Err(mismatch());
                }
                Ok(vec![
                    *out_ch,
                    (h + 2 * pad - kernel) / stride + 1,
                    (w + 2 * pad - kernel) / stride + 1,
                ])
            }
            (LayerSpec::BatchNorm { channels, .. }, [c, ..]) if c == channels && input.len() != 2 => {
                Ok(input.to_vec())
            }
            (LayerSpec::Relu, _) => Ok(input.to_vec()),
            (
                LayerSpec::MaxPool { kernel, stride } | LayerSpec::AvgPool { kernel, stride },
                [c, h, w],
            ) if h >= kernel && w >= kernel => Ok(vec![
                *c,
                (h - kernel) / stride + 1,
                (w - kernel) / stride + 1,
            ]),
            (LayerSpec::Flatten, _) => Ok(vec![input.iter().product()]),
            _ => Err(mismatch()),
        }
    }
}

/// Basic residual block: `relu(bn2(conv2(relu(bn1(conv1(x))))) + skip(x))`.
///
/// The skip path is the identity, or a 1x1 strided conv + BN projection when
/// the stride or channel count changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlockSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    #[serde(default)]
    pub bn: BnHyper,
}

impl ResidualBlockSpec {
    pub fn needs_projection(&self) -> bool {
        self.stride != 1 || self.in_ch != self.out_ch
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let conv1 = LayerSpec::conv3x3(self.in_ch, self.out_ch, self.stride);
        let mid = conv1.output_shape(input)?;
        let main = LayerSpec::conv3x3(self.out_ch, self.out_ch, 1).output_shape(&mid)?;
        let skip = if self.needs_projection() {
            LayerSpec::Conv2d {
                in_ch: self.in_ch,
                out_ch: self.out_ch,
                kernel: 1,
                stride: self.stride,
                pad: 0,
            }
            .output_shape(input)?
        } else {
            input.to_vec()
        };
        if skip != main {
            bail!(Shape, "residual skip shape {:?} != main path {:?}", skip, main);
        }
        Ok(main)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSpec {
    Layer(LayerSpec),
    Residual { residual: ResidualBlockSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub name: String,
    /// Per-sample input shape: `[C, H, W]` for images, `[D]` for vectors.
    pub input_shape: Vec<usize>,
    pub blocks: Vec<BlockSpec>,
    pub num_classes: usize,
}

pub const PRESETS: [&str; 5] = [
    "mlp-tiny",
    "cnn-small",
    "vgg19-cifar",
    "resnet18-cifar",
    "resnet34-cifar",
];

impl ArchConfig {
    /// Looks up a named architecture for the given per-sample input shape.
    pub fn preset(name: &str, input_shape: &[usize], num_classes: usize) -> Result<Self> {
        let bn = BnHyper::default();
        let blocks = match name {
            "mlp-tiny" => mlp_tiny(input_shape, num_classes),
            "cnn-small" => cnn_small(input_shape, num_classes, bn)?,
            "vgg19-cifar" => vgg19(input_shape, num_classes, bn)?,
            "resnet18-cifar" => resnet(input_shape, num_classes, [2, 2, 2, 2], bn)?,
            "resnet34-cifar" => resnet(input_shape, num_classes, [3, 4, 6, 3], bn)?,
            other => bail!(
                Config,
                "unknown architecture '{}', expected one of {:?}",
                other,
                PRESETS
            ),
        };
        let cfg = ArchConfig {
            name: name.to_string(),
            input_shape: input_shape.to_vec(),
            blocks,
            num_classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides every batch-norm's eps and momentum.
    pub fn with_bn(mut self, hyper: BnHyper) -> Self {
        for b in &mut self.blocks {
            match b {
                BlockSpec::Layer(LayerSpec::BatchNorm { hyper: h, .. }) => *h = hyper,
                BlockSpec::Residual { residual } => residual.bn = hyper,
                _ => {}
            }
        }
        self
    }

    /// Propagates shapes through every block; returns the logits width.
    pub fn validate(&self) -> Result<usize> {
        if self.num_classes == 0 || self.input_shape.is_empty() {
            bail!(Config, "{}: empty input shape or zero classes", self.name);
        }
        if self.input_shape.iter().any(|&d| d == 0) {
            bail!(Config, "{}: zero extent in input shape", self.name);
        }
        let mut shape = self.input_shape.clone();
        for b in &self.blocks {
            shape = match b {
                BlockSpec::Layer(l) => l.output_shape(&shape)?,
                BlockSpec::Residual { residual } => residual.output_shape(&shape)?,
            };
        }
        match self.blocks.last() {
            Some(BlockSpec::Layer(LayerSpec::Linear { out_features, .. }))
                if *out_features == self.num_classes && shape == [self.num_classes] =>
            {
                Ok(self.num_classes)
            }
            _ => bail!(
                Config,
                "{}: model must end in one Linear classifier head with {} outputs",
                self.name,
                self.num_classes
            ),
        }
    }

    pub fn residual_block_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b, BlockSpec::Residual { .. }))
            .count()
    }
}

fn layer(l: LayerSpec) -> BlockSpec {
    BlockSpec::Layer(l)
}

fn image_dims(input: &[usize], min: usize) -> Result<(usize, usize, usize)> {
    match input {
        [c, h, w] if *h >= min && *w >= min => Ok((*c, *h, *w)),
        _ => bail!(Config, "image architecture needs [C,H,W] input with H,W >= {}, got {:?}", min, input),
    }
}

fn mlp_tiny(input: &[usize], classes: usize) -> Vec<BlockSpec> {
    let d: usize = input.iter().product();
    let mut blocks = Vec::new();
    if input.len() > 1 {
        blocks.push(layer(LayerSpec::Flatten));
    }
    let hidden = 32;
    blocks.extend([
        layer(LayerSpec::Linear {
            in_features: d,
            out_features: hidden,
        }),
        layer(LayerSpec::Relu),
        layer(LayerSpec::Linear {
            in_features: hidden,
            out_features: hidden,
        }),
        layer(LayerSpec::Relu),
        layer(LayerSpec::Linear {
            in_features: hidden,
            out_features: classes,
        }),
    ]);
    blocks
}

/// Three conv–BN–ReLU–maxpool stages and a linear head.
fn cnn_small(input: &[usize], classes: usize, bn: BnHyper) -> Result<Vec<BlockSpec>> {
    let (c, h, w) = image_dims(input, 8)?;
    let widths = [16, 32, 64];
    let mut blocks = Vec::new();
    let mut ch = c;
    for &out in &widths {
        blocks.extend([
            layer(LayerSpec::conv3x3(ch, out, 1)),
            layer(LayerSpec::bn(out, bn)),
            layer(LayerSpec::Relu),
            layer(LayerSpec::MaxPool {
                kernel: 2,
                stride: 2,
            }),
        ]);
        ch = out;
    }
    blocks.push(layer(LayerSpec::Flatten));
    blocks.push(layer(LayerSpec::Linear {
        in_features: ch * (h / 8) * (w / 8),
        out_features: classes,
    }));
    Ok(blocks)
}

fn vgg19(input: &[usize], classes: usize, bn: BnHyper) -> Result<Vec<BlockSpec>> {
    let (c, h, w) = image_dims(input, 32)?;
    const CFG: [usize; 21] = [
        64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512,
        0,
    ];
    let mut blocks = Vec::new();
    let mut ch = c;
    for &v in &CFG {
        if v == 0 {
            blocks.push(layer(LayerSpec::MaxPool {
                kernel: 2,
                stride: 2,
            }));
        } else {
            blocks.extend([
                layer(LayerSpec::conv3x3(ch, v, 1)),
                layer(LayerSpec::bn(v, bn)),
                layer(LayerSpec::Relu),
            ]);
            ch = v;
        }
    }
    blocks.push(layer(LayerSpec::Flatten));
    blocks.push(layer(LayerSpec::Linear {
        in_features: ch * (h / 32) * (w / 32),
        out_features: classes,
    }));
    Ok(blocks)
}

/// CIFAR-style ResNet: 3x3 stem without max-pool, four stages, global
/// average pool, linear head.
fn resnet(
    input: &[usize],
    classes: usize,
    depths: [usize; 4],
    bn: BnHyper,
) -> Result<Vec<BlockSpec>> {
    let (c, h, w) = image_dims(input, 8)?;
    let mut blocks = vec![
        layer(LayerSpec::conv3x3(c, 64, 1)),
        layer(LayerSpec::bn(64, bn)),
        layer(LayerSpec::Relu),
    ];
    let mut ch = 64;
    let (mut sh, mut sw) = (h, w);
    for (stage, &depth) in depths.iter().enumerate() {
        let out = 64 << stage;
        for i in 0..depth {
            let stride = if stage > 0 && i == 0 { 2 } else { 1 };
            if stride == 2 {
                sh = (sh - 1) / 2 + 1;
                sw = (sw - 1) / 2 + 1;
            }
            blocks.push(BlockSpec::Residual {
                residual: ResidualBlockSpec {
                    in_ch: ch,
                    out_ch: out,
                    stride,
                    bn,
                },
            });
            ch = out;
        }
    }
    let k = sh.min(sw);
    blocks.push(layer(LayerSpec::AvgPool {
        kernel: k,
        stride: k,
    }));
    blocks.push(layer(LayerSpec::Flatten));
    blocks.push(layer(LayerSpec::Linear {
        in_features: ch * (sh / k) * (sw / k),
        out_features: classes,
    }));
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            let input: &[usize] = if name == "mlp-tiny" { &[8] } else { &[3, 32, 32] };
            ArchConfig::preset(name, input, 10).unwrap();
        }
        assert!(ArchConfig::preset("alexnet", &[3, 32, 32], 10).is_err());
    }

    #[test]
    fn resnet_block_counts() {
        let r18 = ArchConfig::preset("resnet18-cifar", &[3, 32, 32], 10).unwrap();
        assert_eq!(r18.residual_block_count(), 8);
        let r34 = ArchConfig::preset("resnet34-cifar", &[3, 32, 32], 10).unwrap();
        assert_eq!(r34.residual_block_count(), 16);
    }

    #[test]
    fn rejects_missing_head() {
        let mut cfg = ArchConfig::preset("mlp-tiny", &[8], 2).unwrap();
        cfg.blocks.pop();
        assert!(cfg.validate().is_err());
        let bad = ArchConfig {
            name: "bad".into(),
            input_shape: vec![8],
            blocks: vec![layer(LayerSpec::Linear {
                in_features: 7,
                out_features: 2,
            })],
            num_classes: 2,
        };
        assert!(matches!(bad.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn bn_hyper_validated() {
        let spec = LayerSpec::bn(
            4,
            BnHyper {
                eps: 1e-5,
                momentum: 0.0,
            },
        );
        assert!(spec.output_shape(&[4, 2, 2]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let cfg = ArchConfig::preset("resnet18-cifar", &[3, 32, 32], 10).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ArchConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
