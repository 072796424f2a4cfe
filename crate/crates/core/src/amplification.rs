//! Selection and installation of amplified layers.
//!
//! A group `G` of eligible layers is built from the requested layer types;
//! `round(β·|G|)` of them are drawn uniformly without replacement and each
//! receives gradient transform Γ on the model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{LayerId, NodeKind};
use crate::error::{bail, Error, Result};
use crate::nn::{LayerRole, Model};
use crate::rng::{self, Domain};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerType {
    #[serde(rename = "bn")]
    BatchNorm,
    #[serde(rename = "relu")]
    ReLU,
    /// One main-path batch-norm per residual block.
    #[serde(rename = "bn_one_per_block")]
    BatchNormOnePerBlock,
}

impl FromStr for LayerType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bn" | "batchnorm" => Ok(LayerType::BatchNorm),
            "relu" => Ok(LayerType::ReLU),
            "bn_one_per_block" | "bn1" | "batchnormoneperblock" => {
                Ok(LayerType::BatchNormOnePerBlock)
            }
            other => bail!(Parse, "unknown layer type '{}'", other),
        }
    }
}

impl fmt::Display for LayerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerType::BatchNorm => "bn",
            LayerType::ReLU => "relu",
            LayerType::BatchNormOnePerBlock => "bn_one_per_block",
        })
    }
}

/// Which layers are eligible for amplification.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub layer_types: BTreeSet<LayerType>,
    /// Which main-path BN of a residual block `BatchNormOnePerBlock` takes (0 or 1).
    #[serde(default)]
    pub block_bn_position: usize,
    /// Whether BNs on projection shortcuts join the group.
    #[serde(default)]
    pub include_projection_bn: bool,
}

impl GroupSpec {
    pub fn new(types: impl IntoIterator<Item = LayerType>) -> Self {
        GroupSpec {
            layer_types: types.into_iter().collect(),
            block_bn_position: 0,
            include_projection_bn: false,
        }
    }
}

impl Default for GroupSpec {
    fn default() -> Self {
        GroupSpec::new([LayerType::BatchNorm])
    }
}

/// Eligible layer ids in forward order.
pub fn build_group<T: Scalar>(model: &Model<T>, spec: &GroupSpec) -> Result<Vec<LayerId>> {
    if spec.layer_types.is_empty() {
        bail!(Config, "no layer types requested for amplification");
    }
    if spec.block_bn_position > 1 {
        bail!(Config, "block_bn_position must be 0 or 1, got {}", spec.block_bn_position);
    }
    let residual = model.config().residual_block_count() > 0;
    if spec.layer_types.contains(&LayerType::BatchNormOnePerBlock) && !residual {
        bail!(
            Config,
            "{}: one-BN-per-block selection needs a residual architecture",
            model.config().name
        );
    }
    let group: Vec<LayerId> = model
        .layers()
        .iter()
        .filter(|l| {
            let projection = matches!(l.role, LayerRole::Projection { .. });
            spec.layer_types.iter().any(|t| match t {
                LayerType::ReLU => l.kind == NodeKind::ReLU,
                LayerType::BatchNorm => {
                    l.kind == NodeKind::BatchNorm && (!projection || spec.include_projection_bn)
                }
                LayerType::BatchNormOnePerBlock => match l.role {
                    LayerRole::BlockBn { position, .. } => position == spec.block_bn_position,
                    LayerRole::Projection { .. } => {
                        l.kind == NodeKind::BatchNorm && spec.include_projection_bn
                    }
                    _ => false,
                },
            })
        })
        .map(|l| l.id)
        .collect();
    if group.is_empty() {
        bail!(
            Config,
            "{} has no layers of types {:?}",
            model.config().name,
            spec.layer_types
        );
    }
    Ok(group)
}

/// `round(β·n)`, halves away from zero; tolerant to `0.1·k` not being exact.
pub fn amp_size(beta: f64, n: usize) -> usize {
    (beta * n as f64 + 1e-9).round() as usize
}

/// The amplified subset drawn for one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpSelection {
    pub phase: usize,
    pub seed: u64,
    pub beta: f64,
    pub gamma: f64,
    pub group: Vec<LayerId>,
    pub selected: Vec<LayerId>,
}

/// Draws `round(β·|G|)` layers from the model's group for `phase`.
pub fn get_gradient_amp_layers<T: Scalar>(
    model: &Model<T>,
    beta: f64,
    gamma: f64,
    spec: &GroupSpec,
    seed: u64,
    phase: usize,
) -> Result<AmpSelection> {
    let group = build_group(model, spec)?;
    draw_selection(group, beta, gamma, seed, phase)
}

/// Draws `round(β·|G|)` members of `group` without replacement.
///
/// The draw uses its own random stream keyed by `(seed, phase)`, so the
/// result does not depend on anything drawn in earlier phases.
pub fn draw_selection(
    group: Vec<LayerId>,
    beta: f64,
    gamma: f64,
    seed: u64,
    phase: usize,
) -> Result<AmpSelection> {
    if !(0.0..=1.0).contains(&beta) {
        bail!(Argument, "amplification ratio must be in [0, 1], got {}", beta);
    }
    if !(gamma.is_finite() && gamma >= 1.0) {
        bail!(Argument, "amplification factor must be >= 1, got {}", gamma);
    }
    let k = amp_size(beta, group.len());
    let mut rng = rng::stream(seed, Domain::AmpSelection, phase as u64);
    let mut selected: Vec<LayerId> = rng::sample_indices(&mut rng, group.len(), k)
        .into_iter()
        .map(|i| group[i])
        .collect();
    selected.sort();
    Ok(AmpSelection {
        phase,
        seed,
        beta,
        gamma,
        group,
        selected,
    })
}

/// Installs `sel.gamma` on every selected layer; other layers are untouched.
pub fn apply_amplification<T: Scalar>(model: &mut Model<T>, sel: &AmpSelection) -> Result<()> {
    if let Some(bad) = sel.selected.iter().find(|id| model.layer(**id).is_none()) {
        bail!(Argument, "selected layer {} not in model", bad);
    }
    for &id in &sel.selected {
        model.attach_grad_transform(id, sel.gamma)?;
    }
    Ok(())
}

pub fn remove_amplification<T: Scalar>(model: &mut Model<T>) {
    model.clear_grad_transforms();
}

fn id_list(ids: &[LayerId]) -> String {
    let inner: Vec<String> = ids.iter().map(|i| i.0.to_string()).collect();
    format!("[{}]", inner.join(","))
}

impl AmpSelection {
    /// `phase=<i> seed=<s> beta=<b> gamma=<g> group=[ids] selected=[ids]`
    pub fn dump_line(&self) -> String {
        format!(
            "phase={} seed={} beta={} gamma={} group={} selected={}",
            self.phase,
            self.seed,
            self.beta,
            self.gamma,
            id_list(&self.group),
            id_list(&self.selected)
        )
    }

    pub fn parse_dump_line(line: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad selection field '{}'", tok)))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("selection line missing '{}'", k)))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad number for '{}'", k)))
        };
        let ids = |k: &str| -> Result<Vec<LayerId>> {
            let raw = get(k)?;
            let inner = raw
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| Error::Parse(format!("'{}' is not a bracketed list", k)))?;
            if inner.is_empty() {
                return Ok(vec![]);
            }
            inner
                .split(',')
                .map(|s| {
                    s.parse()
                        .map(LayerId)
                        .map_err(|_| Error::Parse(format!("bad layer id '{}'", s)))
                })
                .collect()
        };
        Ok(AmpSelection {
            phase: get("phase")?
                .parse()
                .map_err(|_| Error::Parse("bad phase".into()))?,
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::Parse("bad seed".into()))?,
            beta: num("beta")?,
            gamma: num("gamma")?,
            group: ids("group")?,
            selected: ids("selected")?,
        })
    }
}
