//! Experiment configuration, read from TOML.
//!
//! ```toml
//! arch = "cnn-small"
//! output_dir = "out/desk"
//! seeds = [0, 1, 2]
//! baseline_seeds = [0, 1, 2, 3, 4]
//! template = "desk"            # or "full", or { ends = [...], lrs = [...] }
//! layer_types = ["bn"]
//! amp_point = "input_side"    # or "output_side", "data_only"
//!
//! [dataset]
//! kind = "cifar10"
//! dir = "data/cifar-10-batches-bin"
//! train_subset = 5000
//! test_subset = 1000
//!
//! [schedule]
//! labels = ["S1_0.5"]
//! ```
//!
//! Instead of `[schedule]` a `[sweep]` table names exactly one swept
//! parameter: `beta` (step 1, or step 2 when `mm` is given) or `gamma`
//! (around the schedule named by `base`).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ampgrad_core::amplification::{GroupSpec, LayerType};
use ampgrad_core::autograd::AmpPoint;
use ampgrad_core::schedule::{parse_schedule, Schedule, Template};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::sweep::{self, SweepPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arch: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_template")]
    pub template: TemplateSpec,
    #[serde(default = "default_layer_types")]
    pub layer_types: Vec<LayerType>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_baseline_seeds")]
    pub baseline_seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub amp_point: AmpPointSpec,
    #[serde(default)]
    pub augment: bool,
}

fn default_template() -> TemplateSpec {
    TemplateSpec::Named("desk".into())
}

fn default_layer_types() -> Vec<LayerType> {
    vec![LayerType::BatchNorm]
}

fn default_baseline_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_batch_size() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Cifar10 {
        dir: PathBuf,
        #[serde(default)]
        train_subset: Option<usize>,
        #[serde(default)]
        test_subset: Option<usize>,
        #[serde(default)]
        subset_seed: u64,
    },
    /// Flat Gaussian blobs.
    Synth {
        seed: u64,
        train: usize,
        test: usize,
        classes: usize,
        dim: usize,
        separation: f64,
    },
    /// Image-shaped classes with spatial structure.
    Patterns {
        seed: u64,
        train: usize,
        test: usize,
        classes: usize,
        shape: [usize; 3],
        signal: f64,
        #[serde(default)]
        max_shift: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSpec {
    Named(String),
    Custom(Template),
}

impl TemplateSpec {
    pub fn resolve(&self) -> Result<Template> {
        match self {
            TemplateSpec::Named(n) if n == "desk" => Ok(Template::DESK),
            TemplateSpec::Named(n) if n == "full" => Ok(Template::FULL),
            TemplateSpec::Named(n) => bail!("unknown template '{}', expected desk or full", n),
            TemplateSpec::Custom(t) => {
                // validates boundaries and rates
                t.baseline()?;
                Ok(*t)
            }
        }
    }
}

/// Explicit schedules: named ones on the template and/or literal phase lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub params: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Preset(String),
    Values(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Ratio grid; `"grid"` is `{0, 0.1, ..., 1}`.
    #[serde(default)]
    pub beta: Option<Grid>,
    /// Factor grid; `"coarse"` is `{1, ..., 10}`, `"fine"` is `{1.1, ..., 3.0}`.
    #[serde(default)]
    pub gamma: Option<Grid>,
    /// First-window ratios; turns a `beta` sweep into a step-2 sweep.
    #[serde(default)]
    pub mm: Option<Vec<f64>>,
    /// Schedule label a `gamma` sweep varies.
    #[serde(default)]
    pub base: Option<String>,
    /// Factor used by `beta` sweeps.
    #[serde(default)]
    pub factor: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpPointSpec {
    #[default]
    InputSide,
    OutputSide,
    DataOnly,
}

impl From<AmpPointSpec> for AmpPoint {
    fn from(p: AmpPointSpec) -> Self {
        match p {
            AmpPointSpec::InputSide => AmpPoint::InputSide,
            AmpPointSpec::OutputSide => AmpPoint::OutputSide,
            AmpPointSpec::DataOnly => AmpPoint::DataOnly,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative `output_dir` or dataset
    /// directory is taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let DatasetSpec::Cifar10 { dir, .. } = &mut cfg.dataset {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if self.baseline_seeds.is_empty() {
            bail!("baseline_seeds must not be empty");
        }
        if self.batch_size < 2 {
            bail!("batch_size must be at least 2");
        }
        if self.layer_types.is_empty() {
            bail!("layer_types must not be empty");
        }
        self.template.resolve()?;
        match (&self.schedule, &self.sweep) {
            (Some(_), Some(_)) => bail!("give either [schedule] or [sweep], not both"),
            (None, None) => bail!("missing [schedule] or [sweep]"),
            (Some(s), None) if s.labels.is_empty() && s.params.is_empty() => {
                bail!("[schedule] lists no labels or params")
            }
            (Some(_), None) => {}
            (None, Some(s)) => {
                let swept: Vec<&str> = [("beta", s.beta.is_some()), ("gamma", s.gamma.is_some())]
                    .into_iter()
                    .filter(|(_, on)| *on)
                    .map(|(k, _)| k)
                    .collect();
                if swept.len() != 1 {
                    bail!(
                        "a sweep must name exactly one swept parameter, found {} ({})",
                        swept.len(),
                        swept.join(", ")
                    );
                }
                if s.gamma.is_some() && (s.mm.is_some() || s.factor.is_some()) {
                    bail!("a gamma sweep takes no 'mm' or 'factor'");
                }
                if s.gamma.is_some() && s.base.is_none() {
                    bail!("a gamma sweep needs 'base', the schedule label it varies");
                }
                if s.beta.is_some() && s.base.is_some() {
                    bail!("a beta sweep takes no 'base'");
                }
            }
        }
        self.points()?;
        Ok(())
    }

    pub fn group_spec(&self) -> GroupSpec {
        GroupSpec::new(self.layer_types.iter().copied().collect::<BTreeSet<_>>())
    }

    /// The swept parameter's name, if this is a sweep.
    pub fn swept(&self) -> Option<&'static str> {
        let s = self.sweep.as_ref()?;
        Some(if s.gamma.is_some() { "gamma" } else { "beta" })
    }

    pub fn baseline(&self) -> Result<Schedule> {
        Ok(self.template.resolve()?.baseline()?)
    }

    /// Every non-baseline schedule this config runs, in config order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let template = self.template.resolve()?;
        if let Some(s) = &self.schedule {
            let mut out = Vec::new();
            for label in &s.labels {
                let schedule = Schedule::from_label(label, &template)?;
                out.push(SweepPoint::fixed(schedule));
            }
            for text in &s.params {
                out.push(SweepPoint::fixed(parse_schedule(text)?));
            }
            return Ok(out);
        }
        let s = self.sweep.as_ref().ok_or_else(|| anyhow!("no schedule or sweep"))?;
        let base = template.baseline()?;
        let factor = s.factor.unwrap_or(ampgrad_core::schedule::DEFAULT_GAMMA);
        if let Some(grid) = &s.beta {
            let ratios = grid_values(grid, "beta")?;
            return match &s.mm {
                Some(mm) => sweep::sweep_step2_over(&base, mm, &ratios, factor),
                None => sweep::sweep_step1_over(&base, &ratios, factor),
            };
        }
        let grid = grid_values(s.gamma.as_ref().expect("validated"), "gamma")?;
        let label = s.base.as_deref().expect("validated");
        let center = Schedule::from_label(label, &template)?;
        sweep::sweep_gamma(&center, &grid)
    }
}

pub fn grid_values(grid: &Grid, key: &str) -> Result<Vec<f64>> {
    match (grid, key) {
        (Grid::Values(v), _) if v.is_empty() => bail!("'{}' grid is empty", key),
        (Grid::Values(v), _) => Ok(v.clone()),
        (Grid::Preset(p), "beta") if p == "grid" => Ok(sweep::beta_grid()),
        (Grid::Preset(p), "gamma") if p == "coarse" => Ok(sweep::coarse_gamma_grid()),
        (Grid::Preset(p), "gamma") if p == "fine" => Ok(sweep::fine_gamma_grid()),
        (Grid::Preset(p), _) => bail!("unknown '{}' grid preset '{}'", key, p),
    }
}
