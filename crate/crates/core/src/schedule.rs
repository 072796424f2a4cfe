//! Phased training schedules: `[(end_epoch, lr, β, Γ), ...]`.
//!
//! Named schedules follow a four-phase template (transient, first
//! amplification window, second window at the reduced learning rate, tail):
//!
//! * `baseline`: no amplification anywhere;
//! * `S1_{mm}`: ratio `mm` in the first window only;
//! * `S2_{mm}_{nn}`: ratio `mm` in the first window, `nn` in the second.
//!
//! A `_g{Γ}` suffix records a factor other than the default 2.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

pub const DEFAULT_GAMMA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub end_epoch: usize,
    pub lr: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl PhaseParams {
    pub fn new(end_epoch: usize, lr: f64, beta: f64, gamma: f64) -> Self {
        PhaseParams {
            end_epoch,
            lr,
            beta,
            gamma,
        }
    }

    pub fn amplified(&self) -> bool {
        self.beta > 0.0
    }
}

/// Phase boundaries and learning rates shared by a family of named schedules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub ends: [usize; 4],
    pub lrs: [f64; 4],
}

impl Template {
    /// 150 epochs: 0.1 through epoch 100, then 0.01.
    pub const FULL: Template = Template {
        ends: [50, 100, 130, 150],
        lrs: [0.1, 0.1, 0.01, 0.01],
    };

    /// The full template compressed to 30 epochs.
    pub const DESK: Template = Template {
        ends: [10, 20, 26, 30],
        lrs: [0.1, 0.1, 0.01, 0.01],
    };

    fn build(&self, betas: [f64; 4], gamma: f64, label: String) -> Result<Schedule> {
        let phases = (0..4)
            .map(|i| {
                let amplified = betas[i] > 0.0;
                PhaseParams::new(
                    self.ends[i],
                    self.lrs[i],
                    betas[i],
                    if amplified { gamma } else { 1.0 },
                )
            })
            .collect();
        Schedule::with_label(phases, label)
    }

    pub fn baseline(&self) -> Result<Schedule> {
        self.build([0.0; 4], 1.0, "baseline".into())
    }

    pub fn s1(&self, mm: f64, gamma: f64) -> Result<Schedule> {
        let label = format!("S1_{}{}", fmt_ratio(mm), gamma_suffix(gamma));
        self.build([0.0, mm, 0.0, 0.0], gamma, label)
    }

    pub fn s2(&self, mm: f64, nn: f64, gamma: f64) -> Result<Schedule> {
        let label = format!("S2_{}_{}{}", fmt_ratio(mm), fmt_ratio(nn), gamma_suffix(gamma));
        self.build([0.0, mm, nn, 0.0], gamma, label)
    }

    /// Whether `phases` has this template's boundaries and learning rates.
    pub fn matches(&self, phases: &[PhaseParams]) -> bool {
        phases.len() == 4
            && phases
                .iter()
                .zip(self.ends.iter().zip(&self.lrs))
                .all(|(p, (&e, &lr))| p.end_epoch == e && p.lr == lr)
    }
}

fn fmt_ratio(r: f64) -> String {
    if ((r * 10.0).round() / 10.0 - r).abs() < 1e-12 {
        format!("{:.1}", r)
    } else {
        format!("{}", r)
    }
}

fn gamma_suffix(gamma: f64) -> String {
    if gamma == DEFAULT_GAMMA {
        String::new()
    } else {
        format!("_g{}", gamma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    phases: Vec<PhaseParams>,
    label: String,
}

/// Parameters in force at one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseLookup {
    pub lr: f64,
    pub beta: f64,
    pub gamma: f64,
    /// 1-based phase number.
    pub phase: usize,
}

impl Schedule {
    /// Validates the phases and derives the label from their shape.
    pub fn new(phases: Vec<PhaseParams>) -> Result<Self> {
        validate(&phases)?;
        let label = derive_label(&phases);
        Ok(Schedule { phases, label })
    }

    pub fn with_label(phases: Vec<PhaseParams>, label: String) -> Result<Self> {
        validate(&phases)?;
        Ok(Schedule { phases, label })
    }

    pub fn phases(&self) -> &[PhaseParams] {
        &self.phases
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn last_epoch(&self) -> usize {
        self.phases.last().map_or(0, |p| p.end_epoch)
    }

    /// Start epoch (exclusive) of 1-based phase `phase`.
    pub fn phase_start(&self, phase: usize) -> usize {
        if phase <= 1 {
            0
        } else {
            self.phases[phase - 2].end_epoch
        }
    }

    /// Phase covering `epoch`; phases cover `(previous end, end]`.
    pub fn lr_at_epoch(&self, epoch: usize) -> Result<PhaseLookup> {
        if epoch == 0 || epoch > self.last_epoch() {
            bail!(Argument, "epoch {} outside 1..={}", epoch, self.last_epoch());
        }
        let idx = self.phases.iter().position(|p| epoch <= p.end_epoch).unwrap();
        let p = self.phases[idx];
        Ok(PhaseLookup {
            lr: p.lr,
            beta: p.beta,
            gamma: p.gamma,
            phase: idx + 1,
        })
    }

    /// Same schedule with all ratios zeroed, labelled `baseline`.
    pub fn to_baseline(&self) -> Schedule {
        let phases = self
            .phases
            .iter()
            .map(|p| PhaseParams::new(p.end_epoch, p.lr, 0.0, 1.0))
            .collect();
        Schedule {
            phases,
            label: "baseline".into(),
        }
    }

    /// Rebuilds a named schedule (`baseline`, `S1_*`, `S2_*`) on a template.
    pub fn from_label(label: &str, template: &Template) -> Result<Schedule> {
        let bad = || Error::Parse(format!("unrecognised schedule label '{}'", label));
        if label == "baseline" {
            return template.baseline();
        }
        let (body, gamma) = match label.split_once("_g") {
            Some((body, g)) => (body, g.parse::<f64>().map_err(|_| bad())?),
            None => (label, DEFAULT_GAMMA),
        };
        let parts: Vec<&str> = body.split('_').collect();
        let ratio = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let sched = match parts.as_slice() {
            ["S1", mm] => template.s1(ratio(mm)?, gamma)?,
            ["S2", mm, nn] => template.s2(ratio(mm)?, ratio(nn)?, gamma)?,
            _ => return Err(bad()),
        };
        if sched.label != label {
            return Err(bad());
        }
        Ok(sched)
    }
}

fn validate(phases: &[PhaseParams]) -> Result<()> {
    if phases.is_empty() {
        bail!(Config, "schedule has no phases");
    }
    let mut prev = 0;
    for (i, p) in phases.iter().enumerate() {
        let n = i + 1;
        if p.end_epoch <= prev {
            bail!(Config, "phase {}: end epoch {} not after {}", n, p.end_epoch, prev);
        }
        if !(p.lr.is_finite() && p.lr > 0.0) {
            bail!(Config, "phase {}: learning rate must be > 0, got {}", n, p.lr);
        }
        if !(0.0..=1.0).contains(&p.beta) {
            bail!(Config, "phase {}: ratio must be in [0, 1], got {}", n, p.beta);
        }
        if !(p.gamma.is_finite() && p.gamma > 0.0) {
            bail!(Config, "phase {}: factor must be > 0, got {}", n, p.gamma);
        }
        if p.amplified() && p.gamma < 1.0 {
            bail!(Config, "phase {}: amplification factor must be >= 1, got {}", n, p.gamma);
        }
        prev = p.end_epoch;
    }
    Ok(())
}

fn derive_label(phases: &[PhaseParams]) -> String {
    if phases.iter().all(|p| !p.amplified()) {
        return "baseline".into();
    }
    if phases.len() == 4 && !phases[0].amplified() && !phases[3].amplified() {
        let gamma = if phases[2].amplified() {
            phases[2].gamma
        } else {
            phases[1].gamma
        };
        let same_gamma = phases.iter().filter(|p| p.amplified()).all(|p| p.gamma == gamma);
        if same_gamma {
            if phases[2].amplified() {
                return format!(
                    "S2_{}_{}{}",
                    fmt_ratio(phases[1].beta),
                    fmt_ratio(phases[2].beta),
                    gamma_suffix(gamma)
                );
            }
            return format!("S1_{}{}", fmt_ratio(phases[1].beta), gamma_suffix(gamma));
        }
    }
    let parts: Vec<String> = phases
        .iter()
        .map(|p| format!("{}-{}", p.end_epoch, fmt_ratio(p.beta)))
        .collect();
    format!("custom_{}", parts.join("_"))
}

/// Parses `[(50, 0.1, 0, 1), (100, 0.1, 0.5, 2), ...]`.
pub fn parse_schedule(text: &str) -> Result<Schedule> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Parse("schedule must be a bracketed list of tuples".into()))?;
    let mut phases = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let body_end = rest
            .find(')')
            .ok_or_else(|| Error::Parse(format!("unterminated tuple in '{}'", rest)))?;
        let tuple = rest[..body_end]
            .strip_prefix('(')
            .ok_or_else(|| Error::Parse(format!("expected '(' at '{}'", rest)))?;
        let fields: Vec<&str> = tuple.split(',').collect();
        if fields.len() != 4 {
            bail!(Parse, "phase '({})' needs 4 fields (end_epoch, lr, beta, gamma)", tuple);
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{}' in '({})'", s, tuple)))
        };
        let end = fields[0]
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad end epoch '{}'", fields[0])))?;
        phases.push(PhaseParams::new(end, num(fields[1])?, num(fields[2])?, num(fields[3])?));
        rest = &rest[body_end + 1..];
        rest = rest.strip_prefix(',').unwrap_or(rest);
    }
    Schedule::new(phases)
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.phases.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({}, {}, {}, {})", p.end_epoch, p.lr, p.beta, p.gamma)?;
        }
        write!(f, "]")
    }
}
