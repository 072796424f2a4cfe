//! Schedule families for the three sweep steps.
//!
//! * step 1: `S1_{xx}` for every ratio on the grid, one amplification window;
//! * step 2: `S2_{mm}_{xx}` for each first-window ratio `mm`;
//! * factor: one schedule per Γ with everything else frozen.

use ampgrad_core::schedule::{PhaseParams, Schedule, Template};
use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

/// One schedule of a sweep and its coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub schedule: Schedule,
    /// First-window ratio of a step-2 family.
    pub family: Option<f64>,
    /// Value of the swept parameter.
    pub value: Option<f64>,
}

impl SweepPoint {
    pub fn fixed(schedule: Schedule) -> Self {
        SweepPoint {
            schedule,
            family: None,
            value: None,
        }
    }

    pub fn label(&self) -> &str {
        self.schedule.label()
    }
}

fn tenths(lo: usize, hi: usize) -> Vec<f64> {
    // k / 10 parses back exactly from its one-decimal label
    (lo..=hi).map(|k| k as f64 / 10.0).collect()
}

/// `{0, 0.1, ..., 1}`.
pub fn beta_grid() -> Vec<f64> {
    tenths(0, 10)
}

/// `{1, 2, ..., 10}`.
pub fn coarse_gamma_grid() -> Vec<f64> {
    (1..=10).map(f64::from).collect()
}

/// `{1.1, 1.2, ..., 3.0}`.
pub fn fine_gamma_grid() -> Vec<f64> {
    tenths(11, 30)
}

/// The four-phase template a schedule is laid out on. The transient and the
/// tail must be free of amplification.
pub fn template_of(base: &Schedule) -> Result<Template> {
    let p = base.phases();
    if p.len() != 4 {
        bail!("sweep base needs 4 phases, '{}' has {}", base.label(), p.len());
    }
    if p[0].amplified() || p[3].amplified() {
        bail!("sweep base '{}' amplifies its first or last phase", base.label());
    }
    Ok(Template {
        ends: [p[0].end_epoch, p[1].end_epoch, p[2].end_epoch, p[3].end_epoch],
        lrs: [p[0].lr, p[1].lr, p[2].lr, p[3].lr],
    })
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        bail!("empty ratio grid");
    }
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        bail!("ratio {} outside [0, 1]", r);
    }
    Ok(())
}

/// `S1_{xx}` over `ratios` on the template of `base`, which must not amplify
/// outside the first window.
pub fn sweep_step1_over(base: &Schedule, ratios: &[f64], gamma: f64) -> Result<Vec<SweepPoint>> {
    let template = template_of(base)?;
    if base.phases()[2].amplified() {
        bail!("step-1 base '{}' amplifies its second window", base.label());
    }
    check_ratios(ratios)?;
    ratios
        .iter()
        .map(|&xx| {
            Ok(SweepPoint {
                schedule: template.s1(xx, gamma)?,
                family: None,
                value: Some(xx),
            })
        })
        .collect()
}

/// The 11-point step-1 sweep at factor 2.
pub fn sweep_step1(base: &Schedule) -> Result<Vec<SweepPoint>> {
    sweep_step1_over(base, &beta_grid(), ampgrad_core::schedule::DEFAULT_GAMMA)
}

/// `S2_{mm}_{xx}` for every `mm`, varying `xx` over `ratios`.
pub fn sweep_step2_over(
    base: &Schedule,
    mm: &[f64],
    ratios: &[f64],
    gamma: f64,
) -> Result<Vec<SweepPoint>> {
    let template = template_of(base)?;
    check_ratios(mm)?;
    check_ratios(ratios)?;
    let mut out = Vec::with_capacity(mm.len() * ratios.len());
    for &m in mm {
        for &xx in ratios {
            out.push(SweepPoint {
                schedule: template.s2(m, xx, gamma)?,
                family: Some(m),
                value: Some(xx),
            });
        }
    }
    Ok(out)
}

/// 11 step-2 schedules per first-window ratio, at factor 2.
pub fn sweep_step2(base: &Schedule, mm: &[f64]) -> Result<Vec<SweepPoint>> {
    sweep_step2_over(base, mm, &beta_grid(), ampgrad_core::schedule::DEFAULT_GAMMA)
}

/// `schedule` with the factor of every amplified phase replaced by each Γ.
pub fn sweep_gamma(schedule: &Schedule, grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if !schedule.phases().iter().any(PhaseParams::amplified) {
        bail!("'{}' amplifies nothing, so a factor sweep has no effect", schedule.label());
    }
    if grid.is_empty() {
        bail!("empty factor grid");
    }
    if let Some(g) = grid.iter().find(|g| !(g.is_finite() && **g >= 1.0)) {
        bail!("factor {} rejected: only amplification (>= 1) is explored", g);
    }
    grid.iter()
        .map(|&gamma| {
            let phases = schedule
                .phases()
                .iter()
                .map(|p| {
                    let g = if p.amplified() { gamma } else { p.gamma };
                    PhaseParams::new(p.end_epoch, p.lr, p.beta, g)
                })
                .collect();
            Ok(SweepPoint {
                schedule: Schedule::new(phases)?,
                family: None,
                value: Some(gamma),
            })
        })
        .collect()
}
