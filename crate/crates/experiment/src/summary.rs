//! Per-schedule mean/best test accuracy and improvement over the baseline.
//!
//! A run's accuracy is the test accuracy after its last epoch, as written to
//! its metrics CSV. `improvement` is the best run of a schedule minus the
//! mean over the baseline runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ampgrad_core::data::format_g6;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::runner::{write_text, Plan, RunResult, BASELINE};

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TSV: &str = "summary.tsv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: String,
    pub family: Option<f64>,
    pub value: Option<f64>,
    /// Seeds that finished, in config order, with their accuracies.
    pub seeds: Vec<u64>,
    pub test_accs: Vec<f64>,
    /// Seeds whose run failed or is absent.
    pub missing: Vec<u64>,
    pub mean: Option<f64>,
    pub best: Option<f64>,
    /// First seed reaching `best`.
    pub best_seed: Option<u64>,
    pub improvement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub arch: String,
    pub swept: Option<String>,
    pub last_epoch: usize,
    pub baseline: PointSummary,
    pub points: Vec<PointSummary>,
    /// Point with the highest best accuracy; earlier points win ties.
    pub best_point: Option<String>,
    pub runs: Vec<RunResult>,
}

fn point(
    label: &str,
    family: Option<f64>,
    value: Option<f64>,
    seeds: &[u64],
    runs: &[RunResult],
    is_baseline: bool,
) -> PointSummary {
    let mut out = PointSummary {
        label: label.to_string(),
        family,
        value,
        seeds: Vec::new(),
        test_accs: Vec::new(),
        missing: Vec::new(),
        mean: None,
        best: None,
        best_seed: None,
        improvement: None,
    };
    for &seed in seeds {
        match runs
            .iter()
            .find(|r| r.label == label && r.seed == seed && r.baseline == is_baseline)
        {
            Some(r) => {
                out.seeds.push(seed);
                out.test_accs.push(r.final_test_acc);
                if out.best.is_none_or(|b| r.final_test_acc > b) {
                    out.best = Some(r.final_test_acc);
                    out.best_seed = Some(seed);
                }
            }
            None => out.missing.push(seed),
        }
    }
    if !out.test_accs.is_empty() {
        out.mean = Some(out.test_accs.iter().sum::<f64>() / out.test_accs.len() as f64);
    }
    out
}

pub fn summarize(cfg: &ExperimentConfig, plan: &Plan, runs: &[RunResult]) -> Result<Summary> {
    let baseline = point(BASELINE, None, None, &cfg.baseline_seeds, runs, true);
    let mut points: Vec<PointSummary> = plan
        .points
        .iter()
        .map(|p| point(p.label(), p.family, p.value, &cfg.seeds, runs, false))
        .collect();
    for p in &mut points {
        p.improvement = p.best.zip(baseline.mean).map(|(b, m)| b - m);
    }
    let mut best_point: Option<(&str, f64)> = None;
    for p in &points {
        if let Some(b) = p.best {
            if best_point.is_none_or(|(_, top)| b > top) {
                best_point = Some((&p.label, b));
            }
        }
    }
    Ok(Summary {
        arch: cfg.arch.clone(),
        swept: cfg.swept().map(str::to_string),
        last_epoch: cfg.baseline()?.last_epoch(),
        baseline,
        best_point: best_point.map(|(l, _)| l.to_string()),
        points,
        runs: runs.to_vec(),
    })
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), format_g6)
}

impl Summary {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(
            "label\tfamily\tvalue\truns\tmissing\tmean_test_acc\tbest_test_acc\tbest_seed\timprovement\n",
        );
        for p in std::iter::once(&self.baseline).chain(&self.points) {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                p.label,
                opt_num(p.family),
                opt_num(p.value),
                p.seeds.len(),
                p.missing.len(),
                opt_num(p.mean),
                opt_num(p.best),
                p.best_seed.map_or_else(|| "NA".into(), |s| s.to_string()),
                opt_num(p.improvement),
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(SUMMARY_JSON), &serde_json::to_string_pretty(self)?)?;
        write_text(&dir.join(SUMMARY_TSV), &self.to_tsv())
    }

    pub fn read(path: &Path) -> Result<Summary> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading summary {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing summary {}", path.display()))
    }

    pub fn metrics_path(&self, root: &Path, label: &str, seed: u64) -> Option<PathBuf> {
        self.runs
            .iter()
            .find(|r| r.label == label && r.seed == seed)
            .map(|r| root.join(&r.metrics))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(label: &str, seed: u64, acc: f64) -> RunResult {
        RunResult {
            label: label.into(),
            seed,
            baseline: label == BASELINE,
            final_train_acc: 100.0,
            final_test_acc: acc,
            metrics: PathBuf::new(),
        }
    }

    #[test]
    fn best_and_first_seed_tie_break() {
        let runs = [result("S1_0.5", 3, 70.0), result("S1_0.5", 1, 72.0), result("S1_0.5", 2, 72.0)];
        let p = point("S1_0.5", None, Some(0.5), &[3, 1, 2, 9], &runs, false);
        assert_eq!(p.best, Some(72.0));
        assert_eq!(p.best_seed, Some(1));
        assert_eq!(p.missing, vec![9]);
        assert!((p.mean.unwrap() - 214.0 / 3.0).abs() < 1e-12);
        let none = point("S1_0.1", None, None, &[0], &runs, false);
        assert_eq!((none.mean, none.best), (None, None));
    }
}
