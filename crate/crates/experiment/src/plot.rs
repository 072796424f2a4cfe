//! Tab-separated plot data derived from a summary and its run CSVs.
//!
//! * `plot_ratio.tsv`: accuracy against the swept ratio (ratio sweeps);
//! * `plot_gamma.tsv`: accuracy against Γ (factor sweeps);
//! * `plot_epoch.tsv`: mean test accuracy per epoch for every schedule.
//!
//! Each carries the baseline mean as a reference column.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ampgrad_core::data::{format_g6, read_metrics};
use anyhow::{bail, Context, Result};

use crate::runner::write_text;
use crate::summary::{PointSummary, Summary};

pub const RATIO_TSV: &str = "plot_ratio.tsv";
pub const GAMMA_TSV: &str = "plot_gamma.tsv";
pub const EPOCH_TSV: &str = "plot_epoch.tsv";

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), format_g6)
}

/// Writes the plot files next to `summary_path` and returns their paths.
pub fn emit_plot_data(summary_path: &Path) -> Result<Vec<PathBuf>> {
    let summary = Summary::read(summary_path)?;
    let root = summary_path.parent().unwrap_or(Path::new("."));
    let all: Vec<&PointSummary> = std::iter::once(&summary.baseline).chain(&summary.points).collect();

    let missing: Vec<String> = all
        .iter()
        .flat_map(|p| p.missing.iter().map(move |s| format!("{} seed {}", p.label, s)))
        .collect();
    if !missing.is_empty() {
        bail!("missing runs: {}", missing.join(", "));
    }

    let base_mean = summary.baseline.mean;
    let mut written = Vec::new();
    let sweep_file = match summary.swept.as_deref() {
        Some("beta") => Some((RATIO_TSV, "ratio")),
        Some("gamma") => Some((GAMMA_TSV, "gamma")),
        _ => None,
    };
    if let Some((name, column)) = sweep_file {
        let mut s = format!("family\t{}\tmean_test_acc\tbest_test_acc\tbaseline_mean\n", column);
        for p in &summary.points {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                num(p.family),
                num(p.value),
                num(p.mean),
                num(p.best),
                num(base_mean)
            );
        }
        let path = root.join(name);
        write_text(&path, &s)?;
        written.push(path);
    }

    // per-epoch means over the finished seeds of each schedule
    let epochs = summary.last_epoch;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(all.len());
    for p in &all {
        let mut sums = vec![0.0; epochs];
        for &seed in &p.seeds {
            let path = summary
                .metrics_path(root, &p.label, seed)
                .with_context(|| format!("no run entry for {} seed {}", p.label, seed))?;
            let records = read_metrics(&path)?;
            if records.len() != epochs {
                bail!("{} has {} epochs, expected {}", path.display(), records.len(), epochs);
            }
            for (sum, r) in sums.iter_mut().zip(&records) {
                *sum += r.test_acc;
            }
        }
        let n = p.seeds.len().max(1) as f64;
        columns.push(sums.into_iter().map(|s| s / n).collect());
    }
    let mut s = String::from("epoch\tbaseline_mean");
    for p in &summary.points {
        s.push('\t');
        s.push_str(&p.label);
    }
    s.push('\n');
    for e in 0..epochs {
        let _ = write!(s, "{}", e + 1);
        for col in &columns {
            let _ = write!(s, "\t{}", format_g6(col[e]));
        }
        s.push('\n');
    }
    let path = root.join(EPOCH_TSV);
    write_text(&path, &s)?;
    written.push(path);
    Ok(written)
}
