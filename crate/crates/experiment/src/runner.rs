//! Executes every (schedule × seed) run of a config on a worker pool.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ampgrad_core::checkpoint;
use ampgrad_core::data::{read_metrics, write_metrics};
use ampgrad_core::nn::{build_model, ArchConfig};
use ampgrad_core::schedule::Schedule;
use ampgrad_core::trainer::{train, TrainOptions};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{prepare, Prepared};
use crate::summary::{summarize, Summary};
use crate::sweep::SweepPoint;

pub const THREADS_ENV: &str = "AMPGRAD_THREADS";
pub const BASELINE: &str = "baseline";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub label: String,
    pub schedule: Schedule,
    pub seed: u64,
    pub baseline: bool,
}

impl RunSpec {
    /// Run directory relative to the output root.
    pub fn rel_dir(&self) -> PathBuf {
        Path::new("runs").join(&self.label).join(format!("seed_{}", self.seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    pub baseline: bool,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    /// Metrics CSV relative to the output root.
    pub metrics: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub label: String,
    pub seed: u64,
    pub error: String,
}

pub struct Plan {
    pub points: Vec<SweepPoint>,
    pub runs: Vec<RunSpec>,
}

/// Baseline runs first (one per baseline seed), then each point per seed.
pub fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    let points = cfg.points()?;
    let mut seen = HashSet::from([BASELINE.to_string()]);
    for p in &points {
        if !seen.insert(p.label().to_string()) {
            bail!("schedule label '{}' appears twice (or names the baseline)", p.label());
        }
    }
    let baseline = cfg.baseline()?;
    let mut runs: Vec<RunSpec> = cfg
        .baseline_seeds
        .iter()
        .map(|&seed| RunSpec {
            label: BASELINE.into(),
            schedule: baseline.clone(),
            seed,
            baseline: true,
        })
        .collect();
    for p in &points {
        for &seed in &cfg.seeds {
            runs.push(RunSpec {
                label: p.label().to_string(),
                schedule: p.schedule.clone(),
                seed,
                baseline: false,
            });
        }
    }
    Ok(Plan { points, runs })
}

/// Worker count: `AMPGRAD_THREADS` if set, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{}='{}' is not a count", THREADS_ENV, v))?;
            if n == 0 {
                bail!("{} must be at least 1", THREADS_ENV);
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{}.tmp{}", name, std::process::id()));
    write(&tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |tmp| {
        fs::write(tmp, text).with_context(|| format!("writing {}", tmp.display()))
    })
}

pub struct Outcome {
    pub summary: Summary,
    pub failures: Vec<RunFailure>,
}

/// Runs the whole config. Failed runs are reported in `failures.txt` and in
/// the outcome; the summary covers the runs that finished.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let plan = plan(cfg)?;
    let data = prepare(&cfg.dataset)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    write_text(&cfg.output_dir.join("config.toml"), &cfg.to_toml()?)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()?;
    log::info!("{} runs on {} workers", plan.runs.len(), pool.current_num_threads());
    let results: Vec<std::result::Result<RunResult, RunFailure>> = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|spec| {
                run_one(cfg, &data, spec).map_err(|e| RunFailure {
                    label: spec.label.clone(),
                    seed: spec.seed,
                    error: format!("{:#}", e),
                })
            })
            .collect()
    });
    let (mut done, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(r) => done.push(r),
            Err(f) => {
                log::error!("run {} seed {} failed: {}", f.label, f.seed, f.error);
                failures.push(f);
            }
        }
    }
    let failure_path = cfg.output_dir.join("failures.txt");
    if failures.is_empty() {
        if failure_path.exists() {
            fs::remove_file(&failure_path)?;
        }
    } else {
        let text: String = failures
            .iter()
            .map(|f| format!("{}\tseed {}\t{}\n", f.label, f.seed, f.error))
            .collect();
        write_text(&failure_path, &text)?;
    }
    let summary = summarize(cfg, &plan, &done)?;
    summary.write(&cfg.output_dir)?;
    Ok(Outcome { summary, failures })
}

/// One training run; writes metrics, selection dump and final checkpoint.
pub fn run_one(cfg: &ExperimentConfig, data: &Prepared, spec: &RunSpec) -> Result<RunResult> {
    let dir = cfg.output_dir.join(spec.rel_dir());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let arch = ArchConfig::preset(&cfg.arch, data.train.sample_shape(), data.train.num_classes)?;
    let mut model = build_model::<f32>(&arch, spec.seed)?;
    model.set_amp_point(cfg.amp_point.into());
    let opts = TrainOptions {
        seed: spec.seed,
        batch_size: cfg.batch_size,
        group: cfg.group_spec(),
        hooks_enabled: true,
        augment: cfg.augment,
        abort_checkpoint: Some(dir.join("diverged.ckpt")),
    };
    log::info!("start {} seed {}", spec.label, spec.seed);
    let out = train(&mut model, &spec.schedule, &data.train, &data.test, &opts, |_| {})?;

    let metrics = dir.join("metrics.csv");
    write_atomic(&metrics, |tmp| Ok(write_metrics(&out.records, tmp)?))?;
    let dump: String = out.selections.iter().map(|s| s.dump_line() + "\n").collect();
    write_text(&dir.join("selections.txt"), &dump)?;
    write_atomic(&dir.join("model.ckpt"), |tmp| Ok(checkpoint::save(&model, tmp)?))?;

    // summaries use the values as persisted, so they can be recomputed from the CSVs
    let persisted = read_metrics(&metrics)?;
    let last = persisted.last().context("schedule produced no epochs")?;
    log::info!(
        "done {} seed {}: train {:.2}% test {:.2}%",
        spec.label,
        spec.seed,
        last.train_acc,
        last.test_acc
    );
    Ok(RunResult {
        label: spec.label.clone(),
        seed: spec.seed,
        baseline: spec.baseline,
        final_train_acc: last.train_acc,
        final_test_acc: last.test_acc,
        metrics: spec.rel_dir().join("metrics.csv"),
    })
}
