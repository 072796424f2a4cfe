//! Phased mini-batch SGD with per-phase gradient amplification.
//!
//! For every phase of the schedule: draw and install an amplified layer set
//! when the phase ratio is positive, train the phase's epochs, remove the
//! transforms, and evaluate. Each epoch is also evaluated and reported.

use std::path::PathBuf;
use std::time::Instant;

use crate::amplification::{
    apply_amplification, get_gradient_amp_layers, remove_amplification, AmpSelection, GroupSpec,
};
use crate::autograd::{sgd_step, Mode};
use crate::checkpoint;
use crate::data::{flip_crop, Dataset, MetricsRecord};
use crate::error::{bail, Error, Result};
use crate::nn::Model;
use crate::rng::{self, Domain};
use crate::schedule::Schedule;
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub seed: u64,
    pub batch_size: usize,
    pub group: GroupSpec,
    /// When false, transforms stay registered but backward ignores them.
    pub hooks_enabled: bool,
    /// Random flips and 4-pixel crops on image batches.
    pub augment: bool,
    /// Where to write the last finite model if the loss diverges.
    pub abort_checkpoint: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 0,
            batch_size: 128,
            group: GroupSpec::default(),
            hooks_enabled: true,
            augment: false,
            abort_checkpoint: None,
        }
    }
}

/// Evaluation at the end of a phase, after its transforms were removed.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseEval {
    pub phase: usize,
    pub epoch: usize,
    pub test_acc: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub phase_evals: Vec<PhaseEval>,
    pub selections: Vec<AmpSelection>,
}

/// Passed to the observer after every epoch.
pub struct EpochReport<'a> {
    pub record: &'a MetricsRecord,
    /// Transforms that were installed while the epoch trained.
    pub active_transforms: usize,
    pub model: &'a Model<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
}

/// One SGD step on a batch. Nothing is updated if the loss or any gradient is
/// non-finite; the error then leaves the model at its pre-step state.
pub fn train_step(
    model: &mut Model<f32>,
    images: Tensor<f32>,
    labels: &[usize],
    lr: f64,
    hooks_enabled: bool,
) -> Result<StepStats> {
    let mut g = model.new_graph();
    g.set_hooks_enabled(hooks_enabled);
    let x = g.constant(images);
    let logits = model.forward(&mut g, x, Mode::Train)?;
    let correct = count_correct(g.value(logits)?, labels);
    let loss = g.softmax_cross_entropy(logits, labels)?;
    let loss_value = g.value(loss)?.item().unwrap_or(f32::NAN) as f64;
    if !loss_value.is_finite() {
        bail!(Numeric, "loss is {}", loss_value);
    }
    let grads = g.backward(loss)?;
    if let Some((id, _)) = grads.iter().find(|(_, t)| !t.is_finite()) {
        bail!(Numeric, "gradient of {} is non-finite", model.param_names()[id.0]);
    }
    sgd_step(model.params_mut(), &grads, lr)?;
    Ok(StepStats {
        loss: loss_value,
        correct,
    })
}

fn count_correct(logits: &Tensor<f32>, labels: &[usize]) -> usize {
    let classes = logits.shape()[1];
    logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &label)| argmax(row) == label)
        .count()
}

/// Index of the largest value; the first one wins ties.
fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy in percent, using running batch-norm statistics.
pub fn evaluate(model: &mut Model<f32>, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        bail!(Argument, "cannot evaluate on an empty dataset");
    }
    let mut correct = 0;
    let mut start = 0;
    while start < ds.len() {
        let end = (start + EVAL_BATCH).min(ds.len());
        let logits = model.logits(&ds.images.slice_rows(start, end)?)?;
        correct += count_correct(&logits, &ds.labels[start..end]);
        start = end;
    }
    Ok(100.0 * correct as f64 / ds.len() as f64)
}

/// Mini-batch index lists for `epoch`; a trailing batch of one is dropped
/// because batch statistics are undefined for it.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, Domain::Shuffle, epoch as u64), &mut order);
    order
        .chunks(batch_size)
        .filter(|c| c.len() > 1)
        .map(<[usize]>::to_vec)
        .collect()
}

pub fn train(
    model: &mut Model<f32>,
    schedule: &Schedule,
    train_set: &Dataset,
    test_set: &Dataset,
    opts: &TrainOptions,
    mut observer: impl FnMut(&EpochReport<'_>),
) -> Result<TrainOutcome> {
    if train_set.len() < 2 {
        bail!(Argument, "training set needs at least 2 samples");
    }
    if test_set.is_empty() {
        bail!(Argument, "test set is empty");
    }
    if opts.batch_size < 2 {
        bail!(Argument, "batch size must be at least 2, got {}", opts.batch_size);
    }
    let mut out = TrainOutcome::default();
    remove_amplification(model);
    for (idx, phase) in schedule.phases().iter().enumerate() {
        let phase_no = idx + 1;
        if phase.amplified() {
            let sel = get_gradient_amp_layers(
                model,
                phase.beta,
                phase.gamma,
                &opts.group,
                opts.seed,
                phase_no,
            )?;
            apply_amplification(model, &sel)?;
            log::info!("{}", sel.dump_line());
            out.selections.push(sel);
        }
        for epoch in schedule.phase_start(phase_no) + 1..=phase.end_epoch {
            let started = Instant::now();
            let (train_loss, train_acc) = run_epoch(model, train_set, phase.lr, epoch, opts)?;
            let active_transforms = model.grad_transforms().len();
            let phase_end = epoch == phase.end_epoch;
            if phase_end {
                remove_amplification(model);
            }
            let test_acc = evaluate(model, test_set)?;
            if phase_end {
                out.phase_evals.push(PhaseEval {
                    phase: phase_no,
                    epoch,
                    test_acc,
                });
            }
            let record = MetricsRecord {
                epoch,
                phase: phase_no,
                lr: phase.lr,
                beta: phase.beta,
                gamma: phase.gamma,
                train_loss,
                train_acc,
                test_acc,
                wall_ms: started.elapsed().as_millis() as u64,
                seed: opts.seed,
            };
            log::info!(
                "epoch {} phase {} loss {:.4} train {:.2}% test {:.2}%",
                epoch,
                phase_no,
                train_loss,
                train_acc,
                test_acc
            );
            observer(&EpochReport {
                record: &record,
                active_transforms,
                model,
            });
            out.records.push(record);
        }
    }
    Ok(out)
}

fn run_epoch(
    model: &mut Model<f32>,
    ds: &Dataset,
    lr: f64,
    epoch: usize,
    opts: &TrainOptions,
) -> Result<(f64, f64)> {
    let mut aug_rng = rng::stream(opts.seed, Domain::Augment, epoch as u64);
    let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
    for (b, rows) in epoch_batches(ds.len(), opts.batch_size, opts.seed, epoch)
        .into_iter()
        .enumerate()
    {
        let mut images = ds.images.select_rows(&rows)?;
        if opts.augment {
            images = flip_crop(&images, 4, &mut aug_rng)?;
        }
        let labels: Vec<usize> = rows.iter().map(|&r| ds.labels[r]).collect();
        let stats = match train_step(model, images, &labels, lr, opts.hooks_enabled) {
            Ok(s) => s,
            Err(Error::Numeric(msg)) => return Err(abort(model, opts, epoch, b, msg)),
            Err(e) => return Err(e),
        };
        loss_sum += stats.loss * rows.len() as f64;
        correct += stats.correct;
        seen += rows.len();
    }
    Ok((loss_sum / seen as f64, 100.0 * correct as f64 / seen as f64))
}

fn abort(model: &Model<f32>, opts: &TrainOptions, epoch: usize, batch: usize, msg: String) -> Error {
    let saved = match &opts.abort_checkpoint {
        Some(path) => match checkpoint::save(model, path) {
            Ok(()) => format!("; last finite model saved to {}", path.display()),
            Err(e) => format!("; saving last finite model failed: {}", e),
        },
        None => String::new(),
    };
    Error::Numeric(format!(
        "training diverged at epoch {} batch {}: {}{}",
        epoch, batch, msg, saved
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussians;
    use crate::nn::{build_model, ArchConfig};
    use crate::schedule::parse_schedule;

    #[test]
    fn batches_cover_everything_once() {
        let b = epoch_batches(10, 4, 1, 1);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(epoch_batches(9, 4, 1, 1).concat().len(), 8);
        assert_eq!(b, epoch_batches(10, 4, 1, 1));
        assert_ne!(b, epoch_batches(10, 4, 1, 2));
    }

    #[test]
    fn argmax_first_wins() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn records_cover_epochs() {
        let ds = synth_gaussians(0, 64, 3, 4, 4.0).unwrap();
        let cfg = ArchConfig::preset("mlp-tiny", &[4], 3).unwrap();
        let mut m = build_model(&cfg, 0).unwrap();
        let s = parse_schedule("[(2,0.1,0,1),(3,0.05,0,1)]").unwrap();
        let opts = TrainOptions {
            batch_size: 16,
            ..Default::default()
        };
        let out = train(&mut m, &s, &ds, &ds, &opts, |_| {}).unwrap();
        let epochs: Vec<usize> = out.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![1, 2, 3]);
        assert_eq!(out.phase_evals.len(), 2);
        assert_eq!(out.records[2].lr, 0.05);
    }

    #[test]
    fn divergence_aborts_with_checkpoint() {
        let ds = synth_gaussians(0, 32, 2, 4, 4.0).unwrap();
        let cfg = ArchConfig::preset("mlp-tiny", &[4], 2).unwrap();
        let mut m = build_model(&cfg, 0).unwrap();
        let s = parse_schedule("[(5,1e30,0,1)]").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("last.ampg");
        let opts = TrainOptions {
            batch_size: 8,
            abort_checkpoint: Some(path.clone()),
            ..Default::default()
        };
        let err = train(&mut m, &s, &ds, &ds, &opts, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{}", err);
        let mut restored = build_model(&cfg, 9).unwrap();
        checkpoint::load(&mut restored, &path).unwrap();
        assert!(restored.params().iter().all(|p| p.is_finite()));
        assert_eq!(restored.params(), m.params());
    }
}
