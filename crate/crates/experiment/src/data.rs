use ampgrad_core::data::{
    load_cifar10, normalize, subset, synth_gaussians, synth_patterns, Dataset, NormalizationStats,
};
use anyhow::{Context, Result};

use crate::config::DatasetSpec;

/// Train and test sets, both standardized with the training statistics.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub stats: NormalizationStats,
}

pub fn prepare(spec: &DatasetSpec) -> Result<Prepared> {
    let (train, test) = match spec {
        DatasetSpec::Cifar10 {
            dir,
            train_subset,
            test_subset,
            subset_seed,
        } => {
            let (mut train, mut test) = load_cifar10(dir)
                .with_context(|| format!("loading CIFAR-10 from {}", dir.display()))?;
            if let Some(n) = train_subset {
                train = subset(&train, *n, *subset_seed, true)?;
            }
            if let Some(n) = test_subset {
                test = subset(&test, *n, *subset_seed, true)?;
            }
            (train, test)
        }
        // one draw split in two, so both halves share the class structure
        DatasetSpec::Synth {
            seed,
            train,
            test,
            classes,
            dim,
            separation,
        } => split(synth_gaussians(*seed, train + test, *classes, *dim, *separation)?, *train)?,
        DatasetSpec::Patterns {
            seed,
            train,
            test,
            classes,
            shape,
            signal,
            max_shift,
        } => split(
            synth_patterns(*seed, train + test, *classes, *shape, *signal, *max_shift)?,
            *train,
        )?,
    };
    let (train, stats) = normalize(&train, None)?;
    let (test, _) = normalize(&test, Some(&stats))?;
    Ok(Prepared { train, test, stats })
}

fn split(all: Dataset, n_train: usize) -> Result<(Dataset, Dataset)> {
    let rows: Vec<usize> = (0..all.len()).collect();
    let (a, b) = rows.split_at(n_train.min(all.len()));
    Ok((all.select(a)?, all.select(b)?))
}
