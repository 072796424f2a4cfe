//! Datasets, CIFAR-10 ingestion, synthetic corpora and metrics files.

mod augment;
mod cifar;
mod metrics;
mod synth;

pub use augment::flip_crop;
pub use cifar::{
    decode_records, encode_record, find_cifar10_dir, load_cifar10, read_batch_file,
    CIFAR_IMAGE_BYTES, CIFAR_RECORD_BYTES,
};
pub use metrics::{format_g6, read_metrics, write_metrics, MetricsRecord, METRICS_HEADER};
pub use synth::{synth_gaussians, synth_patterns};

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng::{self, Domain};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.shape()[0] != labels.len() {
            bail!(
                Shape,
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            );
        }
        if num_classes == 0 {
            bail!(Argument, "num_classes must be positive");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            bail!(Argument, "label {} outside 0..{}", bad, num_classes);
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape, e.g. `[3, 32, 32]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            images: self.images.select_rows(rows)?,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
        })
    }

    /// Same samples viewed with a different per-sample shape.
    pub fn reshape_samples(self, sample_shape: &[usize]) -> Result<Dataset> {
        let mut shape = vec![self.len()];
        shape.extend_from_slice(sample_shape);
        Ok(Dataset {
            images: self.images.reshape(&shape)?,
            ..self
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Seeded sample of `n` rows, returned in ascending source order.
///
/// Stratified sampling deals classes round-robin, so per-class counts differ
/// by at most one unless a class runs out of samples.
pub fn subset(ds: &Dataset, n: usize, seed: u64, stratified: bool) -> Result<Dataset> {
    if n > ds.len() {
        bail!(Argument, "subset of {} requested from {} samples", n, ds.len());
    }
    if n == 0 {
        bail!(Argument, "empty subset requested");
    }
    let mut r = rng::stream(seed, Domain::Subset, stratified as u64);
    let mut rows = if stratified {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
        for (i, &l) in ds.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        for members in &mut by_class {
            rng::shuffle(&mut r, members);
        }
        let mut order: Vec<usize> = (0..ds.num_classes).collect();
        rng::shuffle(&mut r, &mut order);
        let mut rows = Vec::with_capacity(n);
        let mut round = 0;
        while rows.len() < n {
            for &c in &order {
                if rows.len() == n {
                    break;
                }
                if let Some(&i) = by_class[c].get(round) {
                    rows.push(i);
                }
            }
            round += 1;
        }
        rows
    } else {
        rng::sample_indices(&mut r, ds.len(), n)
    };
    rows.sort_unstable();
    ds.select(&rows)
}

/// Per-channel mean and standard deviation; channel = axis 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(channels: usize) -> Self {
        NormalizationStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn compute(ds: &Dataset) -> Result<Self> {
        let (channels, spatial) = channel_layout(&ds.images);
        let x = ds.images.data();
        let count = (ds.len() * spatial) as f64;
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for (c, m) in mean.iter_mut().enumerate() {
            let s: f64 = plane_iter(x, ds.len(), channels, spatial, c)
                .map(|v| v as f64)
                .sum();
            *m = s / count;
        }
        for (c, v) in var.iter_mut().enumerate() {
            let s: f64 = plane_iter(x, ds.len(), channels, spatial, c)
                .map(|p| (p as f64 - mean[c]).powi(2))
                .sum();
            *v = s / count;
        }
        Ok(NormalizationStats {
            mean,
            std: var.into_iter().map(f64::sqrt).collect(),
        })
    }
}

fn channel_layout(images: &Tensor<f32>) -> (usize, usize) {
    let shape = images.shape();
    let channels = shape.get(1).copied().unwrap_or(1);
    let spatial = shape.iter().skip(2).product();
    (channels, spatial)
}

fn plane_iter(
    x: &[f32],
    n: usize,
    channels: usize,
    spatial: usize,
    c: usize,
) -> impl Iterator<Item = f32> + '_ {
    (0..n).flat_map(move |i| {
        let start = (i * channels + c) * spatial;
        x[start..start + spatial].iter().copied()
    })
}

/// Standardizes per channel with `stats`, or with statistics of `ds` itself.
pub fn normalize(
    ds: &Dataset,
    stats: Option<&NormalizationStats>,
) -> Result<(Dataset, NormalizationStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormalizationStats::compute(ds)?,
    };
    let (channels, spatial) = channel_layout(&ds.images);
    if stats.mean.len() != channels || stats.std.len() != channels {
        bail!(
            Shape,
            "stats cover {} channels, data has {}",
            stats.mean.len(),
            channels
        );
    }
    if let Some(c) = stats.std.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        bail!(Argument, "channel {} has non-positive std {}", c, stats.std[c]);
    }
    let mut images = ds.images.clone();
    for (i, v) in images.data_mut().iter_mut().enumerate() {
        let c = (i / spatial) % channels;
        *v = ((*v as f64 - stats.mean[c]) / stats.std[c]) as f32;
    }
    if !images.is_finite() {
        bail!(Numeric, "normalized images contain non-finite values");
    }
    let out = Dataset {
        images,
        labels: ds.labels.clone(),
        num_classes: ds.num_classes,
    };
    Ok((out, stats))
}
