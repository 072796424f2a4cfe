use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{bail, Result};
use crate::rng::{self, Domain};
use crate::tensor::Tensor;

/// Gaussian blobs with unit covariance around scaled simplex vertices.
///
/// The mean of class `k` is `separation / √2 · e_k`, so every pair of class
/// means is exactly `separation` apart. Labels cycle through the classes and
/// the rows are then shuffled.
pub fn synth_gaussians(
    seed: u64,
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
) -> Result<Dataset> {
    if classes < 2 {
        bail!(Argument, "need at least 2 classes, got {}", classes);
    }
    if classes > dim {
        bail!(Argument, "{} classes do not fit a simplex in {} dimensions", classes, dim);
    }
    if n == 0 {
        bail!(Argument, "empty dataset requested");
    }
    let mut r = rng::stream(seed, Domain::Synthetic, 0);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    rng::shuffle(&mut r, &mut labels);
    let offset = separation / std::f64::consts::SQRT_2;
    let mut data = Vec::with_capacity(n * dim);
    for &label in &labels {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut r);
            let mean = if j == label { offset } else { 0.0 };
            data.push((mean + z) as f32);
        }
    }
    Dataset::new(Tensor::from_vec(&[n, dim], data)?, labels, classes)
}

/// Image-shaped classes: each class owns a smooth template (a few random
/// low-frequency plane waves per channel, scaled to unit RMS), and a sample is
/// `signal · template + N(0, 1)` noise, circularly shifted by up to `max_shift`
/// pixels in each direction.
pub fn synth_patterns(
    seed: u64,
    n: usize,
    classes: usize,
    shape: [usize; 3],
    signal: f64,
    max_shift: usize,
) -> Result<Dataset> {
    let [c, h, w] = shape;
    if classes < 2 {
        bail!(Argument, "need at least 2 classes, got {}", classes);
    }
    if n == 0 || c * h * w == 0 {
        bail!(Argument, "empty dataset requested");
    }
    if max_shift >= h.min(w) {
        bail!(Argument, "shift {} does not fit {}x{} images", max_shift, h, w);
    }
    let plane = h * w;
    let mut r = rng::stream(seed, Domain::Synthetic, 1);
    let templates: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let mut t = vec![0.0; c * plane];
            for ch in 0..c {
                for _ in 0..3 {
                    let fy = rng::uniform_below(&mut r, 4) as f64;
                    let fx = rng::uniform_below(&mut r, 4) as f64;
                    let phase = rng::unit_f64(&mut r) * std::f64::consts::TAU;
                    let amp = 0.5 + rng::unit_f64(&mut r);
                    for y in 0..h {
                        for x in 0..w {
                            let arg = std::f64::consts::TAU * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64);
                            t[ch * plane + y * w + x] += amp * (arg + phase).cos();
                        }
                    }
                }
            }
            let rms = (t.iter().map(|v| v * v).sum::<f64>() / t.len() as f64).sqrt();
            t.iter().map(|v| v / rms.max(1e-12)).collect()
        })
        .collect();

    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    rng::shuffle(&mut r, &mut labels);
    let span = 2 * max_shift + 1;
    let mut data = Vec::with_capacity(n * c * plane);
    for &label in &labels {
        let dy = rng::uniform_below(&mut r, span) + h - max_shift;
        let dx = rng::uniform_below(&mut r, span) + w - max_shift;
        let t = &templates[label];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let z: f64 = StandardNormal.sample(&mut r);
                    let v = t[ch * plane + ((y + dy) % h) * w + (x + dx) % w];
                    data.push((signal * v + z) as f32);
                }
            }
        }
    }
    Dataset::new(Tensor::from_vec(&[n, c, h, w], data)?, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = synth_gaussians(4, 30, 3, 5, 2.0).unwrap();
        assert_eq!(a, synth_gaussians(4, 30, 3, 5, 2.0).unwrap());
        assert_ne!(a, synth_gaussians(5, 30, 3, 5, 2.0).unwrap());
        assert_eq!(a.class_counts(), vec![10, 10, 10]);
        assert_eq!(a.images.shape(), &[30, 5]);
    }

    #[test]
    fn class_means_land_near_vertices() {
        let ds = synth_gaussians(1, 4000, 2, 2, 10.0).unwrap();
        let mut sum = [[0.0f64; 2]; 2];
        for (i, &l) in ds.labels.iter().enumerate() {
            for j in 0..2 {
                sum[l][j] += ds.images.data()[i * 2 + j] as f64;
            }
        }
        let offset = 10.0 / 2f64.sqrt();
        for l in 0..2 {
            for j in 0..2 {
                let expect = if j == l { offset } else { 0.0 };
                assert!((sum[l][j] / 2000.0 - expect).abs() < 0.1);
            }
        }
    }

    #[test]
    fn patterns_are_image_shaped_and_seeded() {
        let a = synth_patterns(2, 40, 4, [3, 8, 8], 1.0, 1).unwrap();
        assert_eq!(a.images.shape(), &[40, 3, 8, 8]);
        assert_eq!(a.class_counts(), vec![10; 4]);
        assert_eq!(a, synth_patterns(2, 40, 4, [3, 8, 8], 1.0, 1).unwrap());
        assert!(synth_patterns(2, 40, 4, [3, 8, 8], 1.0, 8).is_err());
        assert!(synth_patterns(2, 40, 1, [3, 8, 8], 1.0, 0).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(synth_gaussians(0, 10, 1, 4, 1.0).is_err());
        assert!(synth_gaussians(0, 10, 5, 4, 1.0).is_err());
    }
}
