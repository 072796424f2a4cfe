use rand::RngCore;

use crate::error::{bail, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Random horizontal flip plus random crop from a zero-padded image, applied
/// per sample to a `[N, C, H, W]` batch.
pub fn flip_crop<R: RngCore>(batch: &Tensor<f32>, pad: usize, r: &mut R) -> Result<Tensor<f32>> {
    let &[n, c, h, w] = batch.shape() else {
        bail!(Shape, "augmentation needs [N, C, H, W], got {:?}", batch.shape());
    };
    let src = batch.data();
    let mut out = vec![0.0f32; src.len()];
    for i in 0..n {
        let flip = r.next_u32() & 1 == 1;
        let dy = rng::uniform_below(r, 2 * pad + 1) as isize - pad as isize;
        let dx = rng::uniform_below(r, 2 * pad + 1) as isize - pad as isize;
        for ch in 0..c {
            let base = (i * c + ch) * h * w;
            for y in 0..h {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for x in 0..w {
                    let xx = if flip { w - 1 - x } else { x };
                    let sx = xx as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    out[base + y * w + x] = src[base + sy as usize * w + sx as usize];
                }
            }
        }
    }
    Tensor::from_vec(batch.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pad_is_flip_or_identity() {
        let t = Tensor::from_vec(&[1, 1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let mut r = rng::stream(0, rng::Domain::Shuffle, 99);
        for _ in 0..8 {
            let a = flip_crop(&t, 0, &mut r).unwrap();
            let d = a.data();
            assert!(d == t.data() || d == [3., 2., 1., 6., 5., 4.]);
        }
    }
}
