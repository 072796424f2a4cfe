//! Forward and backward rules for every differentiable op, on raw row-major
//! buffers. The graph owns shapes and bookkeeping; these functions only do
//! arithmetic.

use crate::tensor::{gemm, MatRef, Scalar};

pub(crate) fn linear_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<T> {
    let mut y = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    gemm(
        MatRef::new(x, n, d_in),
        MatRef::new(w, d_out, d_in).t(),
        T::one(),
        &mut y,
    );
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn linear_backward<T: Scalar>(
    g: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dx = vec![T::zero(); n * d_in];
    gemm(
        MatRef::new(g, n, d_out),
        MatRef::new(w, d_out, d_in),
        T::zero(),
        &mut dx,
    );
    let mut dw = vec![T::zero(); d_out * d_in];
    gemm(
        MatRef::new(g, n, d_out).t(),
        MatRef::new(x, n, d_in),
        T::zero(),
        &mut dw,
    );
    let mut db = vec![T::zero(); d_out];
    for row in g.chunks_exact(d_out) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    (dx, dw, db)
}

/// Geometry of a 2-D cross-correlation over an `[N, C, H, W]` batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// `None` when the output would have a non-positive extent.
    pub fn new(
        input: [usize; 4],
        f: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        let [n, c, h, w] = input;
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return None;
        }
        Some(ConvGeom {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Whether the conv is a plain 1x1 channel mix, in which case the input
    /// plane is already its own column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `lo..hi` whose input column `oj·stride + kj − pad` lies
/// inside the image.
fn valid_cols(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let (s, pad) = (g.stride, g.pad);
    let lo = if kj >= pad { 0 } else { (pad - kj).div_ceil(s) };
    let hi = if g.w + pad <= kj {
        0
    } else {
        ((g.w - 1 + pad - kj) / s + 1).min(g.ow)
    };
    (lo.min(hi), hi)
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kj);
                for oi in 0..g.oh {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                    if ii < 0 || ii as usize >= g.h || lo == hi {
                        out_row.fill(T::zero());
                        continue;
                    }
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    let src = &x[(c * g.h + ii as usize) * g.w..][..g.w];
                    let first = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        out_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (v, &sv) in out_row[lo..hi]
                            .iter_mut()
                            .zip(src[first..].iter().step_by(g.stride))
                        {
                            *v = sv;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_cols(g, kj);
                if lo == hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for oi in 0..g.oh {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii as usize >= g.h {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + ii as usize) * g.w..][..g.w];
                    let s_row = &src[oi * g.ow + lo..oi * g.ow + hi];
                    if g.stride == 1 {
                        for (d, &v) in dst[first..first + hi - lo].iter_mut().zip(s_row) {
                            *d = *d + v;
                        }
                    } else {
                        for (d, &v) in dst[first..].iter_mut().step_by(g.stride).zip(s_row) {
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], k: &[T], b: &[T], g: &ConvGeom) -> Vec<T> {
    let plane = g.out_plane();
    let patch = g.patch();
    let in_img = g.c * g.h * g.w;
    let mut y = vec![T::zero(); g.n * g.f * plane];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); patch * plane]
    };
    for (xn, yn) in x.chunks_exact(in_img).zip(y.chunks_exact_mut(g.f * plane)) {
        for (f, row) in yn.chunks_exact_mut(plane).enumerate() {
            row.fill(b[f]);
        }
        let cols: &[T] = if g.is_pointwise() {
            xn
        } else {
            im2col(xn, g, &mut col);
            &col
        };
        gemm(
            MatRef::new(k, g.f, patch),
            MatRef::new(cols, patch, plane),
            T::one(),
            yn,
        );
    }
    y
}

/// Returns `(dx, dk, db)`.
/// Returns `(dx, dk, db)`; `dx` only when `need_dx`.
pub(crate) fn conv2d_backward<T: Scalar>(
    grad: &[T],
    x: &[T],
    k: &[T],
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let plane = g.out_plane();
    let patch = g.patch();
    let in_img = g.c * g.h * g.w;
    let mut dx = if need_dx {
        vec![T::zero(); x.len()]
    } else {
        Vec::new()
    };
    let mut dk = vec![T::zero(); k.len()];
    let mut db = vec![T::zero(); g.f];
    let pointwise = g.is_pointwise();
    let mut col = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); patch * plane]
    };
    let mut dcol = if pointwise || !need_dx {
        Vec::new()
    } else {
        vec![T::zero(); patch * plane]
    };
    for (n, (xn, gn)) in x
        .chunks_exact(in_img)
        .zip(grad.chunks_exact(g.f * plane))
        .enumerate()
    {
        for (f, row) in gn.chunks_exact(plane).enumerate() {
            db[f] = db[f] + sum_lanes(row);
        }
        let cols: &[T] = if pointwise {
            xn
        } else {
            im2col(xn, g, &mut col);
            &col
        };
        gemm(
            MatRef::new(gn, g.f, plane),
            MatRef::new(cols, patch, plane).t(),
            T::one(),
            &mut dk,
        );
        if !need_dx {
            continue;
        }
        let dxn = &mut dx[n * in_img..(n + 1) * in_img];
        if pointwise {
            gemm(
                MatRef::new(k, g.f, patch).t(),
                MatRef::new(gn, g.f, plane),
                T::zero(),
                dxn,
            );
        } else {
            gemm(
                MatRef::new(k, g.f, patch).t(),
                MatRef::new(gn, g.f, plane),
                T::zero(),
                &mut dcol,
            );
            col2im(&dcol, g, dxn);
        }
    }
    (need_dx.then_some(dx), dk, db)
}

/// Values a batch-norm node keeps for its backward rule.
#[derive(Clone, Debug)]
pub(crate) struct BnSaved<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub channels: usize,
    pub spatial: usize,
    /// Whether the normalization used batch statistics.
    pub batch_stats: bool,
}

/// Sum with eight independent accumulators so the loop vectorizes.
pub(crate) fn sum_lanes<T: Scalar>(xs: &[T]) -> T {
    fold_lanes(xs, |v| v)
}

fn fold_lanes<T: Scalar>(xs: &[T], f: impl Fn(T) -> T) -> T {
    let mut acc = [T::zero(); 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a = *a + f(v);
        }
    }
    let mut total = chunks.remainder().iter().fold(T::zero(), |s, &v| s + f(v));
    for a in acc {
        total = total + a;
    }
    total
}

fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut total = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for v in acc {
        total = total + v;
    }
    total
}

/// Per-channel biased mean and variance over `[N, C, spatial]`.
pub(crate) fn channel_moments<T: Scalar>(
    x: &[T],
    channels: usize,
    spatial: usize,
) -> (Vec<T>, Vec<T>) {
    let n = x.len() / (channels * spatial);
    let count = T::from_usize(n * spatial).unwrap();
    let mut mean = vec![T::zero(); channels];
    for img in x.chunks_exact(channels * spatial) {
        for (c, plane) in img.chunks_exact(spatial).enumerate() {
            mean[c] = mean[c] + sum_lanes(plane);
        }
    }
    for m in mean.iter_mut() {
        *m = *m / count;
    }
    let mut var = vec![T::zero(); channels];
    for img in x.chunks_exact(channels * spatial) {
        for (c, plane) in img.chunks_exact(spatial).enumerate() {
            let mu = mean[c];
            var[c] = var[c]
                + fold_lanes(plane, |v| {
                    let d = v - mu;
                    d * d
                });
        }
    }
    for v in var.iter_mut() {
        *v = *v / count;
    }
    (mean, var)
}

/// Normalizes with the given per-channel statistics and applies the affine.
pub(crate) fn batchnorm_apply<T: Scalar>(
    x: &[T],
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
    spatial: usize,
    batch_stats: bool,
) -> (Vec<T>, BnSaved<T>) {
    let channels = mean.len();
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for ((img, xh_img), y_img) in x
        .chunks_exact(channels * spatial)
        .zip(xhat.chunks_exact_mut(channels * spatial))
        .zip(y.chunks_exact_mut(channels * spatial))
    {
        for c in 0..channels {
            let range = c * spatial..(c + 1) * spatial;
            for ((&v, xh), out) in img[range.clone()]
                .iter()
                .zip(&mut xh_img[range.clone()])
                .zip(&mut y_img[range])
            {
                *xh = (v - mean[c]) * inv_std[c];
                *out = gamma[c] * *xh + beta[c];
            }
        }
    }
    (
        y,
        BnSaved {
            xhat,
            inv_std,
            channels,
            spatial,
            batch_stats,
        },
    )
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn batchnorm_backward<T: Scalar>(
    g: &[T],
    gamma: &[T],
    saved: &BnSaved<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (channels, spatial) = (saved.channels, saved.spatial);
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for (g_img, xh_img) in g
        .chunks_exact(channels * spatial)
        .zip(saved.xhat.chunks_exact(channels * spatial))
    {
        for c in 0..channels {
            let range = c * spatial..(c + 1) * spatial;
            dbeta[c] = dbeta[c] + sum_lanes(&g_img[range.clone()]);
            dgamma[c] = dgamma[c] + dot_lanes(&g_img[range.clone()], &xh_img[range]);
        }
    }
    let mut dx = vec![T::zero(); g.len()];
    let count = T::from_usize(g.len() / channels).unwrap();
    for ((g_img, xh_img), dx_img) in g
        .chunks_exact(channels * spatial)
        .zip(saved.xhat.chunks_exact(channels * spatial))
        .zip(dx.chunks_exact_mut(channels * spatial))
    {
        for c in 0..channels {
            let range = c * spatial..(c + 1) * spatial;
            let scale = gamma[c] * saved.inv_std[c];
            if saved.batch_stats {
                let k = scale / count;
                for ((&gv, &xh), out) in g_img[range.clone()]
                    .iter()
                    .zip(&xh_img[range.clone()])
                    .zip(&mut dx_img[range])
                {
                    *out = k * (count * gv - dbeta[c] - xh * dgamma[c]);
                }
            } else {
                for (&gv, out) in g_img[range.clone()].iter().zip(&mut dx_img[range]) {
                    *out = scale * gv;
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Pooling window geometry over `[N, C, H, W]`, no padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub planes: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
}

impl PoolGeom {
    pub fn new(input: [usize; 4], k: usize, stride: usize) -> Option<Self> {
        let [n, c, h, w] = input;
        if k == 0 || stride == 0 || h < k || w < k {
            return None;
        }
        Some(PoolGeom {
            planes: n * c,
            h,
            w,
            k,
            stride,
            oh: (h - k) / stride + 1,
            ow: (w - k) / stride + 1,
        })
    }
}

/// Window max; ties resolve to the first index in row-major scan order.
pub(crate) fn maxpool_forward<T: Scalar>(x: &[T], g: &PoolGeom) -> (Vec<T>, Vec<u32>) {
    if g.k == 2 && g.stride == 2 {
        return maxpool2x2_forward(x, g);
    }
    let mut y = Vec::with_capacity(g.planes * g.oh * g.ow);
    let mut arg = Vec::with_capacity(y.capacity());
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oi in 0..g.oh {
            for oj in 0..g.ow {
                let mut best = base + oi * g.stride * g.w + oj * g.stride;
                for ki in 0..g.k {
                    for kj in 0..g.k {
                        let idx = base + (oi * g.stride + ki) * g.w + oj * g.stride + kj;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                y.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (y, arg)
}

fn maxpool2x2_forward<T: Scalar>(x: &[T], g: &PoolGeom) -> (Vec<T>, Vec<u32>) {
    let mut y = Vec::with_capacity(g.planes * g.oh * g.ow);
    let mut arg = Vec::with_capacity(y.capacity());
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oi in 0..g.oh {
            let r0 = base + 2 * oi * g.w;
            let top = &x[r0..r0 + 2 * g.ow];
            let bottom = &x[r0 + g.w..r0 + g.w + 2 * g.ow];
            for (oj, (t, b)) in top.chunks_exact(2).zip(bottom.chunks_exact(2)).enumerate() {
                let mut best = (t[0], 0);
                for (v, off) in [(t[1], 1), (b[0], g.w), (b[1], g.w + 1)] {
                    if v > best.0 {
                        best = (v, off);
                    }
                }
                y.push(best.0);
                arg.push((r0 + 2 * oj + best.1) as u32);
            }
        }
    }
    (y, arg)
}

pub(crate) fn maxpool_backward<T: Scalar>(g: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&gv, &idx) in g.iter().zip(argmax) {
        dx[idx as usize] = dx[idx as usize] + gv;
    }
    dx
}

pub(crate) fn avgpool_forward<T: Scalar>(x: &[T], g: &PoolGeom) -> Vec<T> {
    let area = T::from_usize(g.k * g.k).unwrap();
    let mut y = Vec::with_capacity(g.planes * g.oh * g.ow);
    for p in 0..g.planes {
        let base = p * g.h * g.w;
        for oi in 0..g.oh {
            for oj in 0..g.ow {
                let mut acc = T::zero();
                for ki in 0..g.k {
                    let row = base + (oi * g.stride + ki) * g.w + oj * g.stride;
                    for kj in 0..g.k {
                        acc = acc + x[row + kj];
                    }
                }
                y.push(acc / area);
            }
        }
    }
    y
}

pub(crate) fn avgpool_backward<T: Scalar>(g: &[T], geom: &PoolGeom) -> Vec<T> {
    let area = T::from_usize(geom.k * geom.k).unwrap();
    let mut dx = vec![T::zero(); geom.planes * geom.h * geom.w];
    let mut it = g.iter();
    for p in 0..geom.planes {
        let base = p * geom.h * geom.w;
        for oi in 0..geom.oh {
            for oj in 0..geom.ow {
                let share = *it.next().unwrap() / area;
                for ki in 0..geom.k {
                    let row = base + (oi * geom.stride + ki) * geom.w + oj * geom.stride;
                    for kj in 0..geom.k {
                        dx[row + kj] = dx[row + kj] + share;
                    }
                }
            }
        }
    }
    dx
}

/// Mean softmax cross-entropy; returns `(loss, probabilities)`.
pub(crate) fn softmax_ce_forward<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
) -> (T, Vec<T>) {
    let mut probs = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    for ((row, prow), &label) in logits
        .chunks_exact(classes)
        .zip(probs.chunks_exact_mut(classes))
        .zip(labels)
    {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for (p, &v) in prow.iter_mut().zip(row) {
            *p = (v - max).exp();
            z = z + *p;
        }
        for p in prow.iter_mut() {
            *p = *p / z;
        }
        total = total + (z.ln() - (row[label] - max));
    }
    let n = T::from_usize(labels.len()).unwrap();
    (total / n, probs)
}

pub(crate) fn softmax_ce_backward<T: Scalar>(
    upstream: T,
    probs: &[T],
    labels: &[usize],
    classes: usize,
) -> Vec<T> {
    let scale = upstream / T::from_usize(labels.len()).unwrap();
    let mut dx = probs.to_vec();
    for (row, &label) in dx.chunks_exact_mut(classes).zip(labels) {
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * scale;
        }
    }
    dx
}
