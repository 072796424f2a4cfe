//! Seeded, portable random streams.
//!
//! Every consumer derives its own ChaCha8 stream from `(seed, domain, stream)`
//! so that, for example, re-drawing amplification layers at a phase boundary
//! never perturbs the mini-batch order. Integer sampling is done here with
//! explicit rejection rather than through `rand`'s range helpers, whose
//! algorithms are allowed to change between releases.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    Shuffle = 2,
    AmpSelection = 3,
    Subset = 4,
    Synthetic = 5,
    Augment = 6,
}

pub fn stream(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..n` (`n > 0`).
pub fn uniform_below<R: RngCore>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "empty range");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % n) as usize;
        }
    }
}

/// Uniform `f64` in `[0, 1)` from the top 53 bits.
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn shuffle<R: RngCore, X>(rng: &mut R, items: &mut [X]) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i + 1);
        items.swap(i, j);
    }
}

/// `k` distinct indices from `0..n`, in draw order (partial Fisher–Yates).
pub fn sample_indices<R: RngCore>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_below(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
