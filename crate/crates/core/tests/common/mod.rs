#![allow(dead_code)]

use lvglasso::{PenaltyMask, SymMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A Aᵀ / m + 0.1 I` with standard normal-ish entries in `A`.
pub fn random_spd(rng: &mut impl Rng, dim: usize) -> SymMatrix {
    let m = dim + 3;
    let a = DMatrix::from_fn(dim, m, |_, _| rng.random_range(-1.0..1.0));
    let mut w = &a * a.transpose() / m as f64;
    for i in 0..dim {
        w[(i, i)] += 0.1;
    }
    SymMatrix::symmetrize(&w).unwrap()
}

/// Off-diagonal weights in `[0, max)` with roughly a quarter of them zero;
/// diagonal zero.
pub fn random_mask(rng: &mut impl Rng, dim: usize, max: f64) -> PenaltyMask {
    let vals: Vec<f64> = (0..dim * dim)
        .map(|_| {
            if rng.random::<f64>() < 0.25 {
                0.0
            } else {
                rng.random_range(0.0..max)
            }
        })
        .collect();
    PenaltyMask::new(SymMatrix::from_upper_fn(dim, |i, j| {
        if i == j {
            0.0
        } else {
            vals[i * dim + j]
        }
    }))
    .unwrap()
}

/// Dense brute-force minimum of `f` over `center + step * k`, `k` in
/// `[-half, half]^n`.
pub fn grid_min(
    center: &[f64],
    step: f64,
    half: i64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (f64, Vec<f64>) {
    let n = center.len();
    let mut idx = vec![-half; n];
    let mut x = vec![0.0; n];
    let mut best = (f64::INFINITY, center.to_vec());
    loop {
        for k in 0..n {
            x[k] = center[k] + step * idx[k] as f64;
        }
        let v = f(&x);
        if v < best.0 {
            best = (v, x.clone());
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            idx[k] += 1;
            if idx[k] > half {
                idx[k] = -half;
                k += 1;
            } else {
                break;
            }
        }
    }
}
