#![allow(dead_code)]

use hierarchy_core::{Field64, Grid64, State64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trigonometric polynomial with modes `1..=kmax`, amplitudes decaying like `decay^k`.
pub fn trig_field(grid: &Grid64, seed: u64, kmax: usize, decay: f64) -> Field64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64)> = (1..=kmax)
        .map(|k| {
            let w = decay.powi(k as i32 - 1);
            (rng.gen_range(-1.0..1.0) * w, rng.gen_range(-1.0..1.0) * w)
        })
        .collect();
    Field64::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let k = (i + 1) as f64;
                a * (k * x).cos() + b * (k * x).sin()
            })
            .sum()
    })
}

/// Positive density `mean·(1 + amp·g/max|g|)` and a velocity of size `vel`.
pub fn positive_state(grid: &Grid64, seed: u64, amp: f64, vel: f64) -> State64 {
    let g = trig_field(grid, seed, 6, 0.7);
    let gm = g.max_abs().max(1e-300);
    let v = trig_field(grid, seed.wrapping_add(7919), 6, 0.7);
    let vm = v.max_abs().max(1e-300);
    State64::new(g.map(|y| 1.0 + amp * y / gm), v.map(|y| vel * y / vm), 0.0).unwrap()
}
