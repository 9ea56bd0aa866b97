//! Seeded smooth fields and states shared by the self-test suites.

use hierarchy_core::torus::integral;
use hierarchy_core::{Field64, Grid64, State64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trigonometric polynomial with modes `1..=kmax` and amplitudes `decay^(k−1)`.
pub fn smooth_field(grid: &Grid64, seed: u64, kmax: usize, decay: f64) -> Field64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64)> = (1..=kmax)
        .map(|k| {
            let w = decay.powi(k as i32 - 1);
            (rng.gen_range(-1.0..1.0) * w, rng.gen_range(-1.0..1.0) * w)
        })
        .collect();
    Field64::from_fn(grid, |x| {
        coeffs.iter().enumerate().fold(0.0, |acc, (i, (a, b))| {
            let k = (i + 1) as f64;
            acc + a * (k * x).cos() + b * (k * x).sin()
        })
    })
}

fn normalized(f: Field64) -> Field64 {
    let m = f.max_abs();
    if m > 0.0 {
        f.scale(1.0 / m)
    } else {
        f
    }
}

/// `ρ = 1 + amp·g` and `u = vel·v` with `g`, `v` smooth of unit sup norm.
pub fn positive_state(grid: &Grid64, seed: u64, amp: f64, vel: f64) -> State64 {
    let g = normalized(smooth_field(grid, seed, 6, 0.7));
    let v = normalized(smooth_field(grid, seed ^ 0x9e37_79b9_7f4a_7c15, 6, 0.7));
    State64::new(g.map(|y| 1.0 + amp * y), v.scale(vel), 0.0).expect("fields share the grid")
}

/// Positive density of total mass one.
pub fn unit_mass_density(grid: &Grid64, seed: u64, amp: f64) -> Field64 {
    let rho = positive_state(grid, seed, amp, 0.0).rho;
    let m = integral(&rho);
    rho.scale(1.0 / m)
}

/// `cos(kx)` at the nodes with the phase reduced exactly, `cos(2π((jk) mod n)/n)`.
pub fn cos_mode(grid: &Grid64, k: usize) -> Field64 {
    let n = grid.n();
    let samples = (0..n)
        .map(|j| (std::f64::consts::TAU * ((j * k) % n) as f64 / n as f64).cos())
        .collect();
    Field64::new(grid, samples).expect("n samples")
}
