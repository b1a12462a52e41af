//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use neumann_bmo::grid::{Grid, ScalarField, SpaceTimeField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Explicit Euler for `u_t = u_xx - (u^2)_x` on `n = 1`, independent of the
/// semigroup code. Each half-line carries reflecting ghosts at the interface
/// and at the box face; `(u^2)_x` uses central differences inside a half and
/// one-sided second-order differences at its two ends. The step is at most
/// `cfl * h^2` and lands exactly on every time level.
///
/// Returns the sampled solution and the largest step used.
pub fn fd_stepper(grid: &Grid, u0: &ScalarField, cfl: f64) -> (SpaceTimeField, f64) {
    assert_eq!(grid.dim(), 1);
    let n = grid.points();
    let h = grid.spacing();
    let dt_max = cfl * h * h;
    let mut u = u0.values().to_vec();
    let mut t = 0.0;
    let mut slices = Vec::new();
    for &tk in grid.time_levels() {
        let steps = ((tk - t) / dt_max).ceil().max(1.0) as usize;
        let dt = (tk - t) / steps as f64;
        for _ in 0..steps {
            let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
            let next: Vec<f64> = (0..n)
                .map(|j| {
                    let (lo, hi) = if j < n / 2 { (0, n / 2 - 1) } else { (n / 2, n - 1) };
                    let l = if j == lo { u[j] } else { u[j - 1] };
                    let r = if j == hi { u[j] } else { u[j + 1] };
                    let lap = (l - 2.0 * u[j] + r) / (h * h);
                    let dx = if j == lo {
                        (-3.0 * sq[j] + 4.0 * sq[j + 1] - sq[j + 2]) / (2.0 * h)
                    } else if j == hi {
                        (3.0 * sq[j] - 4.0 * sq[j - 1] + sq[j - 2]) / (2.0 * h)
                    } else {
                        (sq[j + 1] - sq[j - 1]) / (2.0 * h)
                    };
                    u[j] + dt * (lap - dx)
                })
                .collect();
            u = next;
        }
        t = tk;
        slices.push(ScalarField::new(grid, u.clone()).unwrap());
    }
    (SpaceTimeField::new(grid, slices).unwrap(), dt_max)
}

/// i.i.d. uniform node values in `[-1, 1]`.
pub fn noise_field(grid: &Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::new(grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_change(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}
