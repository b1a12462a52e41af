//! Independent oracles for the closed-form kernels.

mod common;

use neumann_bmo::kernel::{
    gaussian_kernel, image_kernel, image_kernel_gradient, kernel_mass_variant, neumann_kernel, KernelVariant,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Histogram density at `x` from samples, with its binomial standard error.
fn density_at(samples: &[f64], x: f64, bin: f64) -> (f64, f64) {
    let hits = samples.iter().filter(|s| (*s - x).abs() < 0.5 * bin).count() as f64;
    let n = samples.len() as f64;
    let p = hits / n;
    (p / bin, (p * (1.0 - p) / n).sqrt() / bin)
}

#[test]
fn gaussian_matches_brownian_increments() {
    // u_t = Δu is driven by Brownian motion with variance 2t
    let mut rng = common::rng(11);
    let t: f64 = 1.0;
    let samples: Vec<f64> = (0..400_000).map(|_| (2.0 * t).sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    let (est, se) = density_at(&samples, 2.0, 0.04);
    let exact = gaussian_kernel(t, &[2.0]).unwrap();
    assert!((exact - 0.10377).abs() < 1e-5);
    assert!((est - exact).abs() < 4.0 * se, "{est} vs {exact} (se {se})");
}

#[test]
fn neumann_matches_reflected_brownian_motion() {
    let mut rng = common::rng(12);
    let (t, y): (f64, f64) = (1.0, 1.0);
    let samples: Vec<f64> =
        (0..400_000).map(|_| (y + (2.0 * t).sqrt() * rng.sample::<f64, _>(StandardNormal)).abs()).collect();
    for x in [0.1, 1.0, 2.5] {
        let (est, se) = density_at(&samples, x, 0.04);
        let exact = neumann_kernel(t, &[x], &[y]).unwrap();
        assert!((est - exact).abs() < 4.0 * se, "x={x}: {est} vs {exact} (se {se})");
    }
    let closed = (4.0 * std::f64::consts::PI).powf(-0.5) * (1.0 + (-1.0f64).exp());
    assert!((closed - 0.38587).abs() < 1e-5);
    assert!((neumann_kernel(t, &[1.0], &[1.0]).unwrap() - closed).abs() < 1e-15);
}

#[test]
fn reflected_walk_in_the_plane_stays_in_its_half() {
    let mut rng = common::rng(13);
    let (t, y): (f64, [f64; 2]) = (0.5, [0.3, 0.4]);
    let s = (2.0 * t).sqrt();
    let samples: Vec<[f64; 2]> = (0..400_000)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            [y[0] + s * a, (y[1] + s * b).abs()]
        })
        .collect();
    let x = [0.5, 0.2];
    let bin = 0.1;
    let hits = samples.iter().filter(|p| (p[0] - x[0]).abs() < bin / 2.0 && (p[1] - x[1]).abs() < bin / 2.0).count();
    let p = hits as f64 / samples.len() as f64;
    let se = (p * (1.0 - p) / samples.len() as f64).sqrt() / (bin * bin);
    let est = p / (bin * bin);
    let exact = neumann_kernel(t, &x, &y).unwrap();
    // bin averaging is second order in the bin width
    assert!((est - exact).abs() < 4.0 * se + 0.01 * exact, "{est} vs {exact}");
    assert_eq!(neumann_kernel(t, &[0.5, -0.2], &y).unwrap(), 0.0);
}

/// Neumann heat kernel of `[0, l]` by its cosine eigenfunction expansion.
fn cosine_series(t: f64, x: f64, y: f64, l: f64) -> f64 {
    let mut s = 1.0 / l;
    for k in 1..4000 {
        let w = k as f64 * std::f64::consts::PI / l;
        let term = 2.0 / l * (w * x).cos() * (w * y).cos() * (-w * w * t).exp();
        s += term;
        if (-w * w * t).exp() < 1e-18 {
            break;
        }
    }
    s
}

#[test]
fn neumann_matches_cosine_series_on_a_long_interval() {
    // the far wall at l = 40 contributes below e^{-(2l - 6)^2 / 4t}
    for (t, x, y) in [(0.05, 0.2, 0.3), (1.0, 1.0, 1.0), (2.0, 0.1, 2.9), (0.5, 3.0, 0.01)] {
        let series = cosine_series(t, x, y, 40.0);
        let closed = neumann_kernel(t, &[x], &[y]).unwrap();
        assert!((series - closed).abs() < 1e-10, "t={t} x={x} y={y}: {series} vs {closed}");
        let lower = neumann_kernel(t, &[-x], &[-y]).unwrap();
        assert_eq!(lower, closed);
    }
}

#[test]
fn dirichlet_variant_loses_mass() {
    for x in [0.2, 0.5, 1.0] {
        let n = kernel_mass_variant(KernelVariant::Neumann, 0.5, &[x], 8.0).unwrap();
        let d = kernel_mass_variant(KernelVariant::Dirichlet, 0.5, &[x], 8.0).unwrap();
        assert!((n - 1.0).abs() < 1e-10, "{n}");
        assert!(1.0 - d > 0.1, "Dirichlet mass {d} at x={x}");
    }
}

#[test]
fn dirichlet_variant_violates_the_neumann_condition() {
    let t = 0.3;
    let y = [0.0, 0.4];
    for eps in [1e-3, 1e-5] {
        let x = [0.1, eps];
        let gn = image_kernel_gradient(KernelVariant::Neumann, t, &x, &y).unwrap()[1];
        let gd = image_kernel_gradient(KernelVariant::Dirichlet, t, &x, &y).unwrap()[1];
        let p = image_kernel(KernelVariant::Neumann, t, &x, &y).unwrap();
        assert!(gn.abs() < 1e-2 * p, "Neumann normal derivative {gn}");
        assert!(gd.abs() > 0.5 * p, "Dirichlet normal derivative {gd} vs kernel {p}");
    }
}
