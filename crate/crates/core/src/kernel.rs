//! Closed-form heat kernels: the whole-space Gaussian and the method-of-images
//! kernels of the two half-spaces, with analytic gradients, a quadrature
//! mass check and a property suite over sampled points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Half};

/// Image sign and interface behaviour of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    /// Reflected image added: zero normal flux at `x_n = 0`.
    #[default]
    Neumann,
    /// Reflected image subtracted: absorbing interface.
    Dirichlet,
    /// Plain Gaussian, no interface.
    WholeSpace,
}

impl KernelVariant {
    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::Neumann => "neumann",
            KernelVariant::Dirichlet => "dirichlet",
            KernelVariant::WholeSpace => "whole-space",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "neumann" => Some(KernelVariant::Neumann),
            "dirichlet" => Some(KernelVariant::Dirichlet),
            "whole-space" => Some(KernelVariant::WholeSpace),
            _ => None,
        }
    }

    fn image_sign(self) -> f64 {
        match self {
            KernelVariant::Neumann => 1.0,
            KernelVariant::Dirichlet => -1.0,
            KernelVariant::WholeSpace => 0.0,
        }
    }
}

/// One kernel evaluation request.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuery {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub variant: KernelVariant,
}

impl KernelQuery {
    pub fn eval(&self) -> Result<f64> {
        image_kernel(self.variant, self.t, &self.x, &self.y)
    }

    pub fn gradient(&self) -> Result<Vec<f64>> {
        image_kernel_gradient(self.variant, self.t, &self.x, &self.y)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel time must be positive, got {t}")))
    }
}

fn check_points(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::ShapeMismatch("kernel arguments must share a nonzero dimension".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument".into()));
    }
    Ok(())
}

/// One-dimensional Gaussian `(4 pi t)^{-1/2} exp(-d^2 / 4t)`, no checks.
#[inline]
pub(crate) fn g1(t: f64, d: f64) -> f64 {
    (-d * d / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

/// `h_t(x) = (4 pi t)^{-n/2} exp(-|x|^2 / 4t)`.
pub fn gaussian_kernel(t: f64, x: &[f64]) -> Result<f64> {
    check_time(t)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument".into()));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((4.0 * std::f64::consts::PI * t).powf(-(x.len() as f64) / 2.0) * (-r2 / (4.0 * t)).exp())
}

/// Neumann heat kernel of the two half-spaces:
/// `H(x_n y_n) h_t(x' - y') (g(x_n - y_n) + g(x_n + y_n))`.
pub fn neumann_kernel(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    image_kernel(KernelVariant::Neumann, t, x, y)
}

pub fn image_kernel(variant: KernelVariant, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_time(t)?;
    check_points(x, y)?;
    let n = x.len();
    if variant == KernelVariant::WholeSpace {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        return gaussian_kernel(t, &d);
    }
    let (xn, yn) = (x[n - 1], y[n - 1]);
    if xn * yn <= 0.0 {
        return Ok(0.0);
    }
    let mut tangential = 1.0;
    for i in 0..n - 1 {
        tangential *= g1(t, x[i] - y[i]);
    }
    Ok(tangential * (g1(t, xn - yn) + variant.image_sign() * g1(t, xn + yn)))
}

/// Gradient in `x` of the Neumann kernel; the zero vector across the interface.
pub fn neumann_kernel_gradient(t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    image_kernel_gradient(KernelVariant::Neumann, t, x, y)
}

pub fn image_kernel_gradient(variant: KernelVariant, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_time(t)?;
    check_points(x, y)?;
    let n = x.len();
    let mut grad = vec![0.0; n];
    if variant == KernelVariant::WholeSpace {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let p = gaussian_kernel(t, &d)?;
        for (g, di) in grad.iter_mut().zip(&d) {
            *g = -di / (2.0 * t) * p;
        }
        return Ok(grad);
    }
    let (xn, yn) = (x[n - 1], y[n - 1]);
    if xn * yn < 0.0 {
        return Ok(grad);
    }
    let sign = variant.image_sign();
    let mut tangential = 1.0;
    for i in 0..n - 1 {
        tangential *= g1(t, x[i] - y[i]);
    }
    let (a, b) = (g1(t, xn - yn), g1(t, xn + yn));
    let normal = a + sign * b;
    for i in 0..n - 1 {
        grad[i] = -(x[i] - y[i]) / (2.0 * t) * tangential * normal;
    }
    grad[n - 1] = tangential * (-(xn - yn) / (2.0 * t) * a - sign * (xn + yn) / (2.0 * t) * b);
    Ok(grad)
}

// 8-point Gauss-Legendre on [-1, 1]
pub(crate) const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
pub(crate) const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `int_a^b g1(t, y - c) dy` by composite Gauss-Legendre on the part of
/// `[a, b]` within 14 standard widths of `c`, panels no wider than `sqrt(t)/4`.
fn gaussian_interval_mass(t: f64, c: f64, a: f64, b: f64) -> f64 {
    let w = 14.0 * (2.0 * t).sqrt();
    let lo = a.max(c - w);
    let hi = b.min(c + w);
    if hi <= lo {
        return 0.0;
    }
    let panels = (((hi - lo) / (0.25 * t.sqrt())).ceil() as usize).max(1);
    let step = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * step;
        let mut s = 0.0;
        for (z, wgt) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            s += wgt * g1(t, mid + 0.5 * step * z - c);
        }
        total += 0.5 * step * s;
    }
    total
}

/// Integral of the Neumann kernel `y -> p_t(x, y)` over the half-space of `x`,
/// truncated to the box `[-half_width, half_width]^n`.
pub fn kernel_mass(t: f64, x: &[f64], half_width: f64) -> Result<f64> {
    kernel_mass_variant(KernelVariant::Neumann, t, x, half_width)
}

pub fn kernel_mass_variant(variant: KernelVariant, t: f64, x: &[f64], half_width: f64) -> Result<f64> {
    check_time(t)?;
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument".into()));
    }
    if !(half_width > 0.0) {
        return Err(Error::Domain("half width must be positive".into()));
    }
    let n = x.len();
    let xn = x[n - 1];
    if xn == 0.0 && variant != KernelVariant::WholeSpace {
        return Err(Error::Domain("kernel mass is undefined on the interface".into()));
    }
    let l = half_width;
    let mut mass = 1.0;
    for &xi in &x[..n - 1] {
        mass *= gaussian_interval_mass(t, xi, -l, l);
    }
    let normal = match variant {
        KernelVariant::WholeSpace => gaussian_interval_mass(t, xn, -l, l),
        _ => {
            // fold to the upper half: y in (0, L]
            let a = xn.abs();
            gaussian_interval_mass(t, a, 0.0, l) + variant.image_sign() * gaussian_interval_mass(t, -a, 0.0, l)
        }
    };
    Ok(mass * normal)
}

/// One row of the kernel property suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheck {
    pub name: String,
    pub variant: KernelVariant,
    pub dim: usize,
    /// Measured quantity; the check passes when `value <= threshold`
    /// (or `value > threshold` for checks that demonstrate a violation).
    pub value: f64,
    pub threshold: f64,
    pub expect_violation: bool,
    pub pass: bool,
}

impl KernelCheck {
    fn at_most(name: &str, variant: KernelVariant, dim: usize, value: f64, threshold: f64) -> Self {
        KernelCheck {
            name: name.into(),
            variant,
            dim,
            value,
            threshold,
            expect_violation: false,
            pass: value.is_finite() && value <= threshold,
        }
    }

    fn exceeds(name: &str, variant: KernelVariant, dim: usize, value: f64, threshold: f64) -> Self {
        KernelCheck {
            name: name.into(),
            variant,
            dim,
            value,
            threshold,
            expect_violation: true,
            pass: value.is_finite() && value > threshold,
        }
    }
}

/// Sampling parameters of [`kernel_checks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheckConfig {
    pub dim: usize,
    pub points: usize,
    pub half_width: f64,
    pub samples: usize,
    pub seed: u64,
}

impl KernelCheckConfig {
    pub fn new(dim: usize, points: usize, seed: u64) -> Self {
        KernelCheckConfig { dim, points, half_width: 4.0, samples: 64, seed }
    }
}

fn sample_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64, half: Option<Half>) -> Vec<f64> {
    let mut p: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
    let last = p[dim - 1].abs().max(1e-3);
    match half {
        Some(Half::Upper) => p[dim - 1] = last,
        Some(Half::Lower) => p[dim - 1] = -last,
        None => {}
    }
    p
}

/// Runs the kernel property suite on a cell-centered grid of the given size.
///
/// Sampled points satisfy `|x_i| <= 1` and times lie in `[0.05, 0.25]`, so
/// Gaussian tails at the box face are far below every tolerance.
pub fn kernel_checks(cfg: &KernelCheckConfig) -> Result<Vec<KernelCheck>> {
    let dim = cfg.dim;
    let grid = GridSpec::new(dim, cfg.half_width, cfg.points, vec![1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let nm = KernelVariant::Neumann;
    let dr = KernelVariant::Dirichlet;

    let mut min_p = f64::INFINITY;
    let mut sym = 0.0_f64;
    let mut cross = 0.0_f64;
    let mut bound2 = f64::NEG_INFINITY;
    let mut bound_images = f64::NEG_INFINITY;
    let mut neumann_over_h = f64::NEG_INFINITY;
    let mut dirichlet_over_h = f64::NEG_INFINITY;
    let mut grad_fd = 0.0_f64;
    for _ in 0..cfg.samples {
        let t = rng.random_range(0.05..1.0);
        let x = sample_point(&mut rng, dim, 1.0, None);
        let y = sample_point(&mut rng, dim, 1.0, None);
        let p = neumann_kernel(t, &x, &y)?;
        let q = neumann_kernel(t, &y, &x)?;
        min_p = min_p.min(p);
        sym = sym.max((p - q).abs());
        let mut y_opp = y.clone();
        y_opp[dim - 1] = -x[dim - 1].signum() * y[dim - 1].abs().max(1e-3);
        cross = cross.max(neumann_kernel(t, &x, &y_opp)?.abs());
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let h = gaussian_kernel(t, &d)?;
        let mut yr = y.clone();
        yr[dim - 1] = -yr[dim - 1];
        let dr_: Vec<f64> = x.iter().zip(&yr).map(|(a, b)| a - b).collect();
        let hr = gaussian_kernel(t, &dr_)?;
        bound2 = bound2.max(p - 2.0 * h);
        bound_images = bound_images.max(p - h - hr);
        neumann_over_h = neumann_over_h.max(p - h);
        dirichlet_over_h = dirichlet_over_h.max(image_kernel(dr, t, &x, &y)? - h);
        // analytic gradient vs central difference
        if x[dim - 1] * y[dim - 1] > 0.0 {
            let g = neumann_kernel_gradient(t, &x, &y)?;
            for i in 0..dim {
                let step = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                if xm[dim - 1] * y[dim - 1] <= 0.0 || xp[dim - 1] * y[dim - 1] <= 0.0 {
                    continue;
                }
                let fd = (neumann_kernel(t, &xp, &y)? - neumann_kernel(t, &xm, &y)?) / (2.0 * step);
                grad_fd = grad_fd.max((fd - g[i]).abs());
            }
        }
    }
    rows.push(KernelCheck::at_most("positivity(-min p)", nm, dim, -min_p, 0.0));
    rows.push(KernelCheck::at_most("symmetry", nm, dim, sym, 1e-15));
    rows.push(KernelCheck::at_most("interface_vanishing", nm, dim, cross, 0.0));
    rows.push(KernelCheck::at_most("bound_2h", nm, dim, bound2, 0.0));
    rows.push(KernelCheck::at_most("bound_h_plus_image", nm, dim, bound_images, 1e-15));
    rows.push(KernelCheck::at_most("gradient_vs_fd", nm, dim, grad_fd, 1e-6));
    rows.push(KernelCheck::exceeds("bound_h_violated", nm, dim, neumann_over_h, 0.0));
    rows.push(KernelCheck::at_most("bound_h", dr, dim, dirichlet_over_h, 0.0));

    // one-sided normal difference at the first node rows off the interface
    for variant in [nm, dr] {
        let mut worst = 0.0_f64;
        let mut peak = 0.0_f64;
        let n = grid.points();
        for _ in 0..8 {
            // stencil truncation scales like (h^2 / t)^{3/2}
            let t = rng.random_range(0.25..1.0);
            let y = sample_point(&mut rng, dim, 1.0, Some(Half::Upper));
            let mut x = y.clone();
            let mut vals = [0.0; 3];
            for (k, v) in vals.iter_mut().enumerate() {
                x[dim - 1] = grid.coord(n / 2 + k);
                *v = image_kernel(variant, t, &x, &y)?;
            }
            peak = peak.max(image_kernel(variant, t, &y, &y)?);
            worst = worst.max((-2.0 * vals[0] + 3.0 * vals[1] - vals[2]).abs());
        }
        let threshold = 1e-3 * peak;
        rows.push(if variant == nm {
            KernelCheck::at_most("normal_derivative", variant, dim, worst, threshold)
        } else {
            KernelCheck::exceeds("normal_derivative_violated", variant, dim, worst, threshold)
        });
    }

    // Chapman-Kolmogorov by midpoint quadrature over the grid
    let mut ck = 0.0_f64;
    let vol = grid.cell_volume();
    let mut z = vec![0.0; dim];
    for _ in 0..6 {
        let s = rng.random_range(0.05..0.25);
        let t = rng.random_range(0.05..0.25);
        let half = if rng.random::<bool>() { Half::Upper } else { Half::Lower };
        let x = sample_point(&mut rng, dim, 1.0, Some(half));
        let y = sample_point(&mut rng, dim, 1.0, Some(half));
        let mut acc = 0.0;
        for idx in 0..grid.len() {
            if grid.half_of(idx) != half {
                continue;
            }
            grid.point(idx, &mut z);
            acc += neumann_kernel(s, &x, &z)? * neumann_kernel(t, &z, &y)?;
        }
        ck = ck.max((vol * acc - neumann_kernel(s + t, &x, &y)?).abs());
    }
    rows.push(KernelCheck::at_most("chapman_kolmogorov", nm, dim, ck, 1e-6));

    // mass per half-space
    let mut mass_err = 0.0_f64;
    let mut dirichlet_deficit = f64::INFINITY;
    for _ in 0..16 {
        let t = rng.random_range(1e-4..0.25);
        let x = sample_point(&mut rng, dim, 1.0, None);
        mass_err = mass_err.max((kernel_mass(t, &x, cfg.half_width)? - 1.0).abs());
        let mut xb = x.clone();
        xb[dim - 1] = xb[dim - 1].signum() * 0.5 * t.sqrt();
        dirichlet_deficit = dirichlet_deficit.min(1.0 - kernel_mass_variant(dr, t, &xb, cfg.half_width)?);
    }
    rows.push(KernelCheck::at_most("mass", nm, dim, mass_err, 1e-6));
    rows.push(KernelCheck::exceeds("mass_deficit", dr, dim, dirichlet_deficit, 1e-3));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_normalization_and_value() {
        let t = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((gaussian_kernel(t, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        // hand evaluation of (4 pi)^{-1/2} e^{-1}
        let v = gaussian_kernel(1.0, &[2.0]).unwrap();
        assert!((v - 0.103_776_874_355_148_9).abs() < 1e-12, "{v}");
        assert!(gaussian_kernel(0.0, &[1.0]).is_err());
        assert!(gaussian_kernel(-1.0, &[1.0]).is_err());
    }

    #[test]
    fn neumann_value_and_interface() {
        let v = neumann_kernel(1.0, &[1.0], &[1.0]).unwrap();
        let expect = (1.0 + (-1.0f64).exp()) / (4.0 * std::f64::consts::PI).sqrt();
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.385_87).abs() < 1e-5);
        assert_eq!(neumann_kernel(1.0, &[1.0], &[-1.0]).unwrap(), 0.0);
        assert_eq!(neumann_kernel(0.3, &[0.2, -1.0], &[0.1, 0.5]).unwrap(), 0.0);
        assert!(neumann_kernel(0.0, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let g = neumann_kernel_gradient(1.0, &[0.5], &[1.0]).unwrap();
        let h = 1e-5;
        let fd = (neumann_kernel(1.0, &[0.5 + h], &[1.0]).unwrap() - neumann_kernel(1.0, &[0.5 - h], &[1.0]).unwrap())
            / (2.0 * h);
        assert!((g[0] - fd).abs() < 1e-8);
    }

    #[test]
    fn gradient_tangential_zero_on_diagonal_and_normal_zero_at_interface() {
        let g = neumann_kernel_gradient(0.4, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(g[0], 0.0);
        let g = neumann_kernel_gradient(0.4, &[0.3, 1e-14], &[-0.2, 0.9]).unwrap();
        assert!(g[1].abs() < 1e-12);
        let g = neumann_kernel_gradient(0.4, &[0.3, 0.5], &[-0.2, -0.9]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn mass_is_one_even_for_tiny_times() {
        for t in [1e-8, 1e-4, 0.1, 1.0] {
            let m = kernel_mass(t, &[0.2, 0.3], 16.0).unwrap();
            assert!((m - 1.0).abs() < 1e-9, "t={t} m={m}");
        }
        let d = kernel_mass_variant(KernelVariant::Dirichlet, 0.1, &[0.05], 8.0).unwrap();
        assert!(d < 0.9);
        assert!(kernel_mass(0.1, &[0.0], 8.0).is_err());
    }

    #[test]
    fn suite_passes_on_small_grid() {
        let rows = kernel_checks(&KernelCheckConfig::new(2, 128, 7)).unwrap();
        for r in &rows {
            assert!(r.pass, "{r:?}");
        }
    }
}
