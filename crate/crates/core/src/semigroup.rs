//! Heat semigroups on the sampled box: whole-space `e^{tΔ}`, Neumann
//! `e^{tΔ_N}` (and the Dirichlet contrast variant), caloric extensions and
//! Duhamel integrals of divergence-form forcing.
//!
//! The whole-space operator is a separable circular convolution over the
//! period-`2L` box with the sampled Gaussian, summed over periodic images and
//! normalized to unit mass. Unit mass makes constants exact fixed points and
//! keeps the operator positive; as `t -> 0` the stencil tends to the identity.
//! Neumann and Dirichlet operators act on the even / odd reflection of each
//! half-space restriction and are restricted back.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    divergence, even_extension, odd_extension, Grid, GridSpec, Half, ScalarField, SpaceTimeField,
    SpaceTimeVectorField, VectorField,
};
use crate::kernel::{g1, gaussian_kernel, KernelVariant};

// below this multiple of h^2 the sampled kernels collapse to their t -> 0 limits
const COLLAPSE: f64 = 1.0 / 400.0;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(pair) = p.1.get(&n) {
            return pair.clone();
        }
        let pair = (p.0.plan_fft_forward(n), p.0.plan_fft_inverse(n));
        p.1.insert(n, pair.clone());
        pair
    })
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("semigroup time must be positive, got {t}")))
    }
}

/// Range of periodic image indices that can contribute at time `t`.
fn image_range(grid: &GridSpec, t: f64) -> i64 {
    let reach = 40.0 * t.sqrt();
    (reach / (2.0 * grid.half_width())).ceil() as i64 + 1
}

/// Periodized Gaussian stencil `c_j`, `j` = circular offset, unit mass.
fn gaussian_stencil(grid: &GridSpec, t: f64) -> Vec<f64> {
    let n = grid.points();
    let h = grid.spacing();
    let period = 2.0 * grid.half_width();
    let mut c = vec![0.0; n];
    if t < COLLAPSE * h * h {
        c[0] = 1.0;
        return c;
    }
    let m = image_range(grid, t);
    for (j, cj) in c.iter_mut().enumerate() {
        let d = j as f64 * h;
        *cj = (-m..=m).map(|k| g1(t, d + period * k as f64)).sum();
    }
    let z: f64 = c.iter().sum();
    c.iter_mut().for_each(|v| *v /= z);
    c
}

/// Periodized stencil of `d/dx` of the Gaussian, normalized to differentiate
/// linear functions exactly; tends to the central difference as `t -> 0`.
fn derivative_stencil(grid: &GridSpec, t: f64) -> Vec<f64> {
    let n = grid.points();
    let h = grid.spacing();
    let period = 2.0 * grid.half_width();
    let mut c = vec![0.0; n];
    if t < COLLAPSE * h * h {
        c[1] = -0.5 / h;
        c[n - 1] = 0.5 / h;
        return c;
    }
    let dg = |d: f64| -d / (2.0 * t) * g1(t, d);
    let m = image_range(grid, t);
    for (j, cj) in c.iter_mut().enumerate() {
        let d = j as f64 * h;
        *cj = (-m..=m).map(|k| dg(d + period * k as f64)).sum();
    }
    // first moment of the unperiodized sampled derivative
    let kmax = (40.0 * t.sqrt() / h).ceil() as i64 + 1;
    let moment: f64 = (1..=kmax)
        .map(|k| {
            let d = k as f64 * h;
            2.0 * d * d / (2.0 * t) * g1(t, d)
        })
        .sum();
    c.iter_mut().for_each(|v| *v /= moment);
    c
}

fn spectrum(stencil: &[f64]) -> Vec<Complex<f64>> {
    let (fwd, _) = plans(stencil.len());
    let mut buf: Vec<Complex<f64>> = stencil.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    buf
}

/// In-place circular convolution along `axis` with a kernel given by its spectrum.
fn convolve_axis(values: &mut [f64], grid: &GridSpec, axis: usize, spec: &[Complex<f64>]) {
    let n = grid.points();
    let stride = grid.stride(axis);
    let (fwd, inv) = plans(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for base in 0..values.len() {
        if (base / stride) % n != 0 {
            continue;
        }
        for (j, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(values[base + j * stride], 0.0);
        }
        fwd.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(spec) {
            *b *= s;
        }
        inv.process(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            values[base + j * stride] = b.re * scale;
        }
    }
}

/// Spectra of the Gaussian and derivative stencils at one time.
struct Stencils {
    gauss: Vec<Complex<f64>>,
    deriv: Option<Vec<Complex<f64>>>,
}

impl Stencils {
    fn new(grid: &GridSpec, t: f64, with_derivative: bool) -> Self {
        Stencils {
            gauss: spectrum(&gaussian_stencil(grid, t)),
            deriv: with_derivative.then(|| spectrum(&derivative_stencil(grid, t))),
        }
    }

    /// Gaussian along every axis, except the derivative kernel along `d_axis`.
    fn apply(&self, grid: &GridSpec, values: &mut [f64], d_axis: Option<usize>) {
        for axis in 0..grid.dim() {
            let spec = match (d_axis, &self.deriv) {
                (Some(a), Some(d)) if a == axis => d,
                _ => &self.gauss,
            };
            convolve_axis(values, grid, axis, spec);
        }
    }
}

/// Whole-space heat semigroup `e^{tΔ}` on the periodized box.
pub fn heat_extend_whole(f: &ScalarField, t: f64) -> Result<ScalarField> {
    check_time(t)?;
    let grid = f.grid();
    let mut v = f.values().to_vec();
    Stencils::new(grid, t, false).apply(grid, &mut v, None);
    ScalarField::new(grid, v)
}

/// Neumann heat semigroup `e^{tΔ_N}`: per half-space, the whole-space flow of
/// the even extension, restricted back.
pub fn neumann_extend(f: &ScalarField, t: f64) -> Result<ScalarField> {
    semigroup_apply(f, t, KernelVariant::Neumann)
}

pub fn semigroup_apply(f: &ScalarField, t: f64, variant: KernelVariant) -> Result<ScalarField> {
    check_time(t)?;
    let grid = f.grid();
    let st = Stencils::new(grid, t, false);
    apply_with(&st, f, variant)
}

fn apply_with(st: &Stencils, f: &ScalarField, variant: KernelVariant) -> Result<ScalarField> {
    let grid = f.grid();
    if variant == KernelVariant::WholeSpace {
        let mut v = f.values().to_vec();
        st.apply(grid, &mut v, None);
        return ScalarField::new(grid, v);
    }
    let mut out = vec![0.0; grid.len()];
    for half in Half::BOTH {
        let ext = match variant {
            KernelVariant::Dirichlet => odd_extension(f, half),
            _ => even_extension(f, half),
        };
        let mut v = ext.into_values();
        st.apply(grid, &mut v, None);
        for (i, o) in out.iter_mut().enumerate() {
            if grid.half_of(i) == half {
                *o = v[i];
            }
        }
    }
    ScalarField::new(grid, out)
}

/// Direct `O(len^2)` quadrature against the periodized image kernel,
/// normalized as in the spectral path. Independent second path for
/// [`semigroup_apply`].
pub fn semigroup_direct(f: &ScalarField, t: f64, variant: KernelVariant) -> Result<ScalarField> {
    check_time(t)?;
    let grid = f.grid();
    let dim = grid.dim();
    let n = grid.points();
    let h = grid.spacing();
    let period = 2.0 * grid.half_width();
    let m = image_range(grid, t);
    let collapsed = t < COLLAPSE * h * h;
    // 1-D periodized Gaussian through the kernel module
    let per = |d: f64| -> Result<f64> {
        if collapsed {
            return Ok(if d.abs() < 0.5 * h { 1.0 } else { 0.0 });
        }
        let mut s = 0.0;
        for k in -m..=m {
            s += gaussian_kernel(t, &[d + period * k as f64])?;
        }
        Ok(s)
    };
    let mut z = 0.0;
    for j in 0..n {
        z += per(j as f64 * h)?;
    }
    let norm = z.powi(dim as i32);
    let sign = match variant {
        KernelVariant::Neumann => 1.0,
        KernelVariant::Dirichlet => -1.0,
        KernelVariant::WholeSpace => 0.0,
    };
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point_vec(i)).collect();
    let values = f.values();
    let out = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<f64> {
            let mut acc = 0.0;
            for (j, y) in points.iter().enumerate() {
                let same = grid.half_of(i) == grid.half_of(j);
                if variant != KernelVariant::WholeSpace && !same {
                    continue;
                }
                let mut w = 1.0;
                for a in 0..dim - 1 {
                    w *= per(x[a] - y[a])?;
                }
                let (xn, yn) = (x[dim - 1], y[dim - 1]);
                let normal = if variant == KernelVariant::WholeSpace {
                    per(xn - yn)?
                } else {
                    per(xn - yn)? + sign * per(xn + yn)?
                };
                acc += w * normal * values[j];
            }
            Ok(acc / norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    ScalarField::new(grid, out)
}

pub fn neumann_extend_direct(f: &ScalarField, t: f64) -> Result<ScalarField> {
    semigroup_direct(f, t, KernelVariant::Neumann)
}

/// Caloric extension: slice `k` is `e^{t_k Δ_N} f`.
pub fn build_extension(f: &ScalarField) -> Result<SpaceTimeField> {
    build_extension_variant(f, KernelVariant::Neumann)
}

pub fn build_extension_variant(f: &ScalarField, variant: KernelVariant) -> Result<SpaceTimeField> {
    let grid = f.grid();
    let slices = grid
        .time_levels()
        .par_iter()
        .map(|&t| semigroup_apply(f, t, variant))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(grid, slices)
}

/// How `e^{tΔ_N} div α` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DivergencePath {
    /// Derivative moved onto the kernel, plus the interface term.
    #[default]
    Kernel,
    /// Finite-difference divergence, then the semigroup.
    FiniteDifference,
}

impl DivergencePath {
    pub fn name(self) -> &'static str {
        match self {
            DivergencePath::Kernel => "kernel",
            DivergencePath::FiniteDifference => "finite-difference",
        }
    }
}

/// `e^{tΔ_N} div α`.
pub fn neumann_div(alpha: &VectorField, t: f64, path: DivergencePath) -> Result<ScalarField> {
    check_time(t)?;
    let grid = alpha.grid();
    match path {
        DivergencePath::FiniteDifference => {
            let st = Stencils::new(grid, t, false);
            apply_with(&st, &divergence(alpha)?, KernelVariant::Neumann)
        }
        DivergencePath::Kernel => {
            if grid.points() < 4 {
                return Err(Error::GridTooCoarse(grid.points()));
            }
            let st = Stencils::new(grid, t, true);
            kernel_div(&st, alpha, t)
        }
    }
}

/// Per half-space: even-reflected tangential components and odd-reflected
/// normal component against the kernel gradient, minus the interface terms
/// carried by the one-sided traces `α_n(x', 0±)` and `∂²α_n(x', 0±)`.
fn kernel_div(st: &Stencils, alpha: &VectorField, t: f64) -> Result<ScalarField> {
    let grid = alpha.grid();
    let dim = grid.dim();
    let n = grid.points();
    let h = grid.spacing();
    let (jump, kink) = interface_profiles(grid, t);
    let mut out = vec![0.0; grid.len()];
    for half in Half::BOTH {
        let mut acc = vec![0.0; grid.len()];
        for (axis, comp) in alpha.components().iter().enumerate() {
            let ext = if axis == dim - 1 { odd_extension(comp, half) } else { even_extension(comp, half) };
            let mut v = ext.into_values();
            st.apply(grid, &mut v, Some(axis));
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        }
        // the odd reflection jumps by 2c and its second derivative by 2d at x_n = 0
        let normal = alpha.component(dim - 1).values();
        let mut trace = vec![0.0; grid.len()];
        for r in 0..grid.rows() {
            let base = r * n;
            let a = |k: usize| match half {
                Half::Upper => normal[base + n / 2 + k],
                Half::Lower => normal[base + n / 2 - 1 - k],
            };
            let c = half.sign() * (15.0 * a(0) - 10.0 * a(1) + 3.0 * a(2)) / 8.0;
            let d = half.sign() * (a(0) - 2.0 * a(1) + a(2)) / (h * h);
            for j in 0..n {
                trace[base + j] = c * jump[j] + d * kink[j];
            }
        }
        for axis in 0..dim - 1 {
            convolve_axis(&mut trace, grid, axis, &st.gauss);
        }
        for (i, o) in out.iter_mut().enumerate() {
            if grid.half_of(i) == half {
                *o = acc[i] - trace[i];
            }
        }
    }
    ScalarField::new(grid, out)
}

/// Discrete responses along the normal axis to a unit jump and to a unit
/// second-derivative jump at `x_n = 0`.
///
/// Jump: `D * (sgn y - y/L) + 1/L`, tending to `2 g_t(x_n)` once `t >> h^2`.
/// Kink: `D * q - G * q'` with `q'' = sgn y - y/L`, which vanishes in the
/// continuum and corrects the sampled derivative across the kink. Both ramps
/// are smooth across the periodic wrap.
fn interface_profiles(grid: &GridSpec, t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.points();
    let l = grid.half_width();
    let line = GridSpec::new(1, l, n, vec![1.0]).expect("valid line grid");
    let dspec = spectrum(&derivative_stencil(grid, t));
    let gspec = spectrum(&gaussian_stencil(grid, t));
    let ys: Vec<f64> = (0..n).map(|j| grid.coord(j)).collect();
    let mut jump: Vec<f64> = ys.iter().map(|y| y.signum() - y / l).collect();
    convolve_axis(&mut jump, &line, 0, &dspec);
    jump.iter_mut().for_each(|x| *x += 1.0 / l);
    let mut q: Vec<f64> =
        ys.iter().map(|y| y.signum() * y * y / 2.0 - y * y * y / (6.0 * l) - y * l / 3.0).collect();
    convolve_axis(&mut q, &line, 0, &dspec);
    let mut dq: Vec<f64> = ys.iter().map(|y| y.abs() - y * y / (2.0 * l) - l / 3.0).collect();
    convolve_axis(&mut dq, &line, 0, &gspec);
    let kink = q.iter().zip(&dq).map(|(a, b)| a - b).collect();
    (jump, kink)
}

/// Time-quadrature options for Duhamel integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelOptions {
    /// Midpoint nodes on the `σ` mesh; 0 selects twice the number of time levels.
    pub nodes: usize,
    pub path: DivergencePath,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        DuhamelOptions { nodes: 0, path: DivergencePath::Kernel }
    }
}

impl DuhamelOptions {
    pub fn node_count(&self, grid: &GridSpec) -> usize {
        if self.nodes == 0 {
            2 * grid.time_levels().len()
        } else {
            self.nodes
        }
    }
}

/// Bracketing levels and weight for linear interpolation in time; constant
/// below the first level and above the last.
pub(crate) fn time_bracket(levels: &[f64], s: f64) -> (usize, usize, f64) {
    let m = levels.len();
    if s <= levels[0] {
        return (0, 0, 1.0);
    }
    if s >= levels[m - 1] {
        return (m - 1, m - 1, 1.0);
    }
    let k = levels.partition_point(|&t| t <= s);
    let (a, b) = (levels[k - 1], levels[k]);
    let w = (b - s) / (b - a);
    (k - 1, k, w)
}

pub(crate) fn lerp_scalar(a: &ScalarField, b: &ScalarField, w: f64) -> ScalarField {
    if w == 1.0 {
        return a.clone();
    }
    &a.scale(w) + &b.scale(1.0 - w)
}

/// `α(s)` by linear interpolation between time levels.
pub fn interpolate_vector(alpha: &SpaceTimeVectorField, s: f64) -> Result<VectorField> {
    let (k0, k1, w) = time_bracket(alpha.grid().time_levels(), s);
    let (a, b) = (alpha.slice(k0), alpha.slice(k1));
    VectorField::new(
        a.components()
            .iter()
            .zip(b.components())
            .map(|(x, y)| lerp_scalar(x, y, w))
            .collect(),
    )
}

pub fn interpolate_scalar(u: &SpaceTimeField, s: f64) -> ScalarField {
    let (k0, k1, w) = time_bracket(u.grid().time_levels(), s);
    lerp_scalar(u.slice(k0), u.slice(k1), w)
}

fn check_alpha(alpha: &SpaceTimeVectorField) -> Result<()> {
    for v in alpha.slices() {
        for c in v.components() {
            if c.values().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("Duhamel forcing".into()));
            }
        }
    }
    Ok(())
}

/// `∫_0^t e^{(t-s)Δ_N} div α(s) ds` with `s = t(1 - σ²)` and the midpoint
/// rule in `σ`. `t` must be a time level of the grid.
pub fn duhamel_divergence(alpha: &SpaceTimeVectorField, t: f64, opts: &DuhamelOptions) -> Result<ScalarField> {
    let grid = alpha.grid();
    if grid.time_index(t).is_none() {
        return Err(Error::NotATimeLevel(t));
    }
    check_alpha(alpha)?;
    duhamel_at(alpha, t, opts)
}

pub(crate) fn duhamel_at(alpha: &SpaceTimeVectorField, t: f64, opts: &DuhamelOptions) -> Result<ScalarField> {
    let grid = alpha.grid();
    let q = opts.node_count(grid);
    let terms = (0..q)
        .into_par_iter()
        .map(|i| -> Result<ScalarField> {
            let sigma = (i as f64 + 0.5) / q as f64;
            let tau = t * sigma * sigma;
            let a = interpolate_vector(alpha, t - tau)?;
            Ok(neumann_div(&a, tau, opts.path)?.scale(2.0 * t * sigma / q as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_fields(grid, terms))
}

/// Ordered sum, fixed reduction order.
pub(crate) fn sum_fields(grid: &Grid, terms: Vec<ScalarField>) -> ScalarField {
    let mut acc = vec![0.0; grid.len()];
    for t in &terms {
        acc.iter_mut().zip(t.values()).for_each(|(a, b)| *a += b);
    }
    ScalarField::from_raw(grid, acc)
}

/// Duhamel integral at every time level.
pub fn duhamel_all(alpha: &SpaceTimeVectorField, opts: &DuhamelOptions) -> Result<SpaceTimeField> {
    check_alpha(alpha)?;
    let grid = alpha.grid();
    let slices = grid
        .time_levels()
        .iter()
        .map(|&t| duhamel_at(alpha, t, opts))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(grid, slices)
}
