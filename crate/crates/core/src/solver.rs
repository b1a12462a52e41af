//! Bilinear Duhamel operator, its three-term splitting, the auxiliary
//! operators `𝒯`, `R`, `ℳ⁺`, and the Picard solver for
//! `u = e^{tΔ_N} u_0 - ∫_0^t e^{(t-s)Δ_N} div(b u^2) ds`.
//!
//! Throughout `ℒ = -Δ_N`, so `e^{-tℒ}` is the Neumann heat semigroup.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    neumann_laplacian, Grid, GridSpec, ScalarField, SpaceTimeField, SpaceTimeVectorField, StencilOrder, VectorField,
};
use crate::kernel::{GL_NODES, GL_WEIGHTS};
use crate::norms::{path_norm, tent_inf1_norm, tent_inf2_norm, weighted_linf_norm, ParabolicBallFamily};
use crate::semigroup::{
    build_extension, duhamel_all, interpolate_scalar, interpolate_vector, neumann_div, neumann_extend, sum_fields,
    DuhamelOptions,
};

/// `A(α)(t) = ∫_0^t e^{(t-s)Δ_N} div α(s) ds` on every time level.
pub fn bilinear_a(alpha: &SpaceTimeVectorField, opts: &DuhamelOptions) -> Result<SpaceTimeField> {
    duhamel_all(alpha, opts)
}

/// Nodes and weights on `[0, t]`: `s = t(1 - σ²)`, midpoint rule in `σ`.
/// Shared with [`crate::semigroup::duhamel_divergence`].
fn head_nodes(t: f64, q: usize) -> Vec<(f64, f64)> {
    (0..q)
        .map(|i| {
            let sigma = (i as f64 + 0.5) / q as f64;
            (t * (1.0 - sigma * sigma), 2.0 * t * sigma / q as f64)
        })
        .collect()
}

/// Nodes and weights on `[t, T]`: `s = t (T/t)^σ`, midpoint rule in `σ`.
fn tail_nodes(t: f64, horizon: f64, q: usize) -> Vec<(f64, f64)> {
    if t >= horizon {
        return Vec::new();
    }
    let span = (horizon / t).ln();
    (0..q)
        .map(|i| {
            let s = t * (span * (i as f64 + 0.5) / q as f64).exp();
            (s, s * span / q as f64)
        })
        .collect()
}

/// `∫_0^b` by Gauss-Legendre on dyadic panels `[b 2^{-j-1}, b 2^{-j}]` down to
/// `floor`, then one midpoint cell on `[0, b 2^{-J}]`.
fn dyadic_rule(b: f64, floor: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut hi = b;
    while hi > floor {
        let lo = 0.5 * hi;
        for (z, w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            out.push((0.5 * (lo + hi) + 0.5 * (hi - lo) * z, 0.5 * (hi - lo) * w));
        }
        hi = lo;
    }
    out.push((0.5 * hi, hi));
    out
}

/// Generator form used inside [`maximal_regularity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorForm {
    /// `∫ ℒe^{-(t-s)ℒ}(F(s) - F(t)) ds + (I - e^{-tℒ}) F(t)`.
    #[default]
    Subtraction,
    /// `∫ ℒe^{-(t-s)ℒ} F(s) ds` directly.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorOptions {
    pub duhamel: DuhamelOptions,
    /// Nodes on `[t, T]`; 0 selects twice the number of time levels.
    pub tail_nodes: usize,
    pub generator: GeneratorForm,
    pub order: StencilOrder,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            duhamel: DuhamelOptions::default(),
            tail_nodes: 0,
            generator: GeneratorForm::Subtraction,
            order: StencilOrder::Fourth,
        }
    }
}

impl OperatorOptions {
    fn tail_count(&self, grid: &GridSpec) -> usize {
        if self.tail_nodes == 0 {
            2 * grid.time_levels().len()
        } else {
            self.tail_nodes
        }
    }
}

fn mu_floor(grid: &GridSpec) -> f64 {
    grid.spacing().powi(2) / 100.0
}

/// `∫_0^{2s} e^{μΔ_N} div F dμ = ℒ^{-1}(I - e^{-2sℒ}) div F`.
fn resolvent_div(field: &VectorField, s: f64, opts: &OperatorOptions) -> Result<ScalarField> {
    let grid = field.grid();
    let terms = dyadic_rule(2.0 * s, mu_floor(grid))
        .into_iter()
        .map(|(mu, w)| Ok(neumann_div(field, mu, opts.duhamel.path)?.scale(w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_fields(grid, terms))
}

/// `𝒯F(s) = s^{-1/2} ∫_0^{2s} e^{μΔ_N} div F(s) dμ`, which equals
/// `(sℒ)^{-1}(I - e^{-2sℒ}) div (s^{1/2} F(s))`.
pub fn operator_t(field: &SpaceTimeVectorField, opts: &OperatorOptions) -> Result<SpaceTimeField> {
    let grid = field.grid();
    let slices = grid
        .time_levels()
        .par_iter()
        .enumerate()
        .map(|(k, &s)| Ok(resolvent_div(field.slice(k), s, opts)?.scale(s.powf(-0.5))))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(grid, slices)
}

/// `RF(s) = ∫_s^T e^{(s+τ)Δ_N} τ^{-1/2} div F(τ) dτ`, truncated at the horizon.
pub fn operator_r(field: &SpaceTimeVectorField, opts: &OperatorOptions) -> Result<SpaceTimeField> {
    let grid = field.grid();
    let horizon = grid.horizon();
    let q = opts.tail_count(grid);
    let slices = grid
        .time_levels()
        .par_iter()
        .map(|&s| {
            let terms = tail_nodes(s, horizon, q)
                .into_iter()
                .map(|(tau, w)| {
                    let f = interpolate_vector(field, tau)?;
                    Ok(neumann_div(&f, s + tau, opts.duhamel.path)?.scale(w / tau.sqrt()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(sum_fields(grid, terms))
        })
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(grid, slices)
}

/// `ℒ e^{-τℒ} g` with the finite-difference Laplacian.
fn generator_flow(g: &ScalarField, tau: f64, order: StencilOrder) -> Result<ScalarField> {
    Ok(neumann_laplacian(&neumann_extend(g, tau)?, order)?.scale(-1.0))
}

/// `(ℳ⁺F)(t)` for `F` given as a function of time.
pub fn maximal_regularity_at<F>(grid: &Grid, t: f64, f: F, opts: &OperatorOptions) -> Result<ScalarField>
where
    F: Fn(f64) -> Result<ScalarField> + Sync,
{
    let q = opts.duhamel.node_count(grid);
    let ft = match opts.generator {
        GeneratorForm::Subtraction => Some(f(t)?),
        GeneratorForm::Direct => None,
    };
    let mut terms = head_nodes(t, q)
        .into_par_iter()
        .map(|(s, w)| {
            let fs = f(s)?;
            let g = match &ft {
                Some(ft) => &fs - ft,
                None => fs,
            };
            Ok(generator_flow(&g, t - s, opts.order)?.scale(w))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(ft) = ft {
        terms.push(&ft - &neumann_extend(&ft, t)?);
    }
    Ok(sum_fields(grid, terms))
}

/// `(ℳ⁺F)(t) = ∫_0^t ℒ e^{-(t-s)ℒ} F(s) ds` on every level; `F` is linear
/// in time between levels and constant below the first.
pub fn maximal_regularity(field: &SpaceTimeField, opts: &OperatorOptions) -> Result<SpaceTimeField> {
    let grid = field.grid();
    let slices = grid
        .time_levels()
        .iter()
        .map(|&t| maximal_regularity_at(grid, t, |s| Ok(interpolate_scalar(field, s)), opts))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(grid, slices)
}

/// The three splitting terms of `A(α)`.
#[derive(Debug, Clone)]
pub struct SplitA {
    /// `ℳ⁺(s^{1/2} 𝒯α)`.
    pub a1: SpaceTimeField,
    /// `∫_0^T e^{-(t+s)ℒ} div α(s) ds`.
    pub a2: SpaceTimeField,
    /// `-∫_t^T e^{-(t+s)ℒ} div α(s) ds`.
    pub a3: SpaceTimeField,
}

impl SplitA {
    pub fn sum(&self) -> Result<SpaceTimeField> {
        self.a1.add(&self.a2)?.add(&self.a3)
    }
}

/// `A = A_1 + A_2 + A_3`. `A_1` evaluates `𝒯` on the fly at the quadrature
/// nodes; `A_2` and `A_3` share the nodes on `[t, T]`, and the part of `A_2`
/// on `[0, t]` uses the nodes of [`bilinear_a`].
pub fn split_a(alpha: &SpaceTimeVectorField, opts: &OperatorOptions) -> Result<SplitA> {
    let grid = alpha.grid();
    let horizon = grid.horizon();
    let q = opts.duhamel.node_count(grid);
    let qt = opts.tail_count(grid);
    let levels = grid.time_levels();
    let mut a1 = Vec::with_capacity(levels.len());
    let mut a2 = Vec::with_capacity(levels.len());
    let mut a3 = Vec::with_capacity(levels.len());
    let flow = |nodes: Vec<(f64, f64)>, t: f64| -> Result<ScalarField> {
        let terms = nodes
            .into_par_iter()
            .map(|(s, w)| Ok(neumann_div(&interpolate_vector(alpha, s)?, t + s, opts.duhamel.path)?.scale(w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(sum_fields(grid, terms))
    };
    for &t in levels {
        let g = |s: f64| resolvent_div(&interpolate_vector(alpha, s)?, s, opts);
        a1.push(maximal_regularity_at(grid, t, g, opts)?);
        let head = flow(head_nodes(t, q), t)?;
        let tail = flow(tail_nodes(t, horizon, qt), t)?;
        a2.push(&head + &tail);
        a3.push(tail.scale(-1.0));
    }
    Ok(SplitA {
        a1: SpaceTimeField::new(grid, a1)?,
        a2: SpaceTimeField::new(grid, a2)?,
        a3: SpaceTimeField::new(grid, a3)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDiagnostics {
    pub a_norm: f64,
    pub a1_norm: f64,
    pub a2_norm: f64,
    pub a3_norm: f64,
    /// `‖A_1 + A_2 + A_3 - A‖_ε`.
    pub defect: f64,
    /// `defect / ‖A‖_ε`; zero when `A` vanishes.
    pub relative: f64,
}

pub fn split_diagnostics(
    alpha: &SpaceTimeVectorField,
    balls: &ParabolicBallFamily,
    opts: &OperatorOptions,
) -> Result<SplitDiagnostics> {
    let a = bilinear_a(alpha, &opts.duhamel)?;
    let split = split_a(alpha, opts)?;
    let defect = path_norm(&split.sum()?.sub(&a)?, balls)?;
    let a_norm = path_norm(&a, balls)?;
    Ok(SplitDiagnostics {
        a_norm,
        a1_norm: path_norm(&split.a1, balls)?,
        a2_norm: path_norm(&split.a2, balls)?,
        a3_norm: path_norm(&split.a3, balls)?,
        defect,
        relative: if a_norm > 0.0 { defect / a_norm } else { 0.0 },
    })
}

/// Norms entering the pointwise and Carleson bounds for `A(α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuhamelBounds {
    /// `‖t^{1/2} A(α)‖_∞`.
    pub a_weighted_linf: f64,
    /// `‖A(α)‖_{T^{∞,2}}`.
    pub a_tent_inf2: f64,
    /// `‖α‖_{T^{∞,1}}`.
    pub alpha_tent_inf1: f64,
    /// `sup_s ‖s α(s)‖_∞`.
    pub alpha_weighted_sup: f64,
    /// `‖s^{1/2} α‖_{T^{∞,2}}`.
    pub alpha_tent_half: f64,
    /// `a_weighted_linf / (alpha_tent_inf1 + alpha_weighted_sup)`.
    pub pointwise_constant: f64,
    /// `a_tent_inf2 / (alpha_tent_inf1 + alpha_tent_half)`.
    pub carleson_constant: f64,
}

pub fn duhamel_bounds(
    alpha: &SpaceTimeVectorField,
    balls: &ParabolicBallFamily,
    opts: &DuhamelOptions,
) -> Result<DuhamelBounds> {
    let a = bilinear_a(alpha, opts)?;
    let mag = alpha.magnitude();
    let a_weighted_linf = weighted_linf_norm(&a);
    let a_tent_inf2 = tent_inf2_norm(&a, balls)?;
    let alpha_tent_inf1 = tent_inf1_norm(&mag, balls)?;
    let alpha_weighted_sup =
        mag.slices().iter().enumerate().map(|(k, s)| mag.time(k) * s.max_abs()).fold(0.0, f64::max);
    let alpha_tent_half = tent_inf2_norm(&mag.time_weighted(0.5), balls)?;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(DuhamelBounds {
        a_weighted_linf,
        a_tent_inf2,
        alpha_tent_inf1,
        alpha_weighted_sup,
        alpha_tent_half,
        pointwise_constant: ratio(a_weighted_linf, alpha_tent_inf1 + alpha_weighted_sup),
        carleson_constant: ratio(a_tent_inf2, alpha_tent_inf1 + alpha_tent_half),
    })
}

/// Solver parameters. `direction` is the unit vector `b` of the
/// nonlinearity `div(b u^2)`; `None` selects `e_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub data_scale: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub direction: Option<Vec<f64>>,
    pub duhamel: DuhamelOptions,
    /// Consecutive growing increments that count as divergence.
    pub divergence_window: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            data_scale: 1.0,
            max_iterations: 60,
            convergence_tol: 1e-10,
            direction: None,
            duhamel: DuhamelOptions::default(),
            divergence_window: 3,
        }
    }
}

impl SolverConfig {
    pub fn direction_for(&self, dim: usize) -> Result<Vec<f64>> {
        let b = match &self.direction {
            Some(b) => b.clone(),
            None => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                e
            }
        };
        if b.len() != dim {
            return Err(Error::ShapeMismatch(format!("direction has {} components, grid has {dim}", b.len())));
        }
        let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("direction must be a unit vector, |b| = {norm}")));
        }
        Ok(b)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::Domain("convergence_tol must be positive".into()));
        }
        if !self.data_scale.is_finite() {
            return Err(Error::Domain("data_scale must be finite".into()));
        }
        if self.max_iterations == 0 || self.divergence_window == 0 {
            return Err(Error::Domain("max_iterations and divergence_window must be positive".into()));
        }
        self.direction_for(dim).map(|_| ())
    }
}

/// `b u^2`, pointwise in space-time.
pub fn nonlinearity(u: &SpaceTimeField, direction: &[f64]) -> Result<SpaceTimeVectorField> {
    SpaceTimeVectorField::directed(&u.square(), direction)
}

/// `Θ(u) = e^{tΔ_N} u_0 - A(b u^2)`.
pub fn theta(u: &SpaceTimeField, u0: &ScalarField, cfg: &SolverConfig) -> Result<SpaceTimeField> {
    theta_with(&build_extension(u0)?, u, cfg)
}

fn theta_with(free: &SpaceTimeField, u: &SpaceTimeField, cfg: &SolverConfig) -> Result<SpaceTimeField> {
    let b = cfg.direction_for(u.grid().dim())?;
    free.sub(&bilinear_a(&nonlinearity(u, &b)?, &cfg.duhamel)?)
}

/// `‖u - Θ(u)‖_ε`.
pub fn residual(u: &SpaceTimeField, u0: &ScalarField, balls: &ParabolicBallFamily, cfg: &SolverConfig) -> Result<f64> {
    path_norm(&u.sub(&theta(u, u0, cfg)?)?, balls)
}

/// `‖Θ(u) - Θ(v)‖_ε / ‖u - v‖_ε`; `None` when `u = v` in the ε-norm.
pub fn contraction_factor(
    u: &SpaceTimeField,
    v: &SpaceTimeField,
    balls: &ParabolicBallFamily,
    cfg: &SolverConfig,
) -> Result<Option<f64>> {
    let den = path_norm(&u.sub(v)?, balls)?;
    if den == 0.0 {
        return Ok(None);
    }
    let b = cfg.direction_for(u.grid().dim())?;
    let diff = SpaceTimeVectorField::directed(&u.square().sub(&v.square())?, &b)?;
    Ok(Some(path_norm(&bilinear_a(&diff, &cfg.duhamel)?, balls)? / den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    Diverged,
    MaxIter,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::MaxIter => "max-iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖u_k‖_ε`.
    pub norm: f64,
    /// `‖u_k - u_{k-1}‖_ε`.
    pub increment: f64,
    /// `increment_k / increment_{k-1}`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: Vec<IterationRecord>,
    /// `increment_2 / increment_1`, the contraction factor of `Θ` on the
    /// first Picard pair.
    pub contraction_estimate: Option<f64>,
    /// Largest increment ratio not dominated by rounding.
    pub max_ratio: Option<f64>,
    /// `‖u - Θ(u)‖_ε` for the returned iterate.
    pub residual: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub u: SpaceTimeField,
    pub diagnostics: SolverDiagnostics,
}

// increments below this multiple of the iterate norm are rounding noise
const NOISE: f64 = 1e-9;

/// Picard iteration `u_{k+1} = Θ(u_k)` from the free evolution of
/// `data_scale * u0`.
pub fn picard_solve(u0: &ScalarField, balls: &ParabolicBallFamily, cfg: &SolverConfig) -> Result<PicardOutcome> {
    let grid = u0.grid();
    cfg.validate(grid.dim())?;
    let data = u0.scale(cfg.data_scale);
    let free = build_extension(&data)?;
    let mut u = free.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut growing = 0;
    let mut verdict = Verdict::MaxIter;
    for k in 1..=cfg.max_iterations {
        let next = theta_with(&free, &u, cfg)?;
        if !next.is_finite() {
            return Err(Error::BlowUp(k));
        }
        let increment = path_norm(&next.sub(&u)?, balls)?;
        let norm = path_norm(&next, balls)?;
        if !(increment.is_finite() && norm.is_finite()) {
            return Err(Error::BlowUp(k));
        }
        let prev = records.last().map(|r| r.increment);
        let ratio = prev.and_then(|p| (p > 0.0).then(|| increment / p));
        if matches!(prev, Some(p) if increment > p) {
            growing += 1;
        } else {
            growing = 0;
        }
        records.push(IterationRecord { iteration: k, norm, increment, ratio });
        u = next;
        if increment < cfg.convergence_tol {
            verdict = Verdict::Converged;
            break;
        }
        if growing >= cfg.divergence_window {
            verdict = Verdict::Diverged;
            break;
        }
    }
    let contraction_estimate = records.get(1).and_then(|r| r.ratio);
    let max_ratio = records
        .iter()
        .filter(|r| r.increment > NOISE * r.norm)
        .filter_map(|r| r.ratio)
        .reduce(f64::max);
    let residual = path_norm(&u.sub(&theta_with(&free, &u, cfg)?)?, balls)?;
    Ok(PicardOutcome {
        u,
        diagnostics: SolverDiagnostics { iterations: records, contraction_estimate, max_ratio, residual, verdict },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    pub verdict: Verdict,
    pub iterations: usize,
    pub contraction: Option<f64>,
    pub solution_norm: f64,
}

fn sweep_point(u0: &ScalarField, balls: &ParabolicBallFamily, cfg: &SolverConfig, scale: f64) -> Result<SweepRow> {
    let cfg = SolverConfig { data_scale: scale, ..cfg.clone() };
    match picard_solve(u0, balls, &cfg) {
        Ok(out) => Ok(SweepRow {
            scale,
            verdict: out.diagnostics.verdict,
            iterations: out.diagnostics.iterations.len(),
            contraction: out.diagnostics.contraction_estimate,
            solution_norm: out.diagnostics.iterations.last().map_or(0.0, |r| r.norm),
        }),
        Err(Error::BlowUp(k)) => Ok(SweepRow {
            scale,
            verdict: Verdict::Diverged,
            iterations: k,
            contraction: None,
            solution_norm: f64::INFINITY,
        }),
        Err(e) => Err(e),
    }
}

/// One Picard run per data scale.
pub fn smallness_sweep(
    u0: &ScalarField,
    balls: &ParabolicBallFamily,
    cfg: &SolverConfig,
    scales: &[f64],
) -> Result<Vec<SweepRow>> {
    scales.iter().map(|&s| sweep_point(u0, balls, cfg, s)).collect()
}

/// Bisection for the smallest data scale at which Picard stops converging,
/// given `lo` converges and `hi` does not. `None` if the bracket is invalid.
pub fn convergence_threshold(
    u0: &ScalarField,
    balls: &ParabolicBallFamily,
    cfg: &SolverConfig,
    mut lo: f64,
    mut hi: f64,
    steps: usize,
) -> Result<Option<f64>> {
    let converges = |s: f64| -> Result<bool> { Ok(sweep_point(u0, balls, cfg, s)?.verdict == Verdict::Converged) };
    if !converges(lo)? || converges(hi)? {
        return Ok(None);
    }
    for _ in 0..steps {
        let mid = (lo * hi).sqrt();
        if converges(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some((lo * hi).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::BallFamilyConfig;

    fn setup(n: usize, m: usize) -> (Grid, ParabolicBallFamily) {
        let g = GridSpec::graded(1, 4.0, n, 1.0, m).unwrap();
        let b = ParabolicBallFamily::generate(&g, &BallFamilyConfig { min_radius: Some(0.25), ..Default::default() })
            .unwrap();
        (g, b)
    }

    fn bump_alpha(g: &Grid) -> SpaceTimeVectorField {
        let w = SpaceTimeField::from_fn(g, |x, t| (-(x[0] - 1.2).powi(2) / 0.18).exp() * (1.0 + t)).unwrap();
        SpaceTimeVectorField::directed(&w, &[1.0]).unwrap()
    }

    #[test]
    fn rules_integrate_exactly() {
        let s: f64 = head_nodes(0.7, 40).iter().map(|(_, w)| w).sum();
        assert!((s - 0.7).abs() < 1e-12);
        let s: f64 = tail_nodes(0.1, 1.0, 40).iter().map(|(x, w)| w * x).sum();
        assert!((s - 0.495).abs() < 1e-3);
        let r: f64 = dyadic_rule(2.0, 1e-6).iter().map(|(x, w)| w * (-x).exp()).sum();
        assert!((r - (1.0 - (-2.0f64).exp())).abs() < 1e-8);
        assert!(tail_nodes(1.0, 1.0, 4).is_empty());
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let (g, b) = setup(64, 8);
        let z = SpaceTimeVectorField::zeros(&g);
        let opts = OperatorOptions::default();
        assert_eq!(bilinear_a(&z, &opts.duhamel).unwrap().max_abs(), 0.0);
        assert_eq!(operator_t(&z, &opts).unwrap().max_abs(), 0.0);
        assert_eq!(operator_r(&z, &opts).unwrap().max_abs(), 0.0);
        assert_eq!(maximal_regularity(&SpaceTimeField::zeros(&g), &opts).unwrap().max_abs(), 0.0);
        let s = split_a(&z, &opts).unwrap();
        assert_eq!(s.sum().unwrap().max_abs(), 0.0);
        let out = picard_solve(&ScalarField::zeros(&g), &b, &SolverConfig::default()).unwrap();
        assert_eq!(out.diagnostics.verdict, Verdict::Converged);
        assert_eq!(out.diagnostics.iterations.len(), 1);
        assert_eq!(out.u.max_abs(), 0.0);
    }

    #[test]
    fn bilinear_a_is_linear() {
        let (g, _) = setup(64, 8);
        let a = bump_alpha(&g);
        let b = a.scale(-0.5);
        let opts = DuhamelOptions::default();
        let lhs = bilinear_a(&a.add(&b).unwrap(), &opts).unwrap();
        let rhs = bilinear_a(&a, &opts).unwrap().add(&bilinear_a(&b, &opts).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn splitting_reconstructs() {
        let (g, b) = setup(128, 16);
        let d = split_diagnostics(&bump_alpha(&g), &b, &OperatorOptions::default()).unwrap();
        assert!(d.relative < 1e-3, "{d:?}");
    }

    #[test]
    fn maximal_regularity_of_a_caloric_path() {
        // ∫_0^t ℒe^{-(t-s)ℒ} e^{-sℒ} g ds = t ℒ e^{-tℒ} g
        let g = GridSpec::graded(1, 4.0, 128, 1.0, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| (-(x[0] - 1.0).powi(2) * 2.0).exp()).unwrap();
        let opts = OperatorOptions::default();
        for t in [0.25, 1.0] {
            let got = maximal_regularity_at(&g, t, |s| neumann_extend(&f, s), &opts).unwrap();
            let want = generator_flow(&f, t, opts.order).unwrap().scale(t);
            let err = (&got - &want).max_abs() / want.max_abs();
            assert!(err < 1e-3, "t={t} err={err}");
        }
    }

    #[test]
    fn theta_difference_is_quadratic() {
        let (g, b) = setup(64, 8);
        let cfg = SolverConfig::default();
        let u0 = ScalarField::from_fn(&g, |x| 0.1 * (-(x[0] - 1.0).powi(2)).exp()).unwrap();
        let u = build_extension(&u0).unwrap();
        let v = u.scale(0.5);
        let lhs = theta(&u, &u0, &cfg).unwrap().sub(&theta(&v, &u0, &cfg).unwrap()).unwrap();
        let diff = SpaceTimeVectorField::directed(&u.square().sub(&v.square()).unwrap(), &[1.0]).unwrap();
        let rhs = bilinear_a(&diff, &cfg.duhamel).unwrap().scale(-1.0);
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-15);
        // dropping the nonlinearity leaves exactly ‖A(b u²)‖_ε
        let r = residual(&u, &u0, &b, &cfg).unwrap();
        let a = bilinear_a(&SpaceTimeVectorField::directed(&u.square(), &[1.0]).unwrap(), &cfg.duhamel).unwrap();
        assert!((r - path_norm(&a, &b).unwrap()).abs() < 1e-15);
        assert!(contraction_factor(&u, &u, &b, &cfg).unwrap().is_none());
    }

    #[test]
    fn config_rejects_bad_direction() {
        let cfg = SolverConfig { direction: Some(vec![1.0, 1.0]), ..Default::default() };
        assert!(cfg.validate(2).is_err());
        assert!(cfg.validate(1).is_err());
        assert!(SolverConfig::default().validate(3).is_ok());
        assert!(SolverConfig { convergence_tol: 0.0, ..Default::default() }.validate(1).is_err());
    }
}
