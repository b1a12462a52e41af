//! Semigroup-adapted BMO, TMO, tent-space and square-function functionals.
//!
//! Every supremum is a maximum over a finite [`ParabolicBallFamily`]; every
//! space-time integral uses the midpoint time cells of
//! [`crate::grid::time_weights`] clipped at `r^2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    for_each_in_ball, gradient, neumann_laplacian, periodic_laplacian, time_derivative, time_weights, BallSums,
    Grid, GridDescriptor, GridSpec, Half, ScalarField, SpaceTimeField, StencilOrder,
};
use crate::semigroup::{build_extension, heat_extend_whole, neumann_extend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Generation policy for a ball family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallFamilyConfig {
    /// Smallest admissible radius; `None` picks `max(2 sqrt(t_1), 4h)`.
    pub min_radius: Option<f64>,
    /// Largest radius; `None` picks `min(sqrt(T), window / 2)`.
    pub max_radius: Option<f64>,
    /// Radii shrink by `2^{-1/2^refinement}`; center spacing is `r / 2^{refinement+1}`.
    pub refinement: u32,
    /// Balls satisfy `|c_i| + r <= window`; `None` picks `L / 2`.
    pub window: Option<f64>,
}

impl Default for BallFamilyConfig {
    fn default() -> Self {
        BallFamilyConfig { min_radius: None, max_radius: None, refinement: 0, window: None }
    }
}

impl BallFamilyConfig {
    pub fn refined(&self) -> Self {
        BallFamilyConfig { refinement: self.refinement + 1, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallFamilyDescriptor {
    pub balls: usize,
    pub radii: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    pub refinement: u32,
    pub window: f64,
}

impl std::fmt::Display for BallFamilyDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "r{}-{}_k{}_ref{}_w{}_b{}",
            self.min_radius, self.max_radius, self.radii, self.refinement, self.window, self.balls
        )
    }
}

/// Finite family of spatial balls standing in for the supremum over all
/// Carleson boxes `B(c, r) x (0, r^2]`. Generated families are symmetric under
/// `x_n -> -x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicBallFamily {
    balls: Vec<Ball>,
    descriptor: BallFamilyDescriptor,
}

impl ParabolicBallFamily {
    pub fn generate(grid: &GridSpec, cfg: &BallFamilyConfig) -> Result<Self> {
        let l = grid.half_width();
        let t1 = grid.time_levels()[0];
        let horizon = grid.horizon();
        let window = cfg.window.unwrap_or(0.5 * l);
        if !(window > 0.0 && window <= l) {
            return Err(Error::Domain(format!("ball window must lie in (0, L], got {window}")));
        }
        let r_max = cfg.max_radius.unwrap_or_else(|| horizon.sqrt().min(0.5 * window));
        let r_min = cfg.min_radius.unwrap_or_else(|| (2.0 * t1.sqrt()).max(4.0 * grid.spacing()));
        if !(r_min > 0.0 && r_max >= r_min) {
            return Err(Error::Domain(format!("need 0 < min radius <= max radius, got {r_min}, {r_max}")));
        }
        if r_max > window {
            return Err(Error::Domain("max radius exceeds the ball window".into()));
        }
        if r_max * r_max > horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "max radius {r_max} has r^2 beyond the time horizon {horizon}"
            )));
        }
        if r_min * r_min < t1 * (1.0 - 1e-12) {
            return Err(Error::TimeGridTooCoarse(r_min * r_min));
        }
        let steps = 1u32 << cfg.refinement;
        let ratio = 2f64.powf(-1.0 / steps as f64);
        let dim = grid.dim();
        let mut balls = Vec::new();
        let mut radii = 0;
        let mut r = r_max;
        while r >= r_min * (1.0 - 1e-12) {
            radii += 1;
            let spacing = r / (2 * steps) as f64;
            let reach = window - r;
            let kmax = (reach / spacing + 1e-9).floor() as i64;
            let ticks: Vec<f64> = (-kmax..=kmax).map(|k| k as f64 * spacing).collect();
            let mut idx = vec![0usize; dim];
            loop {
                balls.push(Ball { center: idx.iter().map(|&i| ticks[i]).collect(), radius: r });
                let mut a = dim;
                loop {
                    if a == 0 {
                        break;
                    }
                    a -= 1;
                    if idx[a] + 1 < ticks.len() {
                        idx[a] += 1;
                        break;
                    }
                    idx[a] = 0;
                    if a == 0 {
                        a = usize::MAX;
                        break;
                    }
                }
                if a == usize::MAX {
                    break;
                }
            }
            r *= ratio;
        }
        if balls.is_empty() {
            return Err(Error::EmptyBallFamily);
        }
        let min_radius = balls.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
        Ok(ParabolicBallFamily {
            descriptor: BallFamilyDescriptor {
                balls: balls.len(),
                radii,
                min_radius,
                max_radius: r_max,
                refinement: cfg.refinement,
                window,
            },
            balls,
        })
    }

    /// Family from explicit balls.
    pub fn from_balls(balls: Vec<Ball>) -> Result<Self> {
        if balls.is_empty() {
            return Err(Error::EmptyBallFamily);
        }
        if balls.iter().any(|b| !(b.radius > 0.0) || b.center.iter().any(|c| !c.is_finite())) {
            return Err(Error::Domain("balls need positive radius and finite center".into()));
        }
        let mut radii: Vec<f64> = balls.iter().map(|b| b.radius).collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let window = balls
            .iter()
            .map(|b| b.center.iter().fold(0.0_f64, |m, c| m.max(c.abs())) + b.radius)
            .fold(0.0, f64::max);
        Ok(ParabolicBallFamily {
            descriptor: BallFamilyDescriptor {
                balls: balls.len(),
                radii: radii.len(),
                min_radius: radii[0],
                max_radius: *radii.last().unwrap(),
                refinement: 0,
                window,
            },
            balls,
        })
    }

    pub fn union(&self, other: &ParabolicBallFamily) -> Result<Self> {
        let mut balls = self.balls.clone();
        for b in &other.balls {
            if !balls.contains(b) {
                balls.push(b.clone());
            }
        }
        Self::from_balls(balls)
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn descriptor(&self) -> &BallFamilyDescriptor {
        &self.descriptor
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Distinct radii, largest first.
    pub fn radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.balls.iter().map(|b| b.radius).collect();
        r.sort_by(|a, b| b.total_cmp(a));
        r.dedup();
        r
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.balls.iter().any(|b| b.center.len() != dim) {
            return Err(Error::ShapeMismatch("ball centers must match the grid dimension".into()));
        }
        Ok(())
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0_f64, f64::max)
}

/// `sup_B |B|^{-1} ∫_B |f - e^{r_B^2 Δ_N} f|`.
pub fn bmo_neumann_norm(f: &ScalarField, balls: &ParabolicBallFamily) -> Result<f64> {
    let grid = f.grid();
    balls.check_dim(grid.dim())?;
    let per_radius = balls
        .radii()
        .par_iter()
        .map(|&r| -> Result<f64> {
            let p = neumann_extend(f, r * r)?;
            let osc: Vec<f64> = f.values().iter().zip(p.values()).map(|(a, b)| (a - b).abs()).collect();
            let sums = BallSums::new(grid, &osc);
            let mut worst = 0.0_f64;
            for b in balls.balls().iter().filter(|b| b.radius == r) {
                let (s, count) = sums.sum(&b.center, r, None);
                if count == 0 {
                    return Err(Error::EmptyRegion);
                }
                worst = worst.max(s / count as f64);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(max_of(per_radius))
}

/// `sup_B |B|^{-1} ∫_B |f - f_B|` (John-Nirenberg).
pub fn classical_bmo_norm(f: &ScalarField, balls: &ParabolicBallFamily) -> Result<f64> {
    let grid = f.grid();
    balls.check_dim(grid.dim())?;
    let v = f.values();
    let per_ball = balls
        .balls()
        .par_iter()
        .map(|b| -> Result<f64> {
            let mut idx = Vec::new();
            for_each_in_ball(grid, &b.center, b.radius, None, |i| idx.push(i));
            if idx.is_empty() {
                return Err(Error::EmptyRegion);
            }
            let mean = idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
            Ok(idx.iter().map(|&i| (v[i] - mean).abs()).sum::<f64>() / idx.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(max_of(per_ball))
}

/// Carleson averages `r^{-n} ∫_0^{r^2} ∫_{B ∩ half} g` for every ball, with
/// `g` given per time level.
pub fn carleson_averages(
    grid: &Grid,
    integrand: &[Vec<f64>],
    balls: &ParabolicBallFamily,
    half: Option<Half>,
) -> Result<Vec<f64>> {
    balls.check_dim(grid.dim())?;
    let levels = grid.time_levels();
    if integrand.len() != levels.len() {
        return Err(Error::ShapeMismatch("one integrand slice per time level".into()));
    }
    let r_max = balls.descriptor().max_radius;
    let used = levels.iter().take_while(|&&t| t <= r_max * r_max * (1.0 + 1e-12)).count() + 1;
    let sums: Vec<BallSums> = integrand
        .par_iter()
        .take(used.min(levels.len()))
        .map(|g| BallSums::new(grid, g))
        .collect();
    let vol = grid.cell_volume();
    let n = grid.dim() as i32;
    balls
        .balls()
        .par_iter()
        .map(|b| -> Result<f64> {
            let w = time_weights(levels, b.radius * b.radius)?;
            let mut acc = 0.0;
            for (k, wk) in w {
                acc += wk * sums[k].sum(&b.center, b.radius, half).0;
            }
            Ok(vol * acc / b.radius.powi(n))
        })
        .collect()
}

fn slices_map(u: &SpaceTimeField, f: impl Fn(f64) -> f64 + Sync) -> Vec<Vec<f64>> {
    u.slices().iter().map(|s| s.values().iter().map(|&v| f(v)).collect()).collect()
}

/// `sup_B (r^{-n} ∫_0^{r^2} ∫_B |∇_x u|^2 + |∂_t u|^2)^{1/2}`, computed on
/// each half-space separately; the larger half wins.
pub fn tmo_norm(u: &SpaceTimeField, balls: &ParabolicBallFamily) -> Result<f64> {
    let grid = u.grid();
    let dt = time_derivative(u)?;
    let integrand = u
        .slices()
        .par_iter()
        .zip(dt.slices())
        .map(|(s, d)| -> Result<Vec<f64>> {
            let g = gradient(s)?;
            let mut out: Vec<f64> = d.values().iter().map(|v| v * v).collect();
            for c in g.components() {
                out.iter_mut().zip(c.values()).for_each(|(o, x)| *o += x * x);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0_f64;
    for half in Half::BOTH {
        worst = worst.max(max_of(carleson_averages(grid, &integrand, balls, Some(half))?));
    }
    Ok(worst.sqrt())
}

/// `sup_B (r^{-n} ∫_0^{r^2} ∫_B |u|^2)^{1/2}`.
pub fn tent_inf2_norm(u: &SpaceTimeField, balls: &ParabolicBallFamily) -> Result<f64> {
    let g = slices_map(u, |v| v * v);
    Ok(max_of(carleson_averages(u.grid(), &g, balls, None)?).sqrt())
}

/// `sup_B r^{-n} ∫_0^{r^2} ∫_B |u|`.
pub fn tent_inf1_norm(u: &SpaceTimeField, balls: &ParabolicBallFamily) -> Result<f64> {
    let g = slices_map(u, f64::abs);
    Ok(max_of(carleson_averages(u.grid(), &g, balls, None)?))
}

/// `∫ (∫∫_{|y-x| < sqrt s} |u(y,s)|^2 s^{-n/2-1} dy ds)^{1/2} dx` over the
/// sampled box and time range.
pub fn tent_12_norm(u: &SpaceTimeField) -> Result<f64> {
    let grid = u.grid();
    let levels = grid.time_levels();
    let w = time_weights(levels, grid.horizon())?;
    let n = grid.dim() as f64;
    let sq = slices_map(u, |v| v * v);
    let sums: Vec<BallSums> = sq.iter().map(|g| BallSums::new(grid, g)).collect();
    let vol = grid.cell_volume();
    let cone = cone_integrals(grid, &sums, &w, |s| s.powf(-n / 2.0 - 1.0));
    Ok(vol * cone.iter().map(|c| (vol * c).sqrt()).sum::<f64>())
}

/// Per node `x`: `Σ_k w_k weight(s_k) Σ_{|y-x|<sqrt(s_k)} g_k(y)`.
fn cone_integrals(
    grid: &GridSpec,
    sums: &[BallSums],
    w: &[(usize, f64)],
    weight: impl Fn(f64) -> f64 + Sync,
) -> Vec<f64> {
    let levels = grid.time_levels();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point_vec(i);
            let mut acc = 0.0;
            for &(k, wk) in w {
                let s = levels[k];
                acc += wk * weight(s) * sums[k].sum(&x, s.sqrt(), None).0;
            }
            acc
        })
        .collect()
}

/// `‖f‖_{BMO^{-1}}`: the tent `T^{∞,2}` norm of the Neumann caloric extension.
pub fn bmo_inv_neumann_norm(f: &ScalarField, balls: &ParabolicBallFamily) -> Result<f64> {
    tent_inf2_norm(&build_extension(f)?, balls)
}

/// `max_k sqrt(t_k) ‖u(t_k)‖_∞`.
pub fn weighted_linf_norm(u: &SpaceTimeField) -> f64 {
    u.slices()
        .iter()
        .enumerate()
        .map(|(k, s)| u.time(k).sqrt() * s.max_abs())
        .fold(0.0, f64::max)
}

/// `‖u‖_ε = ‖t^{1/2} u‖_∞ + ‖u‖_{T^{∞,2}}`.
pub fn path_norm(u: &SpaceTimeField, balls: &ParabolicBallFamily) -> Result<f64> {
    Ok(weighted_linf_norm(u) + tent_inf2_norm(u, balls)?)
}

/// Heat characterization of the homogeneous Besov norm of smoothness `-1`:
/// `max_k sqrt(t_k) ‖e^{t_k Δ} g‖_∞` (whole-space flow).
pub fn besov_heat_norm(g: &ScalarField) -> Result<f64> {
    let grid = g.grid();
    let mut worst = 0.0_f64;
    for &t in grid.time_levels() {
        worst = worst.max(t.sqrt() * heat_extend_whole(g, t)?.max_abs());
    }
    Ok(worst)
}

/// Which semigroup a square function is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SquareFunctionKind {
    /// `Δ_N` with reflecting stencils per half-space.
    Neumann,
    /// Whole-space `Δ` on the periodized box.
    Classical,
}

/// Conical square function
/// `S f(x)^2 = 1/2 ∫ s^{-n/2-1} ∫_{|y-x| < sqrt s} |s Δ e^{sΔ} f(y)|^2 dy ds`
/// over the sampled times, with the fourth-order difference Laplacian.
pub fn square_function_kind(f: &ScalarField, kind: SquareFunctionKind) -> Result<ScalarField> {
    let grid = f.grid();
    let levels = grid.time_levels();
    let n = grid.dim() as f64;
    let w = time_weights(levels, grid.horizon())?;
    let sq = levels
        .par_iter()
        .map(|&s| -> Result<Vec<f64>> {
            let lap = match kind {
                SquareFunctionKind::Neumann => neumann_laplacian(&neumann_extend(f, s)?, StencilOrder::Fourth)?,
                SquareFunctionKind::Classical => {
                    periodic_laplacian(&heat_extend_whole(f, s)?, StencilOrder::Fourth)?
                }
            };
            Ok(lap.values().iter().map(|v| (s * v).powi(2)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let sums: Vec<BallSums> = sq.iter().map(|g| BallSums::new(grid, g)).collect();
    let vol = grid.cell_volume();
    let cone = cone_integrals(grid, &sums, &w, |s| 0.5 * s.powf(-n / 2.0 - 1.0));
    ScalarField::new(grid, cone.iter().map(|c| (vol * c).sqrt()).collect())
}

pub fn square_function(f: &ScalarField) -> Result<ScalarField> {
    square_function_kind(f, SquareFunctionKind::Neumann)
}

/// `‖S_{Δ_N} f‖_{L^1}`.
pub fn hardy_norm(f: &ScalarField) -> Result<f64> {
    Ok(square_function(f)?.abs().values().iter().sum::<f64>() * f.grid().cell_volume())
}

/// Every norm of one field with the discretization it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    #[serde(rename = "bmo_N")]
    pub bmo_n: f64,
    pub tmo: f64,
    pub tent_inf2: f64,
    pub tent_inf1: f64,
    pub tent_12: f64,
    #[serde(rename = "bmo_inv_N")]
    pub bmo_inv_n: f64,
    pub weighted_linf: f64,
    pub path_eps: f64,
    pub hardy: f64,
    /// `L^1` norm of the whole-space square function, for contrast with `hardy`.
    pub square_fn_l1: f64,
    pub ball_family: BallFamilyDescriptor,
    pub grid: GridDescriptor,
}

impl NormReport {
    /// Norms of `f` and of its caloric extension `u = e^{tΔ_N} f`.
    pub fn compute(f: &ScalarField, balls: &ParabolicBallFamily) -> Result<Self> {
        let u = build_extension(f)?;
        let tent_inf2 = tent_inf2_norm(&u, balls)?;
        let weighted_linf = weighted_linf_norm(&u);
        let classical = square_function_kind(f, SquareFunctionKind::Classical)?;
        let report = NormReport {
            bmo_n: bmo_neumann_norm(f, balls)?,
            tmo: tmo_norm(&u, balls)?,
            tent_inf2,
            tent_inf1: tent_inf1_norm(&u, balls)?,
            tent_12: tent_12_norm(&u)?,
            bmo_inv_n: tent_inf2,
            weighted_linf,
            path_eps: weighted_linf + tent_inf2,
            hardy: hardy_norm(f)?,
            square_fn_l1: classical.values().iter().sum::<f64>() * f.grid().cell_volume(),
            ball_family: balls.descriptor().clone(),
            grid: f.grid().descriptor(),
        };
        report.validate()?;
        Ok(report)
    }

    fn validate(&self) -> Result<()> {
        let vals = [
            self.bmo_n,
            self.tmo,
            self.tent_inf2,
            self.tent_inf1,
            self.tent_12,
            self.bmo_inv_n,
            self.weighted_linf,
            self.path_eps,
            self.hardy,
            self.square_fn_l1,
        ];
        if vals.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::NonFinite("norm report".into()))
        }
    }
}
