//! Cell-centered grids on the truncated box `[-L, L]^n`, sampled fields, and
//! the quadrature / stencil plumbing every other module builds on.
//!
//! Nodes sit at `x = -L + (i + 1/2) h` with `h = 2L / N`, so with `N` even no
//! node lies on the interface `{x_n = 0}`. Storage is row-major with the last
//! axis (the normal direction `x_n`) fastest; a *row* is the set of `N` nodes
//! that share their tangential coordinates.

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared handle to a grid description; every field carries one.
pub type Grid = Arc<GridSpec>;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    points: usize,
    time_levels: Vec<f64>,
}

/// Serializable summary of a grid, attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub spacing: f64,
    pub time_levels: usize,
    pub first_time: f64,
    pub horizon: f64,
}

impl std::fmt::Display for GridDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "n{}_L{}_N{}_M{}_T{}",
            self.dim, self.half_width, self.points, self.time_levels, self.horizon
        )
    }
}

impl GridSpec {
    pub fn new(dim: usize, half_width: f64, points: usize, time_levels: Vec<f64>) -> Result<Grid> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be >= 1".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        if points < 2 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 2, got {points}"
            )));
        }
        if points.checked_pow(dim as u32).is_none() {
            return Err(Error::InvalidGrid("grid too large".into()));
        }
        if time_levels.is_empty() {
            return Err(Error::InvalidGrid("at least one time level is required".into()));
        }
        if time_levels.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidGrid("time levels must be positive and finite".into()));
        }
        if time_levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("time levels must be strictly increasing".into()));
        }
        Ok(Arc::new(GridSpec { dim, half_width, points, time_levels }))
    }

    /// Grid with `levels` time levels graded quadratically towards zero,
    /// `t_k = horizon * (k / levels)^2` for `k = 1..=levels`.
    pub fn graded(dim: usize, half_width: f64, points: usize, horizon: f64, levels: usize) -> Result<Grid> {
        if levels == 0 {
            return Err(Error::InvalidGrid("at least one time level is required".into()));
        }
        let m = levels as f64;
        let times = (1..=levels).map(|k| horizon * (k as f64 / m).powi(2)).collect();
        Self::new(dim, half_width, points, times)
    }

    /// Same spatial grid with a different set of time levels.
    pub fn with_time_levels(&self, time_levels: Vec<f64>) -> Result<Grid> {
        Self::new(self.dim, self.half_width, self.points, time_levels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Number of spatial nodes, `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn time_levels(&self) -> &[f64] {
        &self.time_levels
    }

    pub fn horizon(&self) -> f64 {
        *self.time_levels.last().expect("non-empty time levels")
    }

    /// Coordinate of node `i` along any axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Stride of `axis` in the flat storage.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn normal_index(&self, idx: usize) -> usize {
        idx % self.points
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.points
    }

    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for axis in (0..self.dim).rev() {
            out[axis] = self.coord(rem % self.points);
            rem /= self.points;
        }
    }

    pub fn point_vec(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        self.point(idx, &mut p);
        p
    }

    #[inline]
    pub fn half_of(&self, idx: usize) -> Half {
        if self.normal_index(idx) >= self.points / 2 {
            Half::Upper
        } else {
            Half::Lower
        }
    }

    /// Index of the reflection of node `idx` across `{x_n = 0}`.
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        let j = self.normal_index(idx);
        idx - j + (self.points - 1 - j)
    }

    /// Number of rows (nodes sharing tangential coordinates).
    pub fn rows(&self) -> usize {
        self.points.pow((self.dim - 1) as u32)
    }

    /// Index into `time_levels` matching `t` to within relative 1e-12.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.time_levels
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * s.abs().max(t.abs()))
    }

    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.dim == other.dim && self.points == other.points && self.half_width == other.half_width
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            dim: self.dim,
            half_width: self.half_width,
            points: self.points,
            spacing: self.spacing(),
            time_levels: self.time_levels.len(),
            first_time: self.time_levels[0],
            horizon: self.horizon(),
        }
    }
}

/// One of the two half-spaces `{x_n > 0}` / `{x_n < 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Upper,
    Lower,
}

impl Half {
    pub const BOTH: [Half; 2] = [Half::Upper, Half::Lower];

    pub fn sign(self) -> f64 {
        match self {
            Half::Upper => 1.0,
            Half::Lower => -1.0,
        }
    }

    pub fn opposite(self) -> Half {
        match self {
            Half::Upper => Half::Lower,
            Half::Lower => Half::Upper,
        }
    }

    /// Normal-axis index range `[lo, hi)` of this half.
    pub fn normal_range(self, points: usize) -> (usize, usize) {
        match self {
            Half::Upper => (points / 2, points),
            Half::Lower => (0, points / 2),
        }
    }
}

/// Quadrature region for [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    All,
    Upper,
    Lower,
    Ball { center: Vec<f64>, radius: f64 },
}

fn check_same(a: &Grid, b: &Grid, what: &str) -> Result<()> {
    if Arc::ptr_eq(a, b) || a.same_space(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("{what}: fields live on different grids")))
    }
}

/// A real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field".into()));
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    /// Caller guarantees length and finiteness.
    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut p = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut p);
                f(&p)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same(&self.grid, &other.grid, "zip")?;
        Self::new(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn abs(&self) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| v.abs()).collect())
    }

    pub fn square(&self) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|v| v * v).collect())
    }

    /// Same samples viewed on `grid` (which must describe the same space).
    pub fn regrid(&self, grid: &Grid) -> Result<Self> {
        check_same(&self.grid, grid, "regrid")?;
        Ok(Self::from_raw(grid, self.values.clone()))
    }

    pub fn integrate(&self, region: &Region) -> Result<f64> {
        integrate(self, region)
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        assert!(self.grid.same_space(&rhs.grid), "adding fields on different grids");
        ScalarField::from_raw(
            &self.grid,
            self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        )
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        assert!(self.grid.same_space(&rhs.grid), "subtracting fields on different grids");
        ScalarField::from_raw(
            &self.grid,
            self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        )
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, c: f64) -> ScalarField {
        self.scale(c)
    }
}

/// `n` scalar components on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::ShapeMismatch("vector field needs components".into()))?;
        let grid = first.grid.clone();
        if components.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "vector field on a {}-dimensional grid needs {} components, got {}",
                grid.dim(),
                grid.dim(),
                components.len()
            )));
        }
        for c in &components {
            check_same(&grid, &c.grid, "vector field")?;
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            grid: grid.clone(),
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    /// The field `direction * f`.
    pub fn directed(f: &ScalarField, direction: &[f64]) -> Result<Self> {
        if direction.len() != f.grid.dim() {
            return Err(Error::ShapeMismatch("direction length must equal dimension".into()));
        }
        Self::new(direction.iter().map(|&b| f.scale(b)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn scale(&self, c: f64) -> Self {
        VectorField {
            grid: self.grid.clone(),
            components: self.components.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        check_same(&self.grid, &other.grid, "vector add")?;
        Ok(VectorField {
            grid: self.grid.clone(),
            components: self.components.iter().zip(&other.components).map(|(a, b)| a + b).collect(),
        })
    }
}

/// Samples `u(x, t_k)` on every time level of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    slices: Vec<ScalarField>,
}

impl SpaceTimeField {
    pub fn new(grid: &Grid, slices: Vec<ScalarField>) -> Result<Self> {
        if slices.len() != grid.time_levels().len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} slices, got {}",
                grid.time_levels().len(),
                slices.len()
            )));
        }
        for s in &slices {
            check_same(grid, &s.grid, "space-time field")?;
        }
        Ok(SpaceTimeField { grid: grid.clone(), slices })
    }

    pub fn zeros(grid: &Grid) -> Self {
        SpaceTimeField {
            grid: grid.clone(),
            slices: grid.time_levels().iter().map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let slices = grid
            .time_levels()
            .iter()
            .map(|&t| ScalarField::from_fn(grid, |x| f(x, t)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, slices)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn slices(&self) -> &[ScalarField] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &ScalarField {
        &self.slices[k]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.time_levels()[k]
    }

    pub fn map_slices(&self, f: impl Fn(usize, &ScalarField) -> ScalarField) -> Self {
        SpaceTimeField {
            grid: self.grid.clone(),
            slices: self.slices.iter().enumerate().map(|(k, s)| f(k, s)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map_slices(|_, s| s.scale(c))
    }

    pub fn max_abs(&self) -> f64 {
        self.slices.iter().fold(0.0_f64, |m, s| m.max(s.max_abs()))
    }

    pub fn add(&self, other: &SpaceTimeField) -> Result<Self> {
        check_same(&self.grid, &other.grid, "space-time add")?;
        Ok(self.map_slices(|k, s| s + &other.slices[k]))
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Result<Self> {
        check_same(&self.grid, &other.grid, "space-time sub")?;
        Ok(self.map_slices(|k, s| s - &other.slices[k]))
    }

    /// Pointwise `t^p u(x, t)`.
    pub fn time_weighted(&self, p: f64) -> Self {
        self.map_slices(|k, s| s.scale(self.time(k).powf(p)))
    }

    pub fn square(&self) -> Self {
        self.map_slices(|_, s| s.square())
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.values.iter().all(|v| v.is_finite()))
    }
}

/// Time-indexed vector field, e.g. the nonlinearity `alpha(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeVectorField {
    grid: Grid,
    slices: Vec<VectorField>,
}

impl SpaceTimeVectorField {
    pub fn new(grid: &Grid, slices: Vec<VectorField>) -> Result<Self> {
        if slices.len() != grid.time_levels().len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} slices, got {}",
                grid.time_levels().len(),
                slices.len()
            )));
        }
        for s in &slices {
            check_same(grid, &s.grid, "space-time vector field")?;
            if s.components.iter().any(|c| c.values.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite("space-time vector field".into()));
            }
        }
        Ok(SpaceTimeVectorField { grid: grid.clone(), slices })
    }

    pub fn zeros(grid: &Grid) -> Self {
        SpaceTimeVectorField {
            grid: grid.clone(),
            slices: grid.time_levels().iter().map(|_| VectorField::zeros(grid)).collect(),
        }
    }

    /// `alpha(s) = direction * w(s)` slice by slice.
    pub fn directed(w: &SpaceTimeField, direction: &[f64]) -> Result<Self> {
        let slices = w
            .slices()
            .iter()
            .map(|s| VectorField::directed(s, direction))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&w.grid, slices)
    }

    /// The same vector field at every time level.
    pub fn stationary(field: &VectorField) -> Self {
        let grid = field.grid.clone();
        SpaceTimeVectorField {
            slices: grid.time_levels().iter().map(|_| field.clone()).collect(),
            grid,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn slices(&self) -> &[VectorField] {
        &self.slices
    }

    pub fn slice(&self, k: usize) -> &VectorField {
        &self.slices[k]
    }

    pub fn scale(&self, c: f64) -> Self {
        SpaceTimeVectorField {
            grid: self.grid.clone(),
            slices: self.slices.iter().map(|v| v.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &SpaceTimeVectorField) -> Result<Self> {
        check_same(&self.grid, &other.grid, "space-time vector add")?;
        Ok(SpaceTimeVectorField {
            grid: self.grid.clone(),
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.add(b))
                .collect::<Result<Vec<_>>>()?,
        })
    }

    /// Component-wise `s^p alpha(s)`.
    pub fn time_weighted(&self, p: f64) -> Self {
        let times = self.grid.time_levels();
        SpaceTimeVectorField {
            grid: self.grid.clone(),
            slices: self.slices.iter().enumerate().map(|(k, v)| v.scale(times[k].powf(p))).collect(),
        }
    }

    /// Euclidean magnitude `|alpha(s, x)|` as a space-time scalar field.
    pub fn magnitude(&self) -> SpaceTimeField {
        let slices = self
            .slices
            .iter()
            .map(|v| {
                let mut out = vec![0.0; self.grid.len()];
                for c in &v.components {
                    for (o, x) in out.iter_mut().zip(&c.values) {
                        *o += x * x;
                    }
                }
                ScalarField::from_raw(&self.grid, out.into_iter().map(f64::sqrt).collect())
            })
            .collect();
        SpaceTimeField { grid: self.grid.clone(), slices }
    }
}

/// Midpoint-rule integral `h^n * sum(samples in region)`.
pub fn integrate(f: &ScalarField, region: &Region) -> Result<f64> {
    let grid = &f.grid;
    let vol = grid.cell_volume();
    let (sum, count) = match region {
        Region::All => (f.values.iter().sum::<f64>(), grid.len()),
        Region::Upper | Region::Lower => {
            let half = if *region == Region::Upper { Half::Upper } else { Half::Lower };
            let mut s = 0.0;
            let mut c = 0;
            for (i, v) in f.values.iter().enumerate() {
                if grid.half_of(i) == half {
                    s += v;
                    c += 1;
                }
            }
            (s, c)
        }
        Region::Ball { center, radius } => {
            if center.len() != grid.dim() {
                return Err(Error::ShapeMismatch("ball center dimension".into()));
            }
            let mut s = 0.0;
            let mut c = 0;
            for_each_in_ball(grid, center, *radius, None, |i| {
                s += f.values[i];
                c += 1;
            });
            (s, c)
        }
    };
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(vol * sum)
}

/// `f` on the nodes of `half`, zero elsewhere.
pub fn restrict(f: &ScalarField, half: Half) -> ScalarField {
    let grid = &f.grid;
    let values = f
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| if grid.half_of(i) == half { v } else { 0.0 })
        .collect();
    ScalarField::from_raw(grid, values)
}

/// Even reflection across `{x_n = 0}` of the samples of `f` on `half`:
/// `g(x', x_n) = f(x', sign * |x_n|)`. Samples of `f` on the other half are ignored.
pub fn even_extension(f: &ScalarField, half: Half) -> ScalarField {
    reflect_extension(f, half, 1.0)
}

/// Odd reflection: `g = f` on `half`, `g(x', x_n) = -f(x', -x_n)` on the other half.
pub fn odd_extension(f: &ScalarField, half: Half) -> ScalarField {
    reflect_extension(f, half, -1.0)
}

fn reflect_extension(f: &ScalarField, half: Half, parity: f64) -> ScalarField {
    let grid = &f.grid;
    let values = (0..grid.len())
        .map(|i| {
            if grid.half_of(i) == half {
                f.values[i]
            } else {
                parity * f.values[grid.mirror(i)]
            }
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

/// Partial derivative along `axis` by second-order differences: central in the
/// interior, one-sided at the box faces, and along the normal axis computed
/// separately in each half-space so no stencil crosses `x_n = 0`.
pub fn partial(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    let grid = &f.grid;
    let n = grid.points();
    if n < 4 {
        return Err(Error::GridTooCoarse(n));
    }
    if axis >= grid.dim() {
        return Err(Error::ShapeMismatch(format!("axis {axis} out of range")));
    }
    let h = grid.spacing();
    let stride = grid.stride(axis);
    let segments: Vec<(usize, usize)> = if axis == grid.dim() - 1 {
        vec![(0, n / 2), (n / 2, n)]
    } else {
        vec![(0, n)]
    };
    let mut out = vec![0.0; grid.len()];
    let v = &f.values;
    for base in 0..grid.len() {
        if (base / stride) % n != 0 {
            continue;
        }
        for &(lo, hi) in &segments {
            let at = |j: usize| v[base + j * stride];
            let len = hi - lo;
            for j in lo..hi {
                let d = if len == 2 {
                    (at(lo + 1) - at(lo)) / h
                } else if j == lo {
                    (-3.0 * at(j) + 4.0 * at(j + 1) - at(j + 2)) / (2.0 * h)
                } else if j == hi - 1 {
                    (3.0 * at(j) - 4.0 * at(j - 1) + at(j - 2)) / (2.0 * h)
                } else {
                    (at(j + 1) - at(j - 1)) / (2.0 * h)
                };
                out[base + j * stride] = d;
            }
        }
    }
    Ok(ScalarField::from_raw(grid, out))
}

pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    let components = (0..f.grid.dim()).map(|a| partial(f, a)).collect::<Result<Vec<_>>>()?;
    VectorField::new(components)
}

pub fn divergence(field: &VectorField) -> Result<ScalarField> {
    let mut acc = ScalarField::zeros(&field.grid);
    for (axis, c) in field.components.iter().enumerate() {
        acc = &acc + &partial(c, axis)?;
    }
    Ok(acc)
}

/// Accuracy of [`neumann_laplacian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilOrder {
    Second,
    Fourth,
}

/// Finite-difference Laplacian of each half-space restriction with reflecting
/// ghosts at `x_n = 0` and at the normal box faces, periodic along tangential
/// axes. This is the generator matching the reflected, periodized heat
/// semigroup of [`crate::semigroup`].
pub fn neumann_laplacian(f: &ScalarField, order: StencilOrder) -> Result<ScalarField> {
    laplacian(f, order, true)
}

/// Finite-difference Laplacian with periodic wrap along every axis; the
/// generator matching the periodized whole-space semigroup.
pub fn periodic_laplacian(f: &ScalarField, order: StencilOrder) -> Result<ScalarField> {
    laplacian(f, order, false)
}

fn laplacian(f: &ScalarField, order: StencilOrder, reflect: bool) -> Result<ScalarField> {
    let grid = &f.grid;
    let n = grid.points();
    if n < 4 {
        return Err(Error::GridTooCoarse(n));
    }
    let h2 = grid.spacing().powi(2);
    let v = &f.values;
    let dim = grid.dim();
    let mut out = vec![0.0; grid.len()];
    let ni = n as isize;
    // reflected neighbour index along the normal axis, staying within the half
    let normal_nb = |j: usize, off: isize| -> usize {
        let upper = j >= n / 2;
        let mut k = j as isize + off;
        if upper {
            if k < ni / 2 {
                k = ni - 1 - k;
            } else if k >= ni {
                k = 2 * ni - 1 - k;
            }
        } else if k >= ni / 2 {
            k = ni - 1 - k;
        } else if k < 0 {
            k = -1 - k;
        }
        k as usize
    };
    for (idx, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for axis in 0..dim {
            let stride = grid.stride(axis);
            let j = grid.axis_index(idx, axis);
            let base = idx - j * stride;
            let nb = |off: isize| -> f64 {
                let k = if reflect && axis == dim - 1 {
                    normal_nb(j, off)
                } else {
                    (j as isize + off).rem_euclid(ni) as usize
                };
                v[base + k * stride]
            };
            acc += match order {
                StencilOrder::Second => nb(-1) - 2.0 * v[idx] + nb(1),
                StencilOrder::Fourth => {
                    (-nb(-2) + 16.0 * nb(-1) - 30.0 * v[idx] + 16.0 * nb(1) - nb(2)) / 12.0
                }
            };
        }
        *o = acc / h2;
    }
    Ok(ScalarField::from_raw(grid, out))
}

/// Visit every node strictly inside the ball `|x - center| < radius`,
/// optionally restricted to one half-space.
pub fn for_each_in_ball(grid: &GridSpec, center: &[f64], radius: f64, half: Option<Half>, mut visit: impl FnMut(usize)) {
    let n = grid.points();
    let dim = grid.dim();
    let r2 = radius * radius;
    let mut tangential = vec![0usize; dim.saturating_sub(1)];
    let ranges: Vec<(usize, usize)> = (0..dim - 1).map(|a| axis_range(grid, center[a], radius)).collect();
    if ranges.iter().any(|&(lo, hi)| lo > hi) {
        return;
    }
    for (t, r) in tangential.iter_mut().zip(&ranges) {
        *t = r.0;
    }
    loop {
        let mut d2 = 0.0;
        let mut row = 0usize;
        for (a, &i) in tangential.iter().enumerate() {
            let dx = grid.coord(i) - center[a];
            d2 += dx * dx;
            row = row * n + i;
        }
        if d2 < r2 {
            let rho = (r2 - d2).sqrt();
            if let Some((lo, hi)) = normal_range(grid, center[dim - 1], rho, half) {
                for j in lo..=hi {
                    visit(row * n + j);
                }
            }
        }
        // odometer over tangential indices
        let mut a = tangential.len();
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            if tangential[a] < ranges[a].1 {
                tangential[a] += 1;
                break;
            }
            tangential[a] = ranges[a].0;
        }
    }
}

/// Inclusive index range of nodes whose coordinate lies in `(c - r, c + r)`;
/// `lo > hi` signals an empty range.
fn axis_range(grid: &GridSpec, c: f64, r: f64) -> (usize, usize) {
    let h = grid.spacing();
    let l = grid.half_width();
    let n = grid.points() as isize;
    let mut lo = ((c - r + l) / h - 0.5).floor() as isize + 1;
    let mut hi = ((c + r + l) / h - 0.5).ceil() as isize - 1;
    // guard against rounding at exact ties
    while lo > 0 && grid.coord((lo - 1) as usize) > c - r {
        lo -= 1;
    }
    while hi < n - 1 && hi >= -1 && grid.coord((hi + 1) as usize) < c + r {
        hi += 1;
    }
    lo = lo.max(0);
    hi = hi.min(n - 1);
    if lo > hi || hi < 0 {
        (1, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

fn normal_range(grid: &GridSpec, c: f64, rho: f64, half: Option<Half>) -> Option<(usize, usize)> {
    let (mut lo, mut hi) = axis_range(grid, c, rho);
    if lo > hi {
        return None;
    }
    if let Some(half) = half {
        let (a, b) = half.normal_range(grid.points());
        lo = lo.max(a);
        hi = hi.min(b - 1);
        if lo > hi {
            return None;
        }
    }
    Some((lo, hi))
}

/// Row-wise prefix sums of a sampled field, giving `O(r^{n-1})` ball sums.
#[derive(Debug, Clone)]
pub struct BallSums {
    grid: Grid,
    prefix: Vec<f64>,
}

impl BallSums {
    pub fn new(grid: &Grid, values: &[f64]) -> Self {
        let n = grid.points();
        let rows = grid.rows();
        let mut prefix = vec![0.0; rows * (n + 1)];
        for r in 0..rows {
            let mut acc = 0.0;
            for j in 0..n {
                acc += values[r * n + j];
                prefix[r * (n + 1) + j + 1] = acc;
            }
        }
        BallSums { grid: grid.clone(), prefix }
    }

    /// Sum of samples and number of nodes inside the ball (intersected with `half`).
    pub fn sum(&self, center: &[f64], radius: f64, half: Option<Half>) -> (f64, usize) {
        let grid = &self.grid;
        let n = grid.points();
        let dim = grid.dim();
        let r2 = radius * radius;
        let ranges: Vec<(usize, usize)> = (0..dim - 1).map(|a| axis_range(grid, center[a], radius)).collect();
        if ranges.iter().any(|&(lo, hi)| lo > hi) {
            return (0.0, 0);
        }
        let mut tangential: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        loop {
            let mut d2 = 0.0;
            let mut row = 0usize;
            for (a, &i) in tangential.iter().enumerate() {
                let dx = grid.coord(i) - center[a];
                d2 += dx * dx;
                row = row * n + i;
            }
            if d2 < r2 {
                if let Some((lo, hi)) = normal_range(grid, center[dim - 1], (r2 - d2).sqrt(), half) {
                    let base = row * (n + 1);
                    total += self.prefix[base + hi + 1] - self.prefix[base + lo];
                    count += hi + 1 - lo;
                }
            }
            let mut a = tangential.len();
            loop {
                if a == 0 {
                    return (total, count);
                }
                a -= 1;
                if tangential[a] < ranges[a].1 {
                    tangential[a] += 1;
                    break;
                }
                tangential[a] = ranges[a].0;
            }
        }
    }
}

/// Midpoint-cell time quadrature: level `t_k` owns the cell between the
/// midpoints to its neighbours (the first cell starts at 0, the last ends at
/// `t_M`). Returns `(k, weight)` for the cells clipped to `[0, upper]`.
pub fn time_weights(levels: &[f64], upper: f64) -> Result<Vec<(usize, f64)>> {
    if levels.is_empty() || levels[0] > upper * (1.0 + 1e-12) {
        return Err(Error::TimeGridTooCoarse(upper));
    }
    let m = levels.len();
    let mut out = Vec::new();
    for k in 0..m {
        let lo = if k == 0 { 0.0 } else { 0.5 * (levels[k - 1] + levels[k]) };
        let hi = if k + 1 == m { levels[k] } else { 0.5 * (levels[k] + levels[k + 1]) };
        if lo >= upper {
            break;
        }
        let w = hi.min(upper) - lo;
        if w > 0.0 {
            out.push((k, w));
        }
    }
    Ok(out)
}

/// `du/dt` at every level by second-order differences on the (non-uniform)
/// time levels; one-sided at the first and last level.
pub fn time_derivative(u: &SpaceTimeField) -> Result<SpaceTimeField> {
    let t = u.grid.time_levels();
    let m = t.len();
    if m < 3 {
        return Err(Error::InvalidGrid("time derivative needs at least 3 levels".into()));
    }
    // Lagrange derivative weights of the 3 nodes (a, b, c) evaluated at x
    let weights = |a: f64, b: f64, c: f64, x: f64| {
        (
            ((x - b) + (x - c)) / ((a - b) * (a - c)),
            ((x - a) + (x - c)) / ((b - a) * (b - c)),
            ((x - a) + (x - b)) / ((c - a) * (c - b)),
        )
    };
    let slices = (0..m)
        .map(|k| {
            let (i0, i1, i2) = if k == 0 {
                (0, 1, 2)
            } else if k == m - 1 {
                (m - 3, m - 2, m - 1)
            } else {
                (k - 1, k, k + 1)
            };
            let (w0, w1, w2) = weights(t[i0], t[i1], t[i2], t[k]);
            let (a, b, c) = (&u.slices[i0].values, &u.slices[i1].values, &u.slices[i2].values);
            let values = (0..u.grid.len()).map(|i| w0 * a[i] + w1 * b[i] + w2 * c[i]).collect();
            ScalarField::from_raw(&u.grid, values)
        })
        .collect();
    SpaceTimeField::new(&u.grid, slices)
}

/// Estimate of the one-sided normal derivative `d/dx_n` at `x_n = 0±` for
/// each row, by differentiating the quadratic through the first three nodes
/// of the half. Exact (zero) on fields that are even and quadratic in `x_n`.
pub fn interface_normal_derivative(f: &ScalarField, half: Half) -> Vec<f64> {
    let grid = &f.grid;
    let n = grid.points();
    let h = grid.spacing();
    (0..grid.rows())
        .map(|r| {
            let base = r * n;
            let v = |k: usize| match half {
                Half::Upper => f.values[base + n / 2 + k],
                Half::Lower => f.values[base + n / 2 - 1 - k],
            };
            half.sign() * (-2.0 * v(0) + 3.0 * v(1) - v(2)) / h
        })
        .collect()
}
