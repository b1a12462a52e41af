//! Run configuration: a single TOML file with an explicit seed.
//!
//! Parse and validation errors carry the line of the offending key.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::corpus::{Profile, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec};
use crate::norms::{BallFamilyConfig, ParabolicBallFamily};
use crate::solver::{OperatorOptions, SolverConfig};

/// Every runnable experiment, in listing order.
pub const EXPERIMENTS: [&str; 8] = [
    "kernel-checks",
    "norm-report",
    "trace-forward",
    "roundtrip",
    "equivalence-suite",
    "solver",
    "smallness-sweep",
    "splitting-diagnostics",
];

pub const REQUIRED_KEYS: [&str; 3] = ["experiment", "seed", "grid"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: Spanned<usize>,
    pub half_width: Spanned<f64>,
    pub points: Spanned<usize>,
    pub horizon: Spanned<f64>,
    pub levels: Spanned<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelChecksConfig {
    /// Points per axis for the `n = 1` and `n = 2` suites.
    pub points_1d: usize,
    pub points_2d: usize,
    pub samples: usize,
    /// Random fields and points per axis (`n = 1`) for the two-path check.
    pub two_path_fields: usize,
    pub two_path_points: usize,
}

impl Default for KernelChecksConfig {
    fn default() -> Self {
        KernelChecksConfig { points_1d: 256, points_2d: 128, samples: 64, two_path_fields: 50, two_path_points: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub scales: Vec<f64>,
    /// Geometric bisection steps between the last converging and first
    /// failing scale; 0 skips the threshold search.
    pub bisection_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { scales: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0], bisection_steps: 6 }
    }
}

fn default_data() -> Profile {
    Profile::HalfBump { center: 1.0, width: 0.25, amplitude: 0.03 }
}

fn default_embedding_constant() -> f64 {
    crate::characterization::DEFAULT_EMBEDDING_CONSTANT
}

/// Raw deserialized file; see [`RunConfig::parse`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Spanned<String>,
    seed: u64,
    grid: GridConfig,
    #[serde(default)]
    balls: Option<Spanned<BallFamilyConfig>>,
    #[serde(default)]
    solver: Option<Spanned<SolverConfig>>,
    #[serde(default)]
    operators: Option<OperatorOptions>,
    #[serde(default)]
    data: Option<Profile>,
    #[serde(default)]
    sweep: Option<SweepConfig>,
    #[serde(default)]
    kernel_checks: Option<KernelChecksConfig>,
    #[serde(default = "default_embedding_constant")]
    embedding_constant: f64,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub grid: GridConfig,
    pub balls: BallFamilyConfig,
    pub solver: SolverConfig,
    pub operators: OperatorOptions,
    /// Initial data for the solver, sweep and splitting experiments.
    pub data: Profile,
    pub sweep: SweepConfig,
    pub kernel_checks: KernelChecksConfig,
    pub embedding_constant: f64,
}

fn line_of(src: &str, span: Range<usize>) -> usize {
    src[..span.start.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn anchored(src: &str, span: Range<usize>, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {}: {msg}", line_of(src, span)))
}

impl RunConfig {
    /// Parse and validate. `seed` overrides the file's seed.
    pub fn parse(src: &str, seed: Option<u64>) -> Result<Self> {
        let table: toml::Table = src.parse().map_err(|e: toml::de::Error| parse_error(src, &e))?;
        let missing: Vec<&str> = REQUIRED_KEYS.iter().copied().filter(|k| !table.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "line 1: missing required keys: {} (required: {})",
                missing.join(", "),
                REQUIRED_KEYS.join(", ")
            )));
        }
        let raw: RawConfig = toml::from_str(src).map_err(|e| parse_error(src, &e))?;
        let experiment = raw.experiment.get_ref().clone();
        if !EXPERIMENTS.contains(&experiment.as_str()) {
            return Err(anchored(
                src,
                raw.experiment.span(),
                format!("unknown experiment '{experiment}'; valid options: {}", EXPERIMENTS.join(", ")),
            ));
        }
        let g = &raw.grid;
        let check = |ok: bool, span: Range<usize>, msg: &str| if ok { Ok(()) } else { Err(anchored(src, span, msg)) };
        check((1..=3).contains(g.dim.get_ref()), g.dim.span(), "grid.dim must be 1, 2 or 3")?;
        check(
            *g.points.get_ref() >= 4 && g.points.get_ref() % 2 == 0,
            g.points.span(),
            "grid.points must be even and at least 4",
        )?;
        check(*g.half_width.get_ref() > 0.0, g.half_width.span(), "grid.half_width must be positive")?;
        check(*g.horizon.get_ref() > 0.0, g.horizon.span(), "grid.horizon must be positive")?;
        check(*g.levels.get_ref() >= 3, g.levels.span(), "grid.levels must be at least 3")?;
        let cfg = RunConfig {
            experiment,
            seed: seed.unwrap_or(raw.seed),
            grid: raw.grid.clone(),
            balls: raw.balls.as_ref().map(|b| b.get_ref().clone()).unwrap_or_default(),
            solver: raw.solver.as_ref().map(|s| s.get_ref().clone()).unwrap_or_default(),
            operators: raw.operators.unwrap_or_default(),
            data: raw.data.unwrap_or_else(default_data),
            sweep: raw.sweep.unwrap_or_default(),
            kernel_checks: raw.kernel_checks.unwrap_or_default(),
            embedding_constant: raw.embedding_constant,
        };
        let grid = cfg.build_grid().map_err(|e| anchored(src, 0..0, e))?;
        if let Err(e) = cfg.build_balls(&grid) {
            let span = raw.balls.as_ref().map_or(0..0, |b| b.span());
            return Err(anchored(src, span, e));
        }
        if let Err(e) = cfg.solver.validate(grid.dim()) {
            let span = raw.solver.as_ref().map_or(0..0, |s| s.span());
            return Err(anchored(src, span, e));
        }
        if cfg.sweep.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("sweep.scales must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path, seed: Option<u64>) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src, seed)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let g = &self.grid;
        GridSpec::graded(
            *g.dim.get_ref(),
            *g.half_width.get_ref(),
            *g.points.get_ref(),
            *g.horizon.get_ref(),
            *g.levels.get_ref(),
        )
    }

    pub fn build_balls(&self, grid: &GridSpec) -> Result<ParabolicBallFamily> {
        ParabolicBallFamily::generate(grid, &self.balls)
    }
}

fn parse_error(src: &str, e: &toml::de::Error) -> Error {
    match e.span() {
        Some(span) => anchored(src, span, e.message()),
        None => Error::Config(e.message().to_string()),
    }
}

/// A configuration with every section spelled out, valid for `experiment`.
pub fn default_config_text(experiment: &str) -> String {
    format!(
        "experiment = \"{experiment}\"\nseed = {DEFAULT_SEED}\n\n[grid]\ndim = 1\nhalf_width = 4.0\npoints = 128\nhorizon = 1.0\nlevels = 32\n\n[balls]\nmin_radius = 0.25\nrefinement = 0\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for e in EXPERIMENTS {
            let cfg = RunConfig::parse(&default_config_text(e), None).unwrap();
            assert_eq!(cfg.experiment, e);
            assert_eq!(cfg.seed, DEFAULT_SEED);
        }
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let Error::Config(msg) = RunConfig::parse("", None).unwrap_err() else { panic!() };
        for k in REQUIRED_KEYS {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn unknown_experiment_names_options() {
        let src = default_config_text("kernel-checks").replace("kernel-checks", "nope");
        let Error::Config(msg) = RunConfig::parse(&src, None).unwrap_err() else { panic!() };
        assert!(msg.starts_with("line 1:"), "{msg}");
        for e in EXPERIMENTS {
            assert!(msg.contains(e));
        }
    }

    #[test]
    fn errors_point_at_the_line() {
        let src = default_config_text("solver").replace("points = 128", "points = 127");
        let Error::Config(msg) = RunConfig::parse(&src, None).unwrap_err() else { panic!() };
        assert!(msg.starts_with("line 7:"), "{msg}");
        let src = default_config_text("solver").replace("horizon = 1.0", "horizon = \"x\"");
        let Error::Config(msg) = RunConfig::parse(&src, None).unwrap_err() else { panic!() };
        assert!(msg.starts_with("line 8:"), "{msg}");
        let src = format!("{}\n[solver]\nconvergence_tol = 0.0\n", default_config_text("solver"));
        assert!(RunConfig::parse(&src, None).is_err());
    }

    #[test]
    fn seed_override_wins() {
        let cfg = RunConfig::parse(&default_config_text("roundtrip"), Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
    }
}
