//! Experiment runners behind the `nbmo` binary.
//!
//! Every experiment returns [`Artifacts`]: CSV tables with the fixed leading
//! columns `experiment, input_id, grid, ball_family` and trailing `pass`,
//! JSON documents and field snapshots. Tables depend only on the
//! configuration and seed; the manifest carries the wall-clock timestamp.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::characterization::{
    band_constant, divergence_embedding, extension_equivalence_suite, trace_forward, trace_roundtrip, ChainRow,
    EmbeddingOptions,
};
use crate::config::RunConfig;
use crate::corpus::{self, CorpusEntry, Profile};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridDescriptor, GridSpec, ScalarField, VectorField};
use crate::kernel::{kernel_checks, KernelCheckConfig, KernelVariant};
use crate::norms::{
    bmo_inv_neumann_norm, BallFamilyConfig, BallFamilyDescriptor, NormReport, ParabolicBallFamily,
};
use crate::semigroup::{build_extension, neumann_extend, neumann_extend_direct};
use crate::snapshot::write_snapshot;
use crate::solver::{
    convergence_threshold, duhamel_bounds, nonlinearity, picard_solve, smallness_sweep, split_diagnostics, Verdict,
};

/// Version of the CSV / JSON layout written by [`write_artifacts`].
pub const SCHEMA_VERSION: u32 = 1;

/// Relative change allowed in a norm when `L` doubles at fixed `h`.
pub const L_DOUBLING_TOL: f64 = 0.05;
/// Relative change allowed in the trace band constant under refinement.
pub const BAND_STABILITY_TOL: f64 = 0.10;
/// Relative change allowed in the Duhamel bound constants under refinement.
pub const BOUND_STABILITY_TOL: f64 = 0.15;
/// Spread `max / min - 1` allowed in `‖f_λ‖_{BMO^{-1}_N}` over `λ`.
pub const SCALING_TOL: f64 = 0.05;
/// Relative reconstruction defect allowed in the splitting of `A`.
pub const SPLIT_TOL: f64 = 1e-3;
/// Relative gap allowed between the spectral and direct semigroup paths.
pub const TWO_PATH_TOL: f64 = 1e-8;
/// Semigroup-law defect allowed in the round trip, relative to `max |f|`.
pub const ROUNDTRIP_TOL: f64 = 1e-6;
/// Slack multiplier on the measured refinement defect of each chain.
pub const CHAIN_SLACK_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Missing, Value::Num)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.into())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // shortest round-trip digits in either notation
            Value::Num(v) if *v != 0.0 && v.is_finite() && !(1e-4..1e15).contains(&v.abs()) => write!(f, "{v:e}"),
            Value::Num(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
            Value::Missing => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub input_id: String,
    pub grid: String,
    pub ball_family: String,
    pub values: Vec<Value>,
    pub pass: bool,
}

/// One CSV file. `columns` names the value columns only.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(name: &str, experiment: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            experiment: experiment.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, input_id: impl Into<String>, grid: &str, balls: &str, values: Vec<Value>, pass: bool) {
        assert_eq!(values.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(Row { input_id: input_id.into(), grid: grid.into(), ball_family: balls.into(), values, pass });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Position of a value column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["experiment", "input_id", "grid", "ball_family"];
        header.extend(self.columns.iter().map(String::as_str));
        header.push("pass");
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![self.experiment.clone(), r.input_id.clone(), r.grid.clone(), r.ball_family.clone()];
            rec.extend(r.values.iter().map(Value::to_string));
            rec.push(r.pass.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Everything one run produces besides the manifest.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub json: Vec<(String, serde_json::Value)>,
    /// `(file stem, field, slice time)`.
    pub snapshots: Vec<(String, ScalarField, f64)>,
}

impl Artifacts {
    pub fn passed(&self) -> bool {
        self.tables.iter().all(Table::passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
        self.json.push((name.into(), v));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub crate_version: String,
    /// Sign of the image term in the kernel in force.
    pub kernel_variant: String,
    pub config_sha256: String,
    pub seed: u64,
    pub grid: GridDescriptor,
    pub ball_family: BallFamilyDescriptor,
    pub created_utc: String,
    pub passed: bool,
    pub files: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Size the global worker pool; call at most once, before any run.
pub fn configure_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("threads: {e}")))
}

/// Write `artifacts` and the manifest into a fresh timestamped directory
/// under `out_root`; returns that directory.
pub fn write_artifacts(cfg: &RunConfig, config_src: &str, artifacts: &Artifacts, out_root: &Path) -> Result<PathBuf> {
    let now = chrono::Utc::now();
    let stamp = now.format("%Y%m%dT%H%M%S%.3fZ");
    fs::create_dir_all(out_root)?;
    let mut dir = out_root.join(format!("{}-{stamp}", cfg.experiment));
    let mut k = 1;
    while dir.exists() {
        k += 1;
        dir = out_root.join(format!("{}-{stamp}-{k}", cfg.experiment));
    }
    fs::create_dir(&dir)?;
    let mut files = Vec::new();
    for t in &artifacts.tables {
        let name = format!("{}.csv", t.name);
        t.write_csv(fs::File::create(dir.join(&name))?)?;
        files.push(name);
    }
    for (stem, v) in &artifacts.json {
        let name = format!("{stem}.json");
        let text = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join(&name), text + "\n")?;
        files.push(name);
    }
    for (stem, f, t) in &artifacts.snapshots {
        let name = format!("{stem}.snapshot.csv");
        write_snapshot(std::io::BufWriter::new(fs::File::create(dir.join(&name))?), f, *t)?;
        files.push(name);
    }
    let grid = cfg.build_grid()?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment.clone(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        kernel_variant: KernelVariant::Neumann.name().into(),
        config_sha256: sha256_hex(config_src.as_bytes()),
        seed: cfg.seed,
        grid: grid.descriptor(),
        ball_family: cfg.build_balls(&grid)?.descriptor().clone(),
        created_utc: now.to_rfc3339(),
        passed: artifacts.passed(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(dir)
}

/// Run the experiment named in `cfg`.
pub fn run(cfg: &RunConfig) -> Result<Artifacts> {
    let ctx = Context::new(cfg)?;
    match cfg.experiment.as_str() {
        "kernel-checks" => kernel_suite(&ctx),
        "norm-report" => norm_report(&ctx),
        "trace-forward" => trace_band(&ctx),
        "roundtrip" => roundtrip(&ctx),
        "equivalence-suite" => equivalence(&ctx),
        "solver" => solver(&ctx),
        "smallness-sweep" => sweep(&ctx),
        "splitting-diagnostics" => splitting(&ctx),
        other => Err(Error::Config(format!("unknown experiment '{other}'"))),
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    grid: Grid,
    balls: ParabolicBallFamily,
    corpus: Vec<CorpusEntry>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let grid = cfg.build_grid()?;
        let balls = cfg.build_balls(&grid)?;
        Ok(Context { cfg, grid, balls, corpus: corpus::corpus(cfg.seed)? })
    }

    fn name(&self) -> &str {
        &self.cfg.experiment
    }

    fn labels(&self) -> (String, String) {
        (self.grid.descriptor().to_string(), self.balls.descriptor().to_string())
    }

    /// Same `L`, `T` and time levels with `factor` times the points per axis.
    fn refined_grid(&self, factor: usize) -> Result<Grid> {
        let g = &self.grid;
        GridSpec::new(g.dim(), g.half_width(), factor * g.points(), g.time_levels().to_vec())
    }

    fn data(&self) -> Result<ScalarField> {
        sample_profile(&self.cfg.data, &self.grid)
    }
}

fn sample_profile(p: &Profile, grid: &Grid) -> Result<ScalarField> {
    let n = grid.dim();
    ScalarField::from_fn(grid, |x| p.eval(x[n - 1]))
}

fn rel_change(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

fn labels_of(grid: &Grid, balls: &ParabolicBallFamily) -> (String, String) {
    (grid.descriptor().to_string(), balls.descriptor().to_string())
}

fn kernel_suite(ctx: &Context) -> Result<Artifacts> {
    let kc = &ctx.cfg.kernel_checks;
    let mut table = Table::new("kernel_checks", ctx.name(), &["dim", "value", "threshold", "expect_violation"]);
    let mut all = Vec::new();
    for (dim, points) in [(1, kc.points_1d), (2, kc.points_2d)] {
        let check_cfg = KernelCheckConfig {
            dim,
            points,
            half_width: ctx.grid.half_width(),
            samples: kc.samples,
            seed: ctx.cfg.seed,
        };
        let grid = GridSpec::new(dim, check_cfg.half_width, points, vec![1.0])?.descriptor().to_string();
        for c in kernel_checks(&check_cfg)? {
            let id = format!("{}:{}", c.variant.name(), c.name);
            let vals = vec![c.dim.into(), c.value.into(), c.threshold.into(), c.expect_violation.into()];
            table.push(id, &grid, "-", vals, c.pass);
            all.push(c);
        }
    }

    let mut two_path = Table::new("two_path", ctx.name(), &["t", "relative_gap", "threshold"]);
    let grid = GridSpec::graded(1, ctx.grid.half_width(), kc.two_path_points, ctx.grid.horizon(), 1)?;
    let label = grid.descriptor().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let (t_lo, t_hi) = (ctx.grid.time_levels()[0], ctx.grid.horizon());
    let inputs: Vec<(ScalarField, f64)> = (0..kc.two_path_fields)
        .map(|_| {
            let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            Ok((ScalarField::new(&grid, v)?, rng.random_range(t_lo..=t_hi)))
        })
        .collect::<Result<_>>()?;
    let gaps = inputs
        .par_iter()
        .map(|(f, t)| -> Result<f64> {
            let direct = neumann_extend_direct(f, *t)?;
            Ok((&neumann_extend(f, *t)? - &direct).max_abs() / direct.max_abs())
        })
        .collect::<Result<Vec<_>>>()?;
    for (k, ((_, t), gap)) in inputs.iter().zip(gaps).enumerate() {
        two_path.push(format!("noise{k}"), &label, "-", vec![(*t).into(), gap.into(), TWO_PATH_TOL.into()], gap <= TWO_PATH_TOL);
    }

    let mut out = Artifacts { tables: vec![table, two_path], ..Default::default() };
    out.json("kernel_checks", &all)?;
    Ok(out)
}

fn norm_report(ctx: &Context) -> Result<Artifacts> {
    const COLS: [&str; 11] = [
        "bmo_N",
        "tmo",
        "tent_inf2",
        "tent_inf1",
        "tent_12",
        "bmo_inv_N",
        "weighted_linf",
        "path_eps",
        "hardy",
        "square_fn_l1",
        "L_doubling_change",
    ];
    // Doubling L at fixed h keeps the ball family by pinning its window.
    let g = &ctx.grid;
    let wide = GridSpec::new(g.dim(), 2.0 * g.half_width(), 2 * g.points(), g.time_levels().to_vec())?;
    let wide_cfg = BallFamilyConfig { window: Some(ctx.balls.descriptor().window), ..ctx.cfg.balls.clone() };
    let wide_balls = ParabolicBallFamily::generate(&wide, &wide_cfg)?;
    let (grid_label, ball_label) = ctx.labels();
    let mut table = Table::new("norms", ctx.name(), &COLS);
    let mut reports = Vec::new();
    for e in &ctx.corpus {
        let r = NormReport::compute(&e.sample(&ctx.grid)?, &ctx.balls)?;
        let w = NormReport::compute(&e.sample(&wide)?, &wide_balls)?;
        let change = [
            rel_change(r.bmo_n, w.bmo_n),
            rel_change(r.tmo, w.tmo),
            rel_change(r.bmo_inv_n, w.bmo_inv_n),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let vals = [
            r.bmo_n,
            r.tmo,
            r.tent_inf2,
            r.tent_inf1,
            r.tent_12,
            r.bmo_inv_n,
            r.weighted_linf,
            r.path_eps,
            r.hardy,
            r.square_fn_l1,
            change,
        ];
        table.push(&e.id, &grid_label, &ball_label, vals.map(Value::from).to_vec(), change <= L_DOUBLING_TOL);
        reports.push((e.id.clone(), r));
    }
    let mut out = Artifacts { tables: vec![table], ..Default::default() };
    out.json("norm_reports", &reports)?;
    Ok(out)
}

fn band_over(corpus: &[CorpusEntry], grid: &Grid, balls: &ParabolicBallFamily) -> Result<(Vec<(String, f64, f64, Option<f64>)>, Option<f64>)> {
    let mut rows = Vec::new();
    for e in corpus {
        let r = trace_forward(&e.sample(grid)?, balls)?;
        rows.push((e.id.clone(), r.tmo, r.bmo, r.ratio));
    }
    let c = band_constant(&rows.iter().map(|r| r.3).collect::<Vec<_>>());
    Ok((rows, c))
}

fn trace_band(ctx: &Context) -> Result<Artifacts> {
    let mut table = Table::new("trace_forward", ctx.name(), &["tmo", "bmo", "ratio", "band", "band_change"]);
    let (rows, base) = band_over(&ctx.corpus, &ctx.grid, &ctx.balls)?;
    let (g, b) = ctx.labels();
    for (id, tmo, bmo, ratio) in rows {
        let pass = ratio.is_none_or(f64::is_finite);
        table.push(id, &g, &b, vec![tmo.into(), bmo.into(), ratio.into(), Value::Missing, Value::Missing], pass);
    }
    let m = Value::Missing;
    let base_ok = base.is_some_and(f64::is_finite);
    table.push("band", &g, &b, vec![m.clone(), m.clone(), m.clone(), base.into(), m.clone()], base_ok);

    let fine = ctx.refined_grid(2)?;
    let fine_balls = ctx.cfg.build_balls(&fine)?;
    let refined_balls = ParabolicBallFamily::generate(&ctx.grid, &ctx.cfg.balls.refined())?;
    for (id, grid, balls) in [("band_2N", &fine, &fine_balls), ("band_refined_balls", &ctx.grid, &refined_balls)] {
        let (_, c) = band_over(&ctx.corpus, grid, balls)?;
        let change = base.zip(c).map(|(a, b)| rel_change(a, b));
        let (gl, bl) = labels_of(grid, balls);
        let pass = change.is_some_and(|d| d < BAND_STABILITY_TOL);
        table.push(id, &gl, &bl, vec![m.clone(), m.clone(), m.clone(), c.into(), change.into()], pass);
    }
    Ok(Artifacts { tables: vec![table], ..Default::default() })
}

fn roundtrip(ctx: &Context) -> Result<Artifacts> {
    let cols = ["recovered_trace_error", "norm_defect", "neumann_defect", "semigroup_defect", "threshold"];
    let mut table = Table::new("roundtrip", ctx.name(), &cols);
    let (g, b) = ctx.labels();
    let mut all = Vec::new();
    for e in &ctx.corpus {
        let f = e.sample(&ctx.grid)?;
        let r = trace_roundtrip(&f, &ctx.balls)?;
        let threshold = ROUNDTRIP_TOL * f.max_abs().max(1.0);
        let vals = vec![
            r.recovered_trace_error.into(),
            r.norm_defect.into(),
            r.neumann_defect.into(),
            r.semigroup_defect.into(),
            threshold.into(),
        ];
        table.push(&e.id, &g, &b, vals, r.semigroup_defect <= threshold);
        all.push((e.id.clone(), r));
    }
    let mut out = Artifacts { tables: vec![table], ..Default::default() };
    out.json("roundtrip", &all)?;
    Ok(out)
}

/// Refinement defect of one chain row: the gap between the two resolutions
/// propagated through the chain constants.
fn chain_defect(a: &ChainRow, b: &ChainRow) -> f64 {
    let k = if a.upper.is_finite() { a.upper.max(a.lower) } else { a.lower };
    (a.parts() - b.parts()).abs() + k * (a.norm - b.norm).abs()
}

/// `f(x) = d/dx exp(-(x - c)^2 / (2 w^2))` in the normal coordinate, on a
/// grid and ball family wide enough for `λ ∈ {1/2, 1, 2}`.
pub fn scaling_probe(points: usize) -> Result<Vec<(f64, f64)>> {
    let (c, w) = (1.0, 0.3);
    let grid = GridSpec::graded(1, 8.0, points, 4.0, 32)?;
    let balls = ParabolicBallFamily::generate(
        &grid,
        &BallFamilyConfig { min_radius: Some(0.125), max_radius: Some(2.0), ..Default::default() },
    )?;
    [0.5, 1.0, 2.0]
        .into_iter()
        .map(|lam| {
            let f = ScalarField::from_fn(&grid, |x| {
                let y = lam * x[0];
                lam * (-(y - c) / (w * w)) * (-(y - c).powi(2) / (2.0 * w * w)).exp()
            })?;
            Ok((lam, bmo_inv_neumann_norm(&f, &balls)?))
        })
        .collect()
}

fn equivalence(ctx: &Context) -> Result<Artifacts> {
    let cols = ["norm", "plus", "minus", "lower", "upper", "lower_margin", "upper_margin", "slack"];
    let mut chains = Table::new("chains", ctx.name(), &cols);
    let (g, b) = ctx.labels();
    let fine = ctx.refined_grid(2)?;
    let fine_balls = ctx.cfg.build_balls(&fine)?;
    for e in &ctx.corpus {
        let rows = extension_equivalence_suite(&e.sample(&ctx.grid)?, &ctx.balls)?;
        let fine_rows = extension_equivalence_suite(&e.sample(&fine)?, &fine_balls)?;
        for (r, fr) in rows.iter().zip(&fine_rows) {
            let slack = CHAIN_SLACK_FACTOR * chain_defect(r, fr);
            let vals = [r.norm, r.plus, r.minus, r.lower, r.upper, r.lower_margin(), r.upper_margin(), slack];
            chains.push(format!("{}:{}", e.id, r.name), &g, &b, vals.map(Value::from).to_vec(), r.holds(slack));
        }
    }

    let mut embedding = Table::new("embedding", ctx.name(), &["lhs", "rhs", "constant", "slack"]);
    let opts = EmbeddingOptions { constant: ctx.cfg.embedding_constant, ..Default::default() };
    let mut normal = vec![0.0; ctx.grid.dim()];
    normal[ctx.grid.dim() - 1] = 1.0;
    for e in &ctx.corpus {
        let field = VectorField::directed(&e.sample(&ctx.grid)?, &normal)?;
        let d = divergence_embedding(&field, &ctx.balls, &opts)?;
        embedding.push(&e.id, &g, &b, vec![d.lhs.into(), d.rhs.into(), d.constant.into(), d.slack.into()], d.pass);
    }

    let mut scaling = Table::new("scaling", ctx.name(), &["lambda", "bmo_inv_N", "spread"]);
    let probe = scaling_probe(256)?;
    let lo = probe.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = probe.iter().map(|p| p.1).fold(0.0, f64::max);
    let spread = hi / lo - 1.0;
    for (lam, v) in probe {
        scaling.push(format!("dgauss_lambda{lam}"), "n1_L8_N256_M32_T4", "r0.125-2", vec![lam.into(), v.into(), spread.into()], spread <= SCALING_TOL);
    }
    Ok(Artifacts { tables: vec![chains, embedding, scaling], ..Default::default() })
}

fn solver(ctx: &Context) -> Result<Artifacts> {
    let u0 = ctx.data()?;
    let cfg = &ctx.cfg.solver;
    let out = picard_solve(&u0, &ctx.balls, cfg)?;
    let d = &out.diagnostics;
    let converged = d.verdict == Verdict::Converged;
    let (g, b) = ctx.labels();
    let mut iters = Table::new("iterations", ctx.name(), &["iteration", "norm", "increment", "ratio"]);
    for r in &d.iterations {
        let vals = vec![r.iteration.into(), r.norm.into(), r.increment.into(), r.ratio.into()];
        iters.push("data", &g, &b, vals, converged);
    }
    let cols = ["data_scale", "data_bmo_inv_N", "verdict", "iterations", "contraction", "max_ratio", "residual"];
    let mut summary = Table::new("summary", ctx.name(), &cols);
    let data_norm = bmo_inv_neumann_norm(&u0.scale(cfg.data_scale), &ctx.balls)?;
    let vals = vec![
        cfg.data_scale.into(),
        data_norm.into(),
        d.verdict.name().into(),
        d.iterations.len().into(),
        d.contraction_estimate.into(),
        d.max_ratio.into(),
        d.residual.into(),
    ];
    summary.push("data", &g, &b, vals, converged);
    let mut art = Artifacts { tables: vec![summary, iters], ..Default::default() };
    art.json("diagnostics", d)?;
    art.snapshots.push(("data".into(), u0.scale(cfg.data_scale), 0.0));
    let last = out.u.slices().len() - 1;
    art.snapshots.push(("solution".into(), out.u.slice(last).clone(), out.u.time(last)));
    Ok(art)
}

fn sweep(ctx: &Context) -> Result<Artifacts> {
    let u0 = ctx.data()?;
    let scales = &ctx.cfg.sweep.scales;
    let rows = smallness_sweep(&u0, &ctx.balls, &ctx.cfg.solver, scales)?;
    let (g, b) = ctx.labels();
    let cols = ["scale", "verdict", "iterations", "contraction", "contraction_per_scale", "solution_norm"];
    let mut table = Table::new("sweep", ctx.name(), &cols);
    let mut failed = false;
    let mut prev: Option<f64> = None;
    for r in &rows {
        let converged = r.verdict == Verdict::Converged;
        // convergence may only fail above the threshold, and the contraction
        // column must not decrease while it is defined
        let monotone = match (prev, r.contraction) {
            (Some(p), Some(c)) => c >= p,
            _ => true,
        };
        let pass = !(converged && failed) && monotone;
        failed |= !converged;
        if r.contraction.is_some() {
            prev = r.contraction;
        }
        let vals = vec![
            r.scale.into(),
            r.verdict.name().into(),
            r.iterations.into(),
            r.contraction.into(),
            r.contraction.map(|c| c / r.scale).into(),
            r.solution_norm.into(),
        ];
        table.push(format!("scale{}", r.scale), &g, &b, vals, pass);
    }
    let last_ok = rows.iter().take_while(|r| r.verdict == Verdict::Converged).last().map(|r| r.scale);
    let first_bad = rows.iter().find(|r| r.verdict != Verdict::Converged).map(|r| r.scale);
    if let (Some(lo), Some(hi), steps) = (last_ok, first_bad, ctx.cfg.sweep.bisection_steps) {
        if steps > 0 {
            let th = convergence_threshold(&u0, &ctx.balls, &ctx.cfg.solver, lo, hi, steps)?;
            let m = Value::Missing;
            let vals = vec![th.into(), "threshold".into(), m.clone(), m.clone(), m.clone(), m];
            table.push("threshold", &g, &b, vals, th.is_some());
        }
    }
    let mut out = Artifacts { tables: vec![table], ..Default::default() };
    out.json("sweep", &rows)?;
    Ok(out)
}

fn splitting(ctx: &Context) -> Result<Artifacts> {
    let (g, b) = ctx.labels();
    let cols = ["a_norm", "a1_norm", "a2_norm", "a3_norm", "defect", "relative", "threshold"];
    let mut split = Table::new("splitting", ctx.name(), &cols);
    let direction = ctx.cfg.solver.direction_for(ctx.grid.dim())?;
    let alpha_of = |e: &CorpusEntry, grid: &Grid| -> Result<_> {
        nonlinearity(&build_extension(&e.sample(grid)?)?, &direction)
    };
    let mut diags = Vec::new();
    for e in ctx.corpus.iter().filter(|e| matches!(e.profile, Profile::HalfBump { .. })) {
        let d = split_diagnostics(&alpha_of(e, &ctx.grid)?, &ctx.balls, &ctx.cfg.operators)?;
        let vals = [d.a_norm, d.a1_norm, d.a2_norm, d.a3_norm, d.defect, d.relative, SPLIT_TOL];
        split.push(&e.id, &g, &b, vals.map(Value::from).to_vec(), d.relative < SPLIT_TOL);
        diags.push((e.id.clone(), d));
    }

    let cols = ["pointwise_constant", "carleson_constant", "pointwise_change", "carleson_change"];
    let mut bounds = Table::new("bounds", ctx.name(), &cols);
    let fine = ctx.refined_grid(2)?;
    let fine_balls = ctx.cfg.build_balls(&fine)?;
    let duhamel = &ctx.cfg.operators.duhamel;
    let mut worst = [[0.0_f64; 2]; 2];
    for e in &ctx.corpus {
        let coarse = duhamel_bounds(&alpha_of(e, &ctx.grid)?, &ctx.balls, duhamel)?;
        let fine_b = duhamel_bounds(&alpha_of(e, &fine)?, &fine_balls, duhamel)?;
        let pc = rel_change(coarse.pointwise_constant, fine_b.pointwise_constant);
        let cc = rel_change(coarse.carleson_constant, fine_b.carleson_constant);
        let vals = [coarse.pointwise_constant, coarse.carleson_constant, pc, cc];
        let finite = vals.iter().all(|v| v.is_finite());
        bounds.push(&e.id, &g, &b, vals.map(Value::from).to_vec(), finite);
        worst[0][0] = worst[0][0].max(coarse.pointwise_constant);
        worst[0][1] = worst[0][1].max(coarse.carleson_constant);
        worst[1][0] = worst[1][0].max(fine_b.pointwise_constant);
        worst[1][1] = worst[1][1].max(fine_b.carleson_constant);
    }
    let pc = rel_change(worst[0][0], worst[1][0]);
    let cc = rel_change(worst[0][1], worst[1][1]);
    let finite = worst.iter().flatten().all(|v| v.is_finite());
    let pass = finite && pc < BOUND_STABILITY_TOL && cc < BOUND_STABILITY_TOL;
    bounds.push("corpus_max", &g, &b, vec![worst[0][0].into(), worst[0][1].into(), pc.into(), cc.into()], pass);

    let mut out = Artifacts { tables: vec![split, bounds], ..Default::default() };
    out.json("splitting", &diags)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config_text;

    #[test]
    fn value_formatting_round_trips() {
        for v in [0.0, 1.5, -2.25e-7, 3.0e20, 0.1 + 0.2, f64::INFINITY] {
            let s = Value::Num(v).to_string();
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(Value::Missing.to_string(), "");
        assert_eq!(Value::from(true).to_string(), "true");
    }

    #[test]
    fn table_has_fixed_columns() {
        let mut t = Table::new("x", "demo", &["a"]);
        t.push("id", "g", "b", vec![1.0.into()], true);
        assert_eq!(t.to_csv_string().unwrap(), "experiment,input_id,grid,ball_family,a,pass\ndemo,id,g,b,1,true\n");
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn zero_data_solver_converges_at_once() {
        let src = format!("{}\n[solver]\ndata_scale = 0.0\n", default_config_text("solver"));
        let cfg = RunConfig::parse(&src, None).unwrap();
        let out = run(&cfg).unwrap();
        let s = out.table("summary").unwrap();
        assert!(s.passed());
        assert_eq!(s.rows[0].values[s.column("iterations").unwrap()], Value::Int(1));
    }

    #[test]
    fn artifacts_land_in_fresh_directories() {
        let src = default_config_text("roundtrip");
        let cfg = RunConfig::parse(&src, None).unwrap();
        let art = Artifacts { tables: vec![Table::new("t", "roundtrip", &[])], ..Default::default() };
        let root = tempfile::tempdir().unwrap();
        let a = write_artifacts(&cfg, &src, &art, root.path()).unwrap();
        let b = write_artifacts(&cfg, &src, &art, root.path()).unwrap();
        assert_ne!(a, b);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["kernel_variant"], "neumann");
        assert_eq!(manifest["config_sha256"], sha256_hex(src.as_bytes()));
        assert!(a.join("t.csv").exists());
    }
}
