//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use neumann_bmo::characterization::{
    band_constant, divergence_embedding, extension_equivalence_suite, trace_forward, EmbeddingOptions,
    DEFAULT_EMBEDDING_CONSTANT,
};
use neumann_bmo::config::{default_config_text, RunConfig};
use neumann_bmo::corpus::{self, CorpusEntry, Profile, DEFAULT_SEED};
use neumann_bmo::experiments::{self, scaling_probe};
use neumann_bmo::grid::{Grid, GridSpec, ScalarField, VectorField};
use neumann_bmo::kernel::{kernel_checks, KernelCheckConfig};
use neumann_bmo::norms::{bmo_inv_neumann_norm, path_norm, BallFamilyConfig, ParabolicBallFamily};
use neumann_bmo::semigroup::{build_extension, neumann_extend, neumann_extend_direct, DuhamelOptions};
use neumann_bmo::solver::{
    convergence_threshold, duhamel_bounds, nonlinearity, picard_solve, smallness_sweep, split_diagnostics,
    OperatorOptions, SolverConfig, Verdict,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let e = start.elapsed();
    ensure(e < limit, format!("runtime {e:.1?} exceeds {limit:?}"))
}

fn grid1(points: usize) -> Grid {
    GridSpec::graded(1, 4.0, points, 1.0, 32).unwrap()
}

fn family(g: &Grid, refinement: u32) -> ParabolicBallFamily {
    let cfg = BallFamilyConfig { min_radius: Some(0.25), refinement, ..Default::default() };
    ParabolicBallFamily::generate(g, &cfg).unwrap()
}

fn shipped() -> Vec<CorpusEntry> {
    corpus::shipped().unwrap()
}

fn kernel_suite() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    for (dim, points) in [(1, 256), (2, 128)] {
        rows.extend(kernel_checks(&KernelCheckConfig::new(dim, points, DEFAULT_SEED)).map_err(|e| e.to_string())?);
    }
    let failing: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| format!("{}/{}d", r.name, r.dim)).collect();
    ensure(failing.is_empty(), format!("failing rows: {failing:?}"))?;
    let demos = rows.iter().filter(|r| r.expect_violation).count();
    ensure(demos >= 4, format!("expected Dirichlet violation rows in both dimensions, found {demos}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("{} rows ({demos} Dirichlet violations shown) in {:.1?}", rows.len(), start.elapsed()))
}

fn two_path() -> Outcome {
    let start = Instant::now();
    let g = grid1(128);
    let mut rng = common::rng(DEFAULT_SEED);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let f = common::noise_field(&g, &mut rng);
        let t = rand::Rng::random_range(&mut rng, g.time_levels()[0]..=1.0);
        let direct = neumann_extend_direct(&f, t).unwrap();
        worst = worst.max((&neumann_extend(&f, t).unwrap() - &direct).max_abs() / direct.max_abs());
    }
    ensure(worst <= 1e-8, format!("relative gap {worst:e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("max relative gap {worst:.2e} over 50 fields"))
}

fn band(g: &Grid, balls: &ParabolicBallFamily) -> f64 {
    let ratios: Vec<Option<f64>> =
        shipped().iter().map(|e| trace_forward(&e.sample(g).unwrap(), balls).unwrap().ratio).collect();
    band_constant(&ratios).unwrap()
}

fn trace_band() -> Outcome {
    let start = Instant::now();
    let (g, g2) = (grid1(128), grid1(256));
    let c = band(&g, &family(&g, 0));
    let c2 = band(&g2, &family(&g2, 0));
    let cr = band(&g, &family(&g, 1));
    let (d2, dr) = (common::rel_change(c, c2), common::rel_change(c, cr));
    ensure(c.is_finite(), "band constant not finite")?;
    ensure(d2 < 0.10 && dr < 0.10, format!("C = {c:.3}, 2N {c2:.3} ({d2:.3}), refined {cr:.3} ({dr:.3})"))?;
    within(start, Duration::from_secs(600))?;
    Ok(format!("C = {c:.3}; N doubled {c2:.3} ({:.1}%), balls refined {cr:.3} ({:.1}%)", 100.0 * d2, 100.0 * dr))
}

fn chains() -> Outcome {
    let start = Instant::now();
    let (g, g2) = (grid1(128), grid1(256));
    let (b, b2) = (family(&g, 0), family(&g2, 0));
    let mut checked = 0;
    let mut worst_slack = 0.0_f64;
    for e in shipped() {
        let rows = extension_equivalence_suite(&e.sample(&g).unwrap(), &b).unwrap();
        let fine = extension_equivalence_suite(&e.sample(&g2).unwrap(), &b2).unwrap();
        for (r, f) in rows.iter().zip(&fine) {
            let k = if r.upper.is_finite() { r.upper.max(r.lower) } else { r.lower };
            let slack = 3.0 * ((r.parts() - f.parts()).abs() + k * (r.norm - f.norm).abs());
            worst_slack = worst_slack.max(slack);
            ensure(r.holds(slack), format!("{}:{} fails: {r:?} slack {slack:e}", e.id, r.name))?;
            if r.name == "tent_inf2" {
                ensure(r.upper == 2.0 * 2f64.sqrt(), "tent_inf2 upper constant is not 2√2")?;
            }
            checked += 1;
        }
    }
    within(start, Duration::from_secs(600))?;
    Ok(format!("{checked} chain rows hold; largest slack {worst_slack:.2e}"))
}

fn embedding() -> Outcome {
    let start = Instant::now();
    let g = grid1(128);
    let b = family(&g, 0);
    let opts = EmbeddingOptions { constant: DEFAULT_EMBEDDING_CONSTANT, ..Default::default() };
    let mut worst = 0.0_f64;
    for e in shipped() {
        let field = VectorField::directed(&e.sample(&g).unwrap(), &[1.0]).unwrap();
        let d = divergence_embedding(&field, &b, &opts).unwrap();
        ensure(d.pass, format!("{}: lhs {} > {} rhs {}", e.id, d.lhs, d.constant, d.rhs))?;
        if d.rhs > 0.0 {
            worst = worst.max(d.lhs / d.rhs);
        }
    }
    let probe = scaling_probe(256).map_err(|e| e.to_string())?;
    let lo = probe.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = probe.iter().map(|p| p.1).fold(0.0, f64::max);
    let spread = hi / lo - 1.0;
    ensure(spread < 0.05, format!("bmo_inv spread {spread:.3} over λ"))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "embedding holds with C = {DEFAULT_EMBEDDING_CONSTANT} (max lhs/rhs {worst:.2}); scaling spread {:.2}%",
        100.0 * spread
    ))
}

fn duhamel_constants(points: usize) -> (f64, f64) {
    let g = grid1(points);
    let b = family(&g, 0);
    let mut worst = (0.0_f64, 0.0_f64);
    for e in shipped() {
        let alpha = nonlinearity(&build_extension(&e.sample(&g).unwrap()).unwrap(), &[1.0]).unwrap();
        let d = duhamel_bounds(&alpha, &b, &DuhamelOptions::default()).unwrap();
        worst = (worst.0.max(d.pointwise_constant), worst.1.max(d.carleson_constant));
    }
    worst
}

fn duhamel_bound_constants() -> Outcome {
    let start = Instant::now();
    let (a, b) = (duhamel_constants(128), duhamel_constants(256));
    let (dp, dc) = (common::rel_change(a.0, b.0), common::rel_change(a.1, b.1));
    ensure([a.0, a.1, b.0, b.1].iter().all(|v| v.is_finite() && *v > 0.0), "non-finite constant")?;
    ensure(dp < 0.15 && dc < 0.15, format!("pointwise {a:?} -> {b:?}"))?;
    within(start, Duration::from_secs(600))?;
    Ok(format!(
        "pointwise C {:.4} -> {:.4} ({:.1}%), Carleson C {:.4} -> {:.4} ({:.1}%)",
        a.0,
        b.0,
        100.0 * dp,
        a.1,
        b.1,
        100.0 * dc
    ))
}

fn splitting() -> Outcome {
    let start = Instant::now();
    let g = grid1(128);
    let b = family(&g, 0);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for e in shipped().into_iter().filter(|e| matches!(e.profile, Profile::HalfBump { .. })) {
        let alpha = nonlinearity(&build_extension(&e.sample(&g).unwrap()).unwrap(), &[1.0]).unwrap();
        let d = split_diagnostics(&alpha, &b, &OperatorOptions::default()).unwrap();
        worst = worst.max(d.relative);
        count += 1;
    }
    ensure(count == 8, format!("expected 8 bumps, found {count}"))?;
    ensure(worst < 1e-3, format!("relative defect {worst:e}"))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!("max relative defect {worst:.2e} over {count} bumps"))
}

fn bump(g: &Grid) -> ScalarField {
    ScalarField::from_fn(g, |x| 0.03 * (-(x[0] - 1.0).powi(2) / (2.0 * 0.0625)).exp()).unwrap()
}

fn threshold(points: usize, scales: &[f64]) -> Result<f64, String> {
    let g = grid1(points);
    let b = family(&g, 0);
    let u0 = bump(&g);
    let cfg = SolverConfig::default();
    let rows = smallness_sweep(&u0, &b, &cfg, scales).map_err(|e| e.to_string())?;
    let lo = rows.iter().take_while(|r| r.verdict == Verdict::Converged).last().ok_or("nothing converges")?.scale;
    let hi = rows.iter().find(|r| r.verdict != Verdict::Converged).ok_or("nothing fails")?.scale;
    convergence_threshold(&u0, &b, &cfg, lo, hi, 6).map_err(|e| e.to_string())?.ok_or("invalid bracket".into())
}

fn picard() -> Outcome {
    let start = Instant::now();
    let g = grid1(128);
    let b = family(&g, 0);
    let u0 = bump(&g);
    let data_norm = bmo_inv_neumann_norm(&u0, &b).unwrap();
    ensure((0.005..0.02).contains(&data_norm), format!("data norm {data_norm}"))?;
    let cfg = SolverConfig::default();
    let out = picard_solve(&u0, &b, &cfg).map_err(|e| e.to_string())?;
    let d = &out.diagnostics;
    ensure(d.verdict == Verdict::Converged, format!("verdict {:?}", d.verdict))?;
    let ratio = d.max_ratio.unwrap_or(0.0);
    ensure(ratio < 0.5, format!("geometric ratio {ratio}"))?;
    ensure(d.residual < 1e-6, format!("residual {}", d.residual))?;
    let (fd, dt) = common::fd_stepper(&g, &u0, 0.2);
    let h = g.spacing();
    let gap = path_norm(&out.u.sub(&fd).unwrap(), &b).unwrap();
    ensure(gap < 5.0 * (h * h + dt), format!("stepper gap {gap:e}"))?;

    let scales = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
    let rows = smallness_sweep(&u0, &b, &cfg, &scales).map_err(|e| e.to_string())?;
    let first_fail = rows.iter().position(|r| r.verdict != Verdict::Converged).ok_or("sweep never fails")?;
    ensure(
        rows[first_fail..].iter().all(|r| r.verdict != Verdict::Converged),
        "convergence resumes above the first failure",
    )?;
    // least-squares line in relative error, weights 1 / y^2
    let pts: Vec<(f64, f64)> = rows[..first_fail].iter().map(|r| (r.scale, r.contraction.unwrap())).collect();
    let w: Vec<f64> = pts.iter().map(|p| 1.0 / (p.1 * p.1)).collect();
    let sum = |f: &dyn Fn(f64, f64) -> f64| pts.iter().zip(&w).map(|((x, y), w)| w * f(*x, *y)).sum::<f64>();
    let (s0, sx, sy) = (sum(&|_, _| 1.0), sum(&|x, _| x), sum(&|_, y| y));
    let (sxx, sxy) = (sum(&|x, _| x * x), sum(&|x, y| x * y));
    let slope = (s0 * sxy - sx * sy) / (s0 * sxx - sx * sx);
    let icpt = (sy - slope * sx) / s0;
    let misfit = pts.iter().map(|(x, y)| (y - (icpt + slope * x)).abs() / y).fold(0.0, f64::max);
    ensure(slope > 0.0 && misfit < 0.05, format!("contraction not affine: slope {slope}, misfit {misfit}"))?;

    let t1 = threshold(128, &scales)?;
    let t2 = threshold(256, &scales)?;
    let dt_rel = common::rel_change(t1, t2);
    ensure(dt_rel < 0.20, format!("threshold {t1} vs {t2}"))?;
    within(start, Duration::from_secs(900))?;
    Ok(format!(
        "data {data_norm:.4}, {} iterations, ratio {ratio:.4}, residual {:.1e}, stepper gap {gap:.1e} (bound {:.1e}); \
         contraction ≈ {icpt:.1e} + {slope:.2e}·scale (misfit {:.1}%); threshold {t1:.1} / {t2:.1} ({:.1}%)",
        d.iterations.len(),
        d.residual,
        5.0 * (h * h + dt),
        100.0 * misfit,
        100.0 * dt_rel
    ))
}

fn determinism() -> Outcome {
    let pool = |k: usize| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let mut compared = 0;
    for e in ["kernel-checks", "trace-forward", "solver", "roundtrip"] {
        let cfg = RunConfig::parse(&default_config_text(e), None).map_err(|e| e.to_string())?;
        let csvs = |k: usize| -> Result<Vec<String>, String> {
            let art = pool(k).install(|| experiments::run(&cfg)).map_err(|e| e.to_string())?;
            art.tables.iter().map(|t| t.to_csv_string().map_err(|e| e.to_string())).collect()
        };
        let (a, b, c) = (csvs(1)?, csvs(1)?, csvs(3)?);
        ensure(a == b, format!("{e}: repeated runs differ"))?;
        ensure(a == c, format!("{e}: thread count changes the output"))?;
        compared += a.len();
    }
    Ok(format!("{compared} CSV tables bit-identical across repeats and thread counts"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 kernel suite", kernel_suite),
        ("2 two-path semigroup identity", two_path),
        ("3 trace band stability", trace_band),
        ("4 extension inequality chains", chains),
        ("5 divergence embedding and scaling", embedding),
        ("6 Duhamel bound constants", duhamel_bound_constants),
        ("7 splitting reconstruction", splitting),
        ("8 Picard small-data solution", picard),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({:.1?})", start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{name}] {detail} ({:.1?})", start.elapsed());
            }
        }
    }
    println!("acceptance: {}/9 criteria pass", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
