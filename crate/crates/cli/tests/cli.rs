use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nbmo(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nbmo"));
    cmd.args(args).env_remove("NBMO_OUT").env_remove("NBMO_SEED").env_remove("NBMO_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// The single run directory created under `root`.
fn run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

fn small(experiment: &str) -> String {
    format!(
        "experiment = \"{experiment}\"\nseed = 1\n\n[grid]\ndim = 1\nhalf_width = 4.0\npoints = 64\nhorizon = 1.0\nlevels = 12\n\n[balls]\nmin_radius = 0.5\n"
    )
}

#[test]
fn lists_every_experiment() {
    let out = nbmo(&["list-experiments"], &[]);
    assert!(out.status.success());
    let names: Vec<String> = text(&out.stdout).lines().map(String::from).collect();
    assert_eq!(names.len(), 8);
    assert!(names.iter().any(|n| n == "smallness-sweep"));
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = nbmo(&["validate", path.to_str().unwrap()], &[]);
        assert!(out.status.success(), "{}: {}", path.display(), text(&out.stderr));
        assert!(text(&out.stdout).contains("valid"));
        n += 1;
    }
    assert_eq!(n, 8);
}

#[test]
fn empty_config_lists_required_keys() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "empty.toml", "");
    let out = nbmo(&["validate", p.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    for k in ["experiment", "seed", "grid"] {
        assert!(err.contains(k), "{err}");
    }
}

#[test]
fn unknown_experiment_names_the_options() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "bad.toml", &small("nonsense"));
    let out = nbmo(&["run", p.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("line 1") && err.contains("kernel-checks") && err.contains("splitting-diagnostics"), "{err}");
}

#[test]
fn invalid_values_are_line_anchored() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "bad.toml", &small("solver").replace("points = 64", "points = 63"));
    let out = nbmo(&["validate", p.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 7"), "{}", text(&out.stderr));
}

#[test]
fn zero_threads_is_a_config_error() {
    let out = nbmo(&["--threads", "0", "list-experiments"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kernel_checks_on_defaults_pass() {
    let root = tempfile::tempdir().unwrap();
    let cfg = configs().join("kernel-checks.toml");
    let out = nbmo(&["--out", root.path().to_str().unwrap(), "run", cfg.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    let dir = run_dir(root.path());
    let csv = fs::read_to_string(dir.join("kernel_checks.csv")).unwrap();
    assert!(csv.starts_with("experiment,input_id,grid,ball_family,"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kernel_variant"], "neumann");
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_data_converges_in_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "zero.toml", &format!("{}\n[solver]\ndata_scale = 0.0\n", small("solver")));
    let root = dir.path().join("runs");
    let out = nbmo(&["--out", root.to_str().unwrap(), "run", p.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    let iters = fs::read_to_string(run_dir(&root).join("iterations.csv")).unwrap();
    assert_eq!(iters.lines().count(), 2, "{iters}");
}

#[test]
fn blow_up_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "huge.toml", &format!("{}\n[solver]\ndata_scale = 1e150\n", small("solver")));
    let out = nbmo(&["--out", dir.path().join("runs").to_str().unwrap(), "run", p.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("blow-up"), "{}", text(&out.stderr));
}

#[test]
fn identical_config_and_seed_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "eq.toml", &small("trace-forward"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (root, threads) in [(&a, "1"), (&b, "2")] {
        let out = nbmo(&["run", p.to_str().unwrap()], &[("NBMO_OUT", root.to_str().unwrap()), ("NBMO_SEED", "7"), ("NBMO_THREADS", threads)]);
        assert!(out.status.code().is_some_and(|c| c < 2), "{}", text(&out.stderr));
    }
    let (da, db) = (run_dir(&a), run_dir(&b));
    let csv_a = fs::read(da.join("trace_forward.csv")).unwrap();
    assert_eq!(csv_a, fs::read(db.join("trace_forward.csv")).unwrap());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(da.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
}
