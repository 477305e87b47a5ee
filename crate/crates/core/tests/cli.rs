use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use creditline::report::{check_numeric_csv, Manifest, MANIFEST};

const FIG1_MODEL: &str = "model.mu = 0.25\nmodel.sigma = 0.3\nmodel.r = 0.02\n";
const FIG3_MODEL: &str =
    "model.mu = 0.25\nmodel.sigma = 0.3\nmodel.r = 0.02\nmodel.lambda = 0.08\nmodel.beta_max = 20\nmodel.beta_prime0 = 2\nmodel.gamma = 5e-4\n";

fn creditline(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_creditline"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

/// Writes `config` to `dir/run.conf` and runs it into `dir/out`.
fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    run_env(dir, config, extra, &[])
}

fn run_env(dir: &Path, config: &str, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let conf = dir.join("run.conf");
    fs::write(&conf, config).unwrap();
    let out = dir.join("out");
    let mut args = vec!["run", conf.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    creditline(&args, env)
}

fn manifest(dir: &Path) -> Manifest {
    Manifest::parse(&fs::read_to_string(dir.join("out").join(MANIFEST)).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let text = fs::read_to_string(path).unwrap();
    check_numeric_csv(&text).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| if c.is_empty() { None } else { Some(c.parse().unwrap()) }).collect())
        .collect();
    (header, rows)
}

#[test]
fn solve1d_summary_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("task = solve1d\n{FIG1_MODEL}model.lambda = 0.8\n"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("convex_concave"), "{s}");
    for key in ["  a ", "  b "] {
        assert!(s.contains(key), "{s}");
    }
    let m = manifest(dir.path());
    let b: f64 = m.get("b").unwrap().parse().unwrap();
    let (header, rows) = read_csv(&dir.path().join("out/value.csv"));
    assert_eq!(header, ["x", "v", "v_x", "v_xx"]);
    assert_eq!(rows[0][0], Some(0.0));
    let top = rows.last().unwrap()[0].unwrap();
    assert!((top - 1.2 * b).abs() < 1e-9 * b);
}

#[test]
fn solve1d_unprofitable_firm_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        "task = solve1d\nmodel.mu = 0.01\nmodel.sigma = 0.3\nmodel.r = 0.02\nmodel.lambda = 0.1\n",
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest(dir.path()).get("regime"), Some("liquidate"));
    let (_, rows) = read_csv(&dir.path().join("out/value.csv"));
    for r in rows {
        assert_eq!(r[1], r[0]);
        assert_eq!(r[2], Some(1.0));
    }
}

#[test]
fn figure1_curves_fall_with_spread() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("task = figure1\n{FIG1_MODEL}sweep.values = 0.05, 0.15, 0.25\n"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("out/figure1.csv"));
    assert_eq!(header, ["x", "v[lambda=0.05]", "v[lambda=0.15]", "v[lambda=0.25]"]);
    let th = fs::read_to_string(dir.path().join("out/figure1_thresholds.csv")).unwrap();
    assert_eq!(th.lines().count(), 4);
    let mut compared = 0;
    for r in &rows {
        let v: Vec<f64> = r[1..].iter().flatten().copied().collect();
        if v.len() == 3 {
            assert!(v[0] >= v[1] - 1e-9 && v[1] >= v[2] - 1e-9, "{r:?}");
            compared += 1;
        }
    }
    assert!(compared > 100);
    assert!(dir.path().join("out/figure1.svg").is_file());
}

#[test]
fn figure3_policy_has_every_region() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("task = figure3\n{FIG3_MODEL}numerics.grid_n = 40\n"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(dir.path());
    for label in ["continue", "dividend", "invest", "disinvest"] {
        let n: usize = m.get(&format!("nodes.{label}")).unwrap_or_else(|| panic!("{label}: {m:?}")).parse().unwrap();
        assert!(n > 0, "{label}");
    }
    let text = fs::read_to_string(dir.path().join("out/figure3_nodes.csv")).unwrap();
    assert!(text.starts_with("x,k,v,label\n"));
    assert!(dir.path().join("out/figure3_policy.svg").is_file());
}

#[test]
fn figure4_reports_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "task = figure4\nmodel.mu = 0.25\nmodel.sigma = 0.6\nmodel.r = 0.02\nmodel.lambda = 0.8\nmodel.beta_max = 5\nsweep.values = 1, 2\n";
    let o = run(dir.path(), cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d: f64 = manifest(dir.path()).get("delta[beta_prime0=2]").unwrap().parse().unwrap();
    assert!((d - 0.18724).abs() < 5e-5);
    assert!(stdout(&o).contains("0.18725"));
    for f in ["figure4.csv", "figure4_capital.csv"] {
        read_csv(&dir.path().join("out").join(f));
    }
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("task = solve1d\n{FIG1_MODEL}model.lambda = 0.1\nmodel.lamda = 0.2\n"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.lamda"), "{}", stderr(&o));
    let bad_value = run(dir.path(), &format!("task = solve1d\n{FIG1_MODEL}model.lambda = fast\n"), &[]);
    assert_eq!(bad_value.status.code(), Some(2));
}

#[test]
fn solver_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &format!("task = solve_hjb2d\n{FIG3_MODEL}numerics.grid_n = 24\nnumerics.hjb_max_iter = 1\n"),
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn validation_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("task = validate\n{FIG1_MODEL}model.lambda = 0.3\nnumerics.n_paths = 200\nnumerics.dt = 1e-2\n");
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("FAIL"), "{s}");
    // The report still lists every artifact.
    let r = creditline(&["report", dir.path().join("out").to_str().unwrap()], &[]);
    assert_eq!(r.status.code(), Some(0));
    assert!(stdout(&r).contains("checks:"));
}

#[test]
fn report_needs_complete_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &format!("task = solve1d\n{FIG1_MODEL}model.lambda = 0.1\n"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let out = dir.path().join("out");
    let r = creditline(&["report", out.to_str().unwrap()], &[]);
    assert_eq!(stdout(&r), stdout(&o));
    fs::remove_file(out.join("value.csv")).unwrap();
    let r = creditline(&["report", out.to_str().unwrap()], &[]);
    assert_ne!(r.status.code(), Some(0));
    assert!(stderr(&r).contains("value.csv"));
}

#[test]
fn environment_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("task = solve1d\n{FIG1_MODEL}model.lambda = 0.1\n");
    let o = run_env(dir.path(), &cfg, &[], &[("CREDITLINE_MODEL_LAMBDA", "0.8")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(manifest(dir.path()).get("regime"), Some("convex_concave"));
}

#[test]
fn seed_flag_changes_estimates_deterministically() {
    let cfg = format!("task = validate\n{FIG1_MODEL}model.lambda = 0.1\nnumerics.n_paths = 2000\nnumerics.dt = 5e-3\n");
    let estimates = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        run(dir.path(), &cfg, &["--seed", seed, "--threads", "2"]);
        fs::read_to_string(dir.path().join("out/estimates.csv")).unwrap()
    };
    let a = estimates("11");
    assert_eq!(a, estimates("11"));
    assert_ne!(a, estimates("12"));
}
