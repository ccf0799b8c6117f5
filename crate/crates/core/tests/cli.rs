use std::path::Path;
use std::process::{Command, Output};

fn enkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enkf")).args(args).output().unwrap()
}

fn quick<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--cycles", "40", "--spinup", "10", "--out", out];
    v.extend_from_slice(extra);
    v
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_per_cycle_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let mut args = vec!["run"];
    args.extend(quick(path_str(&out), &["--filter", "cenkf2", "--radius", "4", "--inflation", "1.02"]));
    let res = enkf(&args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("cycle,forecast_rmse,analysis_rmse,potential_start,potential_end,warnings\n"));
    assert_eq!(text.lines().count(), 41);
    assert!(String::from_utf8_lossy(&res.stdout).contains("filter=cenkf2"));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    for bad in [
        vec!["--members", "1"],
        vec!["--inflation", "0.9"],
        vec!["--steps", "0"],
        vec!["--obs-interval", "0.0123"],
        vec!["--radius", "-2"],
    ] {
        let mut args = vec!["run"];
        args.extend(quick(path_str(&out), &bad));
        assert_eq!(enkf(&args).status.code(), Some(1), "{bad:?}");
    }
}

#[test]
fn divergent_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let mut args = vec!["run"];
    args.extend(quick(path_str(&out), &["--filter", "cenkf2", "--inflation", "1.5", "--radius", "40"]));
    assert_eq!(enkf(&args).status.code(), Some(2));
}

#[test]
fn repeated_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let grid = ["--deltas", "1.0,1.05", "--radii", "2,6", "--filter", "esrf"];
    let mut args = vec!["sweep"];
    args.extend(quick(path_str(&a), &grid));
    assert_eq!(enkf(&args).status.code(), Some(0));
    let mut args = vec!["sweep", "--parallel"];
    args.extend(quick(path_str(&b), &grid));
    assert_eq!(enkf(&args).status.code(), Some(0));
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert!(text.starts_with("filter,delta,r0,seed,cycles,rmse,diverged\nesrf,1,2,42,40,"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        let mut args = vec!["run"];
        args.extend(quick(path_str(p), &["--filter", "enkf", "--radius", "4"]));
        enkf(&args);
    }
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
}

#[test]
fn config_file_is_merged_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"filter": "denkf", "inflation": 1.04, "radius": 5, "cycles": 12, "spinup": 3, "taper": "gaussian", "radius-convention": "full"}"#,
    )
    .unwrap();
    let out = dir.path().join("o.csv");
    let res = enkf(&["run", "--config", path_str(&cfg), "--radius", "3", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("filter=denkf delta=1.04 r0=3 cycles=12"), "{stdout}");

    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(enkf(&["run", "--config", path_str(&cfg), "--out", path_str(&out)]).status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let res = enkf(&["selftest"]);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.lines().count() >= 5);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
}
