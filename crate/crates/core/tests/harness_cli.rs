mod common;

use std::process::Command;

use common::{config_path, grid_of, load};
use fbsde_control::harness::{
    resolve_grid, run_coupling_study, run_optimality_gap, run_rate_study, GridFlags,
};
use fbsde_control::problem::{CoefficientFamily, Problem};

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fbsde-control"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &std::process::Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("error JSON on stderr")
}

#[test]
fn solve_prints_constant_driver_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("constant_driver");
    let out = cli(&["solve", "--config", &cfg, "--delta", "0.1", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 0.3).abs() <= 1e-10, "{v}");
    for f in ["value.csv", "value.json", "policy.csv", "policy.json", "run.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["subcommand"], "solve");
    assert_eq!(run["seed"], 0);
    assert!(run["timestamp"].as_u64().unwrap() > 0);
    assert_eq!(run["config"]["dimension"], 1);
}

#[test]
fn missing_config_exits_2() {
    let out = cli(&["solve", "--config", "/no/such/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert!(e["message"].as_str().unwrap().contains("config not found"));
}

#[test]
fn unstable_grid_exits_3_with_required_nt() {
    let out = cli(&["solve", "--config", &config_path("heat"), "--grid", "nx=401,nt=400", "--out", "/tmp/unused-fbsde"]);
    assert_eq!(out.status.code(), Some(3));
    let msg = stderr_json(&out)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("nt >= 1040"), "{msg}");
}

#[test]
fn grid_flags_override_config() {
    let p = load("bang_drift");
    let g = resolve_grid(&p, &"nx=101,box=-3:3".parse::<GridFlags>().unwrap()).unwrap();
    assert_eq!(g.nx, vec![101]);
    assert_eq!((g.box_lo[0], g.box_hi[0]), (-3.0, 3.0));
    assert_eq!(g.nt, p.grid.as_ref().unwrap().nt);
}

fn constant_problem() -> Problem {
    let mut cfg = load("constant_driver").config().clone();
    cfg.drift = Some(CoefficientFamily::new("constant-drift", &[("value", 0.2)]));
    Problem::from_config(cfg).unwrap()
}

#[test]
fn rate_study_on_delta_independent_problem_is_inconclusive() {
    let p = constant_problem();
    let r = run_rate_study(&p, &[0.4, 0.2, 0.1], &grid_of(&p), None).unwrap();
    assert!(r.inconclusive);
    assert!(r.gaps.iter().all(|&g| g <= 10.0 * r.grid_error_floor));
    assert!(r.grid_error_floor > 0.0);
}

#[test]
fn rate_study_exits_4_when_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("const.json");
    std::fs::write(&cfg, serde_json::to_string(constant_problem().config()).unwrap()).unwrap();
    let out = cli(&[
        "rate-study", "--config", cfg.to_str().unwrap(), "--deltas", "0.4,0.2,0.1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("floor"));
    assert!(dir.path().join("rate.csv").exists());
}

#[test]
fn rate_study_rejects_short_ladder() {
    let p = load("heat");
    let e = run_rate_study(&p, &[0.4, 0.2], &grid_of(&p), None).unwrap_err();
    assert!(e.to_string().contains("ladder too short"));
}

#[test]
fn heat_rate_slope_is_stable_under_refinement() {
    let p = load("heat");
    let ladder = [0.4, 0.2, 0.1, 0.05];
    let g = grid_of(&p);
    let coarse = run_rate_study(&p, &ladder, &g, None).unwrap();
    let fine = run_rate_study(&p, &ladder, &g.refined(2), None).unwrap();
    let (a, b) = (coarse.fitted_slope.unwrap(), fine.fitted_slope.unwrap());
    assert!(a >= 0.5 && b >= 0.5);
    assert!((a - b).abs() <= 0.15, "{a} vs {b}");
    assert!(coarse.deltas.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn optimality_gap_edge_cases() {
    let p = load("bang_drift");
    let g = grid_of(&p);
    let r = run_optimality_gap(&p, 0.1, &g, 0, 7, None).unwrap();
    assert!(r.challenger_values.is_empty());
    assert_eq!(r.min_gap, None);
    assert_eq!(serde_json::to_value(&r).unwrap()["min_gap"], serde_json::Value::Null);

    let h = load("heat");
    let r = run_optimality_gap(&h, 0.1, &grid_of(&h), 3, 1, None).unwrap();
    assert!(r.min_gap.unwrap().abs() <= 1e-10);

    let r = run_optimality_gap(&p, 0.1, &g, 20, 7, None).unwrap();
    assert!(r.min_gap.unwrap() >= -1e-8);
    assert!(r.challenger_values.iter().any(|c| c.value - r.optimal_value >= 1e-3));
    assert!(r.max_nodewise_difference <= 1e-10);
}

#[test]
fn coupling_study_rows() {
    let p = load("constant_coefficients");
    let g = grid_of(&p);
    let a = run_coupling_study(&p, &[0.4, 0.2, 0.1, 0.0], &g, 2000, 1e-3, 3, None).unwrap();
    let zero = a.rows.last().unwrap();
    assert_eq!((zero.x_sup_sq, zero.y_sup_sq), (0.0, 0.0));
    let b = run_coupling_study(&p, &[0.4, 0.2, 0.1], &g, 2000, 5e-4, 3, None).unwrap();
    let (sa, sb) = (a.x_slope.unwrap(), b.x_slope.unwrap());
    assert!(sa >= 0.9 && sb >= 0.9);
    assert!((sa - sb).abs() <= 0.1, "{sa} vs {sb}");
    assert!(a.rows.iter().all(|r| !r.tainted));
}

fn csv_bodies(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = config_path("bang_drift");
    for args in [
        vec!["solve"],
        vec!["simulate", "--n-paths", "300", "--dt", "0.005"],
        vec!["optimality-gap", "--challengers", "3"],
    ] {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let mut a = args.clone();
                a.extend(["--config", &cfg, "--seed", "11", "--out", dir.path().to_str().unwrap()]);
                assert!(cli(&a).status.success(), "{args:?}");
                csv_bodies(dir.path())
            })
            .collect();
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{args:?}");
    }
}

#[test]
fn check_convexity_and_audit_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = cli(&[
        "check-convexity", "--config", &config_path("bang_drift"), "--assumption", "h2",
        "--probe", "x=0.5,y=0", "--out", d,
    ]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["assumption_id"], "H2");
    assert_eq!(rep["satisfied"], true);
    assert!(dir.path().join("convexity.json").exists());

    let out = cli(&[
        "check-convexity", "--config", &config_path("recursive"), "--assumption", "h2",
        "--probe", "x=0.5,y=0", "--out", d,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "refused");

    let out = cli(&["audit", "--config", &config_path("recursive"), "--out", d]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["estimated_M"].as_f64().unwrap() <= 1.0);
}
