use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mafd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mafd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn quadratic_solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = mafd(&["solve", "--problem", "quadratic", "--h", "1/32", "--method", "precond", "--mu", "50", "--init", "extension", "--out", out]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["converged"], true);
    assert!(summary["max_error"].as_f64().unwrap() <= 1e-8);
    assert!(summary.get("wall_time_ms").is_none());
    let solution = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert_eq!(solution.lines().count(), 1 + 33 * 33);
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.starts_with("iter,residual\n"));
    assert_eq!(history.lines().count() as u64, 1 + summary["iterations"].as_u64().unwrap());
}

#[test]
fn two_dirac_coarse_solve_from_exact_start() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["solve", "--problem", "two_dirac", "--h", "1/8", "--mu", "50", "--init", "exact", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let summary = json(&dir.path().join("summary.json"));
    let err = summary["max_error"].as_f64().unwrap();
    assert!((err - 0.2014).abs() < 1e-3, "{err}");
    assert!(summary["discrete_convex"].is_boolean());
}

#[test]
fn inadmissible_mesh_width_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["solve", "--problem", "quadratic", "--h", "0.3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("h must divide domain side"));
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mafd(&["solve", "--problem", "nope", "--h", "1/8"])), 1);
    assert_eq!(code(&mafd(&["solve", "--h", "1/8", "--method", "newton"])), 1);
    assert_eq!(code(&mafd(&["solve", "--h", "1/8", "--mu", "-1"])), 1);
    assert_eq!(code(&mafd(&["--threads", "0", "solve", "--h", "1/8"])), 1);
    assert_eq!(code(&mafd(&["--help"])), 0);
}

#[test]
fn exhausted_budget_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["solve", "--problem", "smooth_radial", "--h", "1/16", "--init", "extension", "--max-iter", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 2);
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["converged"], false);
    assert_eq!(summary["iterations"], 3);
}

#[test]
fn divergence_exits_two_with_a_failure_note() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["solve", "--problem", "smooth_radial", "--h", "1/32", "--method", "basic", "--mu", "50", "--init", "extension", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 2);
    let summary = json(&dir.path().join("summary.json"));
    assert!(summary["failure"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn file_initial_guess_restarts_at_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let base = ["solve", "--problem", "smooth_radial", "--h", "1/16", "--tol", "1e-9"];
    let mut args = base.to_vec();
    args.extend(["--init", "extension", "--out", first.to_str().unwrap()]);
    assert_eq!(code(&mafd(&args)), 0);
    let init = format!("file:{}", first.join("solution.csv").display());
    let mut args = base.to_vec();
    args.extend(["--init", &init, "--out", second.to_str().unwrap()]);
    assert_eq!(code(&mafd(&args)), 0);
    assert_eq!(json(&second.join("summary.json"))["iterations"], 1);
}

#[test]
fn study_tables_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = mafd(&["study", "--problem", "quadratic", "--h-list", "1/8,1/2^4", "--init", "extension", "--tol", "1e-10", "--out", out]);
    assert_eq!(code(&run), 0);
    let csv = std::fs::read_to_string(dir.path().join("study.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,iterations,converged,max_error,residual,wall_time_ms");
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "true");
        assert!(fields[3].parse::<f64>().unwrap() <= 1e-8);
    }
    let text = std::fs::read_to_string(dir.path().join("study.txt")).unwrap();
    assert!(text.contains("1/2^3") && text.contains("1/2^4"));

    assert_eq!(code(&mafd(&["study", "--problem", "quadratic", "--out", out])), 1);
    let starved = mafd(&["study", "--problem", "smooth_radial", "--h-list", "1/8", "--init", "extension", "--max-iter", "2", "--out", out]);
    assert_eq!(code(&starved), 2);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let read_all = |sub: &str| {
        ["study.csv", "study.txt", "verify.json"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(sub).join(f)).unwrap())
            .collect::<Vec<_>>()
    };
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let out = out.to_str().unwrap();
        mafd(&["study", "--problem", "two_dirac", "--h-list", "1/8,1/16", "--out", out]);
        mafd(&["verify", "--suite", "ellipticity,contraction", "--h", "1/16", "--trials", "20", "--seed", "3", "--out", out]);
    }
    assert_eq!(read_all("a"), read_all("b"));
}

#[test]
fn verify_laplacian_norm_passes() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["verify", "--suite", "laplacian-norm", "--h", "1/16,1/64,1/256", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["schema"], 1);
    assert_eq!(report["passed"], true);
    let norms = report["checks"][0]["values"]["norms"].as_array().unwrap();
    assert_eq!(norms.len(), 3);
}

#[test]
fn verify_ellipticity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["verify", "--suite", "ellipticity", "--trials", "1000", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 0);
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["seed"], 7);
    assert_eq!(report["checks"][0]["values"]["violations"], 0);
}

#[test]
fn verify_reports_failed_checks_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&["verify", "--suite", "contraction", "--method", "basic", "--mu", "50", "--h", "1/16", "--trials", "5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&run), 2);
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["passed"], false);
    assert!(report["checks"][0]["values"]["ratio"].as_f64().unwrap() > 1.0);
}

#[test]
fn verify_crash_keeps_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = mafd(&[
        "verify", "--suite", "ellipticity,measure-convergence", "--problem", "two_dirac", "--box", "0.25,0.5,0.25,0.75",
        "--h", "1/16", "--trials", "10", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 3);
    let report = json(&dir.path().join("verify.json"));
    assert_eq!(report["checks"].as_array().unwrap().len(), 1);
    assert!(report["crash"].as_str().unwrap().contains("MeasureConvergence"));
}
