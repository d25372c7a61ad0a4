use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_implicit-stability");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn default_config() -> serde_json::Value {
    let text = std::fs::read_to_string(manifest_dir().join("configs/default.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Writes `config` with outputs redirected into `dir`; returns the config path.
fn write_config(dir: &Path, mut config: serde_json::Value) -> PathBuf {
    config["output"]["csv_path"] = dir.join("report.csv").to_string_lossy().into();
    config["output"]["json_path"] = dir.join("report.json").to_string_lossy().into();
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn list_problems_is_stable_and_complete() {
    let a = run(&["list-problems"]);
    let b = run(&["list-problems"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    for name in ["sqrt1d", "nl2d", "quad_nd", "explog1d", "linsys_diag", "linsys_illcond", "linsys_param"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let names: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn check_passes_and_names_each_invariant() {
    let o = run(&["check"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    for name in [
        "kappa_oracle_crosscheck",
        "derivative_tensors_vs_fd",
        "tangent_adjoint_duality",
        "tangent_vs_fd_root_map",
        "adjoint_linear_invariance",
        "first_order_slopes",
        "prediction_soundness",
    ] {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(name)), "{name}\n{text}");
    }
}

#[test]
fn corrupted_tolerance_fails_check() {
    let o = run(&["check", "--tolerance-scale", "-1"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn default_config_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), default_config());
    let o = run(&["--quiet", "run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());

    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "problem,quantity,epsilon,direction,status,delta_x,observed,observed_aux,predicted,ratio,degenerate,\
         kappa_a,kappa_a_dot,kappa_jac_x,kappa_jac_p,kappa_tan_err,kappa_adj_err_x,kappa_adj_err_p,message"
    );
    let rows: Vec<&str> = lines.collect();
    // At least 6 problems, 2 quantities each, 5 epsilons.
    assert!(rows.len() >= 6 * 2 * 5);
    let problems: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert!(problems.len() >= 6);
    assert!(rows.iter().all(|r| r.split(',').nth(4) == Some("ok")));
    // 17 significant digits in scientific notation.
    let eps = rows[0].split(',').nth(2).unwrap();
    let (mantissa, _) = eps.split_once('e').unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{eps}");
    assert_eq!(eps.parse::<f64>().unwrap(), 1e-6);
}

#[test]
fn json_report_validates_against_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config();
    cfg["problem_files"] = serde_json::json!([manifest_dir().join("configs/custom_linear.json")]);
    let path = write_config(dir.path(), cfg);
    let o = run(&["--quiet", "run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let schema_text = std::fs::read_to_string(manifest_dir().join("schema/report.schema.json")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&schema_text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert!(report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["problem"] == "linsys_custom"));

    // The schema rejects an unexpected field.
    let mut bad = report.clone();
    bad["rows"][0]["extra"] = serde_json::json!(1);
    assert!(!validator.is_valid(&bad));
}

#[test]
fn empty_problem_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config();
    cfg["problems"] = serde_json::json!([]);
    let path = write_config(dir.path(), cfg);
    let o = run(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("report.csv").exists());
}

#[test]
fn unknown_problem_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config();
    cfg["problems"] = serde_json::json!(["sqrt1d", "no_such_problem"]);
    let path = write_config(dir.path(), cfg);
    let o = run(&["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_problem"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config();
    cfg["directions"]["colour"] = serde_json::json!("red");
    let path = write_config(dir.path(), cfg);
    assert_eq!(code(&run(&["run", path.to_str().unwrap()])), 2);
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["--threads", "0", "list-problems"])), 2);
    assert_eq!(code(&run(&["run"])), 2);
}

#[test]
fn failing_cells_exit_3_and_still_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config();
    cfg["problems"] = serde_json::json!(["nl2d"]);
    // One Newton step from the start point cannot reach the root.
    cfg["solver"] = serde_json::json!({"tol": 1e-13, "max_iter": 1});
    let path = write_config(dir.path(), cfg);
    let o = run(&["--quiet", "run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",error,")));
    assert!(dir.path().join("report.json").exists());
}
