//! The binary's contract: exit codes, output files and error documents.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsvi(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsvi"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg("2")
        .output()
        .expect("binary runs")
}

fn shrink(src: &str, m: usize, n: usize) -> String {
    let mut out = Vec::new();
    for line in src.lines() {
        if line.starts_with("M = ") {
            out.push(format!("M = {m}"));
        } else if line.starts_with("N = ") {
            out.push(format!("N = {n}"));
        } else {
            out.push(line.to_string());
        }
    }
    out.join("\n")
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn free_martingale_solve_has_zero_k() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "free.toml", &shrink(include_str!("../configs/free.toml"), 2000, 8));
    let out = d.path().join("out");
    let o = bsvi(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("solution.csv")).unwrap();
    let k = rdr.headers().unwrap().iter().position(|h| h == "K0").unwrap();
    for rec in rdr.records() {
        assert_eq!(rec.unwrap()[k].parse::<f64>().unwrap(), 0.0);
    }
    let text = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(out.join("manifest.toml").exists() && out.join("summary.json").exists());
}

#[test]
fn zero_steps_is_a_config_error_naming_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "bad.toml", &shrink(include_str!("../configs/free.toml"), 100, 0));
    let out = d.path().join("out");
    let o = bsvi(&["solve"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("grid.N"));
}

#[test]
fn unknown_key_and_missing_file_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let body = include_str!("../configs/free.toml").replace("[grid]", "[grid]\nsteps = 3");
    let cfg = config(d.path(), "bad.toml", &body);
    assert_eq!(bsvi(&["solve"], &cfg, &d.path().join("a")).status.code(), Some(1));
    assert_eq!(bsvi(&["solve"], &d.path().join("nope.toml"), &d.path().join("b")).status.code(), Some(1));
}

#[test]
fn quadratic_solve_matches_closed_form_y0() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "q.toml", &shrink(include_str!("../configs/quadratic.toml"), 20_000, 32));
    let out = d.path().join("out");
    assert_eq!(bsvi(&["solve"], &cfg, &out).status.code(), Some(0));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let y0 = s["y0_mean"][0].as_f64().unwrap();
    let se = s["y0_stderr"][0].as_f64().unwrap();
    assert!(y0.abs() <= 3.0 * se + 1e-12, "{y0} ± {se}");
}

#[test]
fn penetration_on_free_problem_is_vacuous() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "free.toml", &shrink(include_str!("../configs/free.toml"), 1000, 8));
    let out = d.path().join("out");
    let o = bsvi(&["check", "penetration"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("vacuous"));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("penetration.json")).unwrap()).unwrap();
    assert_eq!(rep["status"], "vacuous");
}

#[test]
fn yosida_and_uniq_checks_pass_and_write_csv() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "box.toml", &shrink(include_str!("../configs/box.toml"), 4000, 16));
    let out = d.path().join("out");
    assert_eq!(bsvi(&["check", "yosida"], &cfg, &out).status.code(), Some(0));
    assert_eq!(bsvi(&["check", "uniq"], &cfg, &out).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("uniq.csv")).unwrap();
    assert!(csv.starts_with("term,value,stderr\n"));
    assert!(csv.contains("ratio_delta0.08"));
}

#[test]
fn epsilon_study_has_four_levels_and_slope_row() {
    let d = tempfile::tempdir().unwrap();
    let cfg = config(d.path(), "box.toml", &shrink(include_str!("../configs/box.toml"), 4000, 16));
    let out = d.path().join("out");
    let code = bsvi(&["study", "epsilon"], &cfg, &out).status.code();
    assert!(matches!(code, Some(0) | Some(3)));
    let csv = std::fs::read_to_string(out.join("study_epsilon.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    // header, four ε levels, the limit row, the slope row
    assert_eq!(rows.len(), 7, "{csv}");
    assert!(rows[6].starts_with("slope,"));
}

#[test]
fn truncation_study_on_bounded_data_has_zero_gaps_above_threshold() {
    let d = tempfile::tempdir().unwrap();
    let body = shrink(include_str!("../configs/bounded.toml"), 2000, 16).replace("[0.5, 1.0, 4.0, 8.0, inf]", "[4.0, 8.0, inf]");
    let cfg = config(d.path(), "b.toml", &body);
    let out = d.path().join("out");
    assert_eq!(bsvi(&["study", "truncation"], &cfg, &out).status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("study_truncation.json")).unwrap()).unwrap();
    for l in v["levels"].as_array().unwrap().iter().skip(1) {
        assert_eq!(l["gap"].as_f64(), Some(0.0));
        assert_eq!(l["identical_to_reference"], true);
    }
}

#[test]
fn refinement_study_gaps_shrink() {
    let d = tempfile::tempdir().unwrap();
    let body = shrink(include_str!("../configs/box.toml"), 4000, 32).replace("mode = \"penalized\"", "mode = \"limit\"");
    let cfg = config(d.path(), "box.toml", &body);
    let out = d.path().join("out");
    assert_eq!(bsvi(&["study", "refinement"], &cfg, &out).status.code(), Some(0));
}

#[test]
fn oracle_on_multidimensional_problem_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let body = r#"
[convex]
kind = "zero"
dim = 2
[driver]
kind = "zero"
[terminal]
kind = "sin"
[forward]
x0 = [0.0, 0.0]
[grid]
T = 1.0
N = 4
[mc]
M = 100
k = 2
seed = 1
[scheme]
epsilon = 0.1
"#;
    let cfg = config(d.path(), "two.toml", body);
    let out = d.path().join("out");
    assert_eq!(bsvi(&["oracle-compare"], &cfg, &out).status.code(), Some(1));
    assert!(std::fs::read_to_string(out.join("error.json")).unwrap().contains("unsupported"));
}
