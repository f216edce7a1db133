//! End-to-end runs of the `wg-stokes` binary.

use std::path::Path;
use std::process::{Command, Output};

use wg_stokes_cli::report::{parse_csv, CSV_HEADER};

fn wg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wg-stokes")).args(args).output().expect("binary runs")
}

fn solve_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    wg(&args)
}

#[test]
fn s1_on_triangles_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve_into(dir.path(), &["--problem", "s1", "--mesh", "tri", "--order", "1", "--levels", "3..6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    let rows = parse_csv(&csv).unwrap();
    assert_eq!(rows.iter().map(|r| r.level).collect::<Vec<_>>(), [3, 4, 5, 6]);
    let last = rows.last().unwrap().rates;
    assert!((last[0].unwrap() - 2.0).abs() <= 0.2, "{last:?}");
    assert!((last[1].unwrap() - 1.0).abs() <= 0.2, "{last:?}");
    assert!(dir.path().join("rates.md").exists());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["problem"], "s1");
    assert_eq!(summary["levels"].as_array().unwrap().len(), 4);
}

#[test]
fn patch_problem_is_exact_on_the_nonconvex_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve_into(dir.path(), &["--problem", "patch-k1", "--mesh", "nonconvex-l", "--levels", "2..2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_csv(&std::fs::read_to_string(dir.path().join("rates.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].errors.iter().all(|e| *e <= 1e-8), "{:?}", rows[0].errors);
}

#[test]
fn csv_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--mesh", "nonconvex-l", "--order", "2", "--levels", "1..3"];
    assert!(solve_into(a.path(), &args).status.success());
    assert!(solve_into(b.path(), &args).status.success());
    let read = |d: &Path| std::fs::read(d.join("rates.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn iterative_and_direct_solvers_agree_in_the_table() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--mesh", "nonconvex-l", "--levels", "2..3", "--solver"];
    let direct = solve_into(a.path(), &[&args[..], &["direct"]].concat());
    let minres = solve_into(b.path(), &[&args[..], &["minres"]].concat());
    assert!(direct.status.success() && minres.status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join("rates.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(&cfg, "problem = \"patch-k2\"\norder = 2\nlevels = \"1..2\"\nmesh = \"tri\"\n").unwrap();
    let out = solve_into(dir.path(), &["--config", cfg.to_str().unwrap(), "--mesh", "nonconvex-l"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["problem"], "patch-k2");
    assert_eq!(summary["config"]["mesh"], "nonconvex-l");
    assert_eq!(summary["config"]["levels"], serde_json::json!([1, 2]));
}

#[test]
fn probe_reports_both_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let out = wg(&[
        "probe",
        "--norm-equivalence",
        "--inf-sup",
        "--levels",
        "1..2",
        "--samples",
        "12",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("probe.json")).unwrap()).unwrap();
    let norm = json["norm_equivalence"].as_array().unwrap();
    let infsup = json["inf_sup"].as_array().unwrap();
    assert_eq!((norm.len(), infsup.len()), (2, 2));
    for entry in norm {
        let (lo, hi) = (entry["min"].as_f64().unwrap(), entry["max"].as_f64().unwrap());
        assert!(0.0 < lo && lo <= hi, "{entry}");
    }
    for entry in infsup {
        assert!(entry["beta"].as_f64().unwrap() > 0.0, "{entry}");
    }
    // Stdout carries the same document.
    let printed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["inf_sup"], json["inf_sup"]);
}

#[test]
fn mesh_check_accepts_generated_and_written_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let out = wg(&["mesh-check", "--mesh", "nonconvex-l", "--levels", "1..3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.ends_with("valid")).count(), 3);
    let file = dir.path().join("nonconvex-l_level2.mesh");
    let out = wg(&["mesh-check", "--input", file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_code_two() {
    for args in [
        &["solve", "--order", "7"][..],
        &["solve", "--levels", "5..2"],
        &["solve", "--mesh", "hex"],
        &["solve", "--solver", "cg"],
        &["solve", "--export-vtk"],
        &["probe"],
    ] {
        let out = wg(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn vtk_export_writes_one_file_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve_into(dir.path(), &["--mesh", "nonconvex-l", "--levels", "1..2", "--export-vtk"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for l in [1, 2] {
        let text = std::fs::read_to_string(dir.path().join(format!("solution_level{l}.vtk"))).unwrap();
        assert!(text.starts_with("# vtk DataFile"));
    }
}
