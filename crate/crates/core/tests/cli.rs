use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use meshgmm::mixture::load_model;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meshgmm"))
}

fn bunny() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/bunny_res4.ply")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const STANDARD_NORMAL: &str = r#"{"weights":[1.0],"means":[[0.0,0.0,0.0]],"covariances":[[[1.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,1.0]]]}"#;

const ORIGIN_PLY: &str = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";

#[test]
fn fit_writes_a_normalized_model_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let trace = dir.path().join("trace.csv");
    for out in [&a, &b] {
        let o = run(&["fit", p(&bunny()), "--k", "100", "--mode", "exact", "--seed", "3", "--out", p(out), "--trace", p(&trace)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("seed: 3"));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let model = load_model(&a).unwrap();
    assert_eq!(model.len(), 100);
    let total: f64 = model.components().iter().map(|c| c.weight).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(std::fs::read_to_string(&trace).unwrap().lines().count() > 2);
}

#[test]
fn zero_components_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", p(&bunny()), "--k", "0", "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(run(&["eval", "--bogus", "a", "b"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_of_standard_normal_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let points = dir.path().join("p.ply");
    std::fs::write(&model, STANDARD_NORMAL).unwrap();
    std::fs::write(&points, ORIGIN_PLY).unwrap();
    let first = run(&["eval", p(&model), p(&points)]);
    assert!(first.status.success());
    let value: f64 = stdout(&first).trim().parse().unwrap();
    assert!((value - -2.756815).abs() < 1e-6, "{value}");
    assert_eq!(stdout(&first), stdout(&run(&["eval", p(&model), p(&points)])));
}

#[test]
fn eval_of_missing_or_malformed_files_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"weights\": [1.0]}").unwrap();
    assert_eq!(run(&["eval", p(&bad), p(&bunny())]).status.code(), Some(1));
    assert_eq!(run(&["eval", "/nonexistent/model.json", p(&bunny())]).status.code(), Some(1));
}

#[test]
fn mesh_fit_scores_at_least_vertex_fit_on_dense_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mesh_model = dir.path().join("mesh.json");
    let point_model = dir.path().join("points.json");
    let samples = dir.path().join("samples.ply");
    for (mode, out) in [("exact", &mesh_model), ("points-vertex", &point_model)] {
        let o = run(&["fit", p(&bunny()), "--k", "50", "--mode", mode, "--seed", "1", "--out", p(out)]);
        assert!(o.status.success());
    }
    assert!(run(&["sample", p(&bunny()), "--n", "20000", "--seed", "2", "--out", p(&samples)]).status.success());
    let score = |m: &Path| -> f64 { stdout(&run(&["eval", p(m), p(&samples)])).trim().parse().unwrap() };
    assert!(score(&mesh_model) >= score(&point_model));
}

#[test]
fn icp_on_identical_clouds_is_identity() {
    let o = run(&["register", "--method", "icp", p(&bunny()), p(&bunny())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let q: Vec<f64> = serde_json::from_value(json["quaternion"].clone()).unwrap();
    let t: Vec<f64> = serde_json::from_value(json["translation"].clone()).unwrap();
    assert!((q[0] - 1.0).abs() < 1e-12 && q[0] >= 0.0);
    assert!(t.iter().all(|v| v.abs() < 1e-9));
    assert!(json["iterations"].is_u64() && json["objective"].is_f64());
}

#[test]
fn p2d_reports_errors_against_a_given_truth() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let samples = dir.path().join("s.ply");
    assert!(run(&["fit", p(&bunny()), "--k", "40", "--seed", "5", "--out", p(&model)]).status.success());
    assert!(run(&["sample", p(&bunny()), "--n", "400", "--seed", "6", "--out", p(&samples)]).status.success());
    let o = run(&["register", "--method", "p2d", p(&samples), p(&model), "--truth", "1,0,0,0,0,0,0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(json["rotation_error"].as_f64().unwrap() < 0.02);
    assert!(json["translation_error_pct"].as_f64().unwrap() < 1.0);
}

#[test]
fn wrong_input_combinations_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, STANDARD_NORMAL).unwrap();
    assert_eq!(run(&["register", "--method", "d2d", p(&bunny()), p(&bunny())]).status.code(), Some(2));
    assert_eq!(run(&["register", "--method", "icp", p(&model), p(&bunny())]).status.code(), Some(2));
    assert_eq!(run(&["register", "--method", "p2d", p(&model), p(&bunny())]).status.code(), Some(2));
    let d2d = run(&["register", "--method", "d2d", p(&model), p(&model)]);
    assert!(d2d.status.success());
}

#[test]
fn bench_output_is_stable_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let csv = dir.path().join(format!("t{threads}.csv"));
        let summary = dir.path().join(format!("t{threads}.json"));
        let o = run(&[
            "--threads", threads, "bench", p(&bunny()), "--k", "20", "--trials", "3", "--fit-iters", "20", "--seed", "11",
            "--out", p(&csv), "--summary", p(&summary),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((std::fs::read(&csv).unwrap(), std::fs::read(&summary).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn sweep_prints_one_row_per_combination() {
    let o = run(&["sweep", p(&bunny()), "--ks", "5", "--modes", "exact", "--eval-n", "1000", "--seed", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);
}
