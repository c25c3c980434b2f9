//! End-to-end tests of the `mtor` binary: artifact shapes, exit codes, and
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtor::data::{load_csv, IngestSpec};
use mtor::RmtorModel;

fn mtor() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtor"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    mtor()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("file exists"))
        .expect("valid json")
}

struct Workspace {
    _dir: tempfile::TempDir,
    path: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().to_path_buf();
    Workspace { _dir: dir, path }
}

fn generate_dataset(ws: &Workspace, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "generate", "--tasks", "3", "--n", "60", "--features", "5", "--classes", "3", "--rho",
        "0.8", "--noise", "0.4", "--seed", "5", "--out", name,
    ];
    args.extend_from_slice(extra);
    run_ok(&ws.path, &args);
    ws.path.join(name)
}

#[test]
fn generate_row_count_matches_task_sizes() {
    let ws = workspace();
    run_ok(
        &ws.path,
        &[
            "generate", "--tasks", "4", "--n", "200", "--features", "10", "--classes", "3",
            "--rho", "0.8", "--noise", "0.5", "--seed", "7", "--out", "data.csv",
        ],
    );
    let text = std::fs::read_to_string(ws.path.join("data.csv")).unwrap();
    // header + 4 × 200 data rows
    assert_eq!(text.lines().count(), 801);
    assert!(ws.path.join("data.truth.json").exists());
}

#[test]
fn generate_supports_per_task_counts() {
    let ws = workspace();
    run_ok(
        &ws.path,
        &[
            "generate", "--tasks", "3", "--n", "30,40,50", "--features", "4", "--classes", "3",
            "--seed", "1", "--out", "data.csv",
        ],
    );
    let loaded = load_csv(&IngestSpec::new(ws.path.join("data.csv"))).unwrap();
    let sizes: Vec<usize> = loaded
        .dataset
        .tasks()
        .iter()
        .map(|t| t.num_instances())
        .collect();
    assert_eq!(sizes, vec![30, 40, 50]);
}

#[test]
fn generate_rejects_single_class() {
    let ws = workspace();
    let out = run(
        &ws.path,
        &[
            "generate", "--tasks", "2", "--n", "10", "--features", "3", "--classes", "1", "--out",
            "x.csv",
        ],
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn generate_reruns_are_byte_identical() {
    let ws = workspace();
    for name in ["a.csv", "b.csv"] {
        run_ok(
            &ws.path,
            &[
                "generate",
                "--tasks",
                "2",
                "--n",
                "25",
                "--features",
                "4",
                "--classes",
                "3",
                "--seed",
                "9",
                "--out",
                name,
                "--truth",
                &format!("{name}.truth.json"),
                "--no-manifest",
            ],
        );
    }
    assert_eq!(
        std::fs::read(ws.path.join("a.csv")).unwrap(),
        std::fs::read(ws.path.join("b.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(ws.path.join("a.csv.truth.json")).unwrap(),
        std::fs::read(ws.path.join("b.csv.truth.json")).unwrap()
    );
}

#[test]
fn train_immediate_stores_u_plus_one_thresholds() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--variant", "immediate",
            "--lambda", "0.1", "--outer-max", "10", "--out", "model.json",
        ],
    );
    let model = read_json(&ws.path.join("model.json"));
    assert_eq!(model["schema_version"], 1);
    assert_eq!(model["model"]["type"], "rmtor");
    let rows = model["model"]["thresholds"]["values"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        // U = 3 classes → 4 stored thresholds
        assert_eq!(row.as_array().unwrap().len(), 4);
    }
}

#[test]
fn train_all_stores_u_minus_one_thresholds() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--variant", "all", "--lambda",
            "0.1", "--outer-max", "10", "--out", "model.json",
        ],
    );
    let model = read_json(&ws.path.join("model.json"));
    let rows = model["model"]["thresholds"]["values"].as_array().unwrap();
    for row in rows {
        assert_eq!(row.as_array().unwrap().len(), 2);
    }
}

#[test]
fn train_rejects_inconsistent_flags() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    let out = run(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--setting", "global", "--out",
            "m.json",
        ],
    );
    assert_eq!(exit_code(&out), 2);
    let out = run(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "stl-shallow", "--out", "m.json",
        ],
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn eval_perfect_fixture_reports_ones_in_both_outputs() {
    // a separable dataset the model can fit exactly: labels keyed off one
    // coordinate with a wide margin
    let ws = workspace();
    let mut csv = String::from("task,label,f1,f2\n");
    for j in 0..40 {
        let x = if j % 2 == 0 { -5.0 } else { 5.0 } + (j as f64) * 0.01;
        let label = if x < 0.0 { 1 } else { 2 };
        csv.push_str(&format!("g{},{label},{x},0.25\n", j % 2));
    }
    std::fs::write(ws.path.join("sep.csv"), csv).unwrap();
    run_ok(
        &ws.path,
        &[
            "train", "--data", "sep.csv", "--model", "rmtor", "--variant", "immediate",
            "--lambda", "0.0001", "--out", "model.json",
        ],
    );
    let stdout = run_ok(
        &ws.path,
        &[
            "eval", "--model", "model.json", "--data", "sep.csv", "--out", "report.json",
        ],
    );
    assert!(stdout.contains("1.0000"), "table lacks 1.0 accuracy:\n{stdout}");
    let report = read_json(&ws.path.join("report.json"));
    assert_eq!(report["report"]["overall"]["accuracy"], 1.0);
    assert_eq!(report["report"]["overall"]["mae"], 0.0);
}

#[test]
fn eval_report_totals_are_instance_weighted() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--lambda", "0.1", "--outer-max",
            "10", "--out", "model.json",
        ],
    );
    run_ok(
        &ws.path,
        &[
            "eval", "--model", "model.json", "--data", "data.csv", "--out", "report.json",
        ],
    );
    let report = read_json(&ws.path.join("report.json"));
    let per_task = report["report"]["per_task"].as_array().unwrap();
    let mut weighted_acc = 0.0;
    let mut weighted_mae = 0.0;
    let mut total = 0.0;
    for row in per_task {
        let n = row["n_instances"].as_f64().unwrap();
        weighted_acc += row["accuracy"].as_f64().unwrap() * n;
        weighted_mae += row["mae"].as_f64().unwrap() * n;
        total += n;
    }
    let overall = &report["report"]["overall"];
    assert!((overall["accuracy"].as_f64().unwrap() - weighted_acc / total).abs() < 1e-12);
    assert!((overall["mae"].as_f64().unwrap() - weighted_mae / total).abs() < 1e-12);
}

#[test]
fn eval_rejects_feature_dim_mismatch_naming_dims() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--lambda", "0.1", "--outer-max",
            "5", "--out", "model.json",
        ],
    );
    run_ok(
        &ws.path,
        &[
            "generate", "--tasks", "3", "--n", "20", "--features", "7", "--classes", "3",
            "--seed", "2", "--out", "wide.csv",
        ],
    );
    let out = run(
        &ws.path,
        &[
            "eval", "--model", "model.json", "--data", "wide.csv", "--out", "r.json",
        ],
    );
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("G=5") && stderr.contains("G=7"), "{stderr}");
}

#[test]
fn eval_unknown_task_under_mtl_fails_but_global_serves_it() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    // test data with a renamed task column value
    let text = std::fs::read_to_string(ws.path.join("data.csv")).unwrap();
    let renamed: String = text.replace("task1", "unseen");
    std::fs::write(ws.path.join("renamed.csv"), renamed).unwrap();
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--lambda", "0.1", "--outer-max",
            "5", "--out", "mtl.json",
        ],
    );
    let out = run(
        &ws.path,
        &[
            "eval", "--model", "mtl.json", "--data", "renamed.csv", "--out", "r.json",
        ],
    );
    assert_eq!(exit_code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown task"));
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "stl-shallow", "--setting", "global",
            "--lambda", "0.1", "--outer-max", "5", "--out", "global.json",
        ],
    );
    run_ok(
        &ws.path,
        &[
            "eval", "--model", "global.json", "--data", "renamed.csv", "--out", "r.json",
        ],
    );
}

#[test]
fn saved_model_predicts_identically_after_reload() {
    let ws = workspace();
    let data_path = generate_dataset(&ws, "data.csv", &[]);
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--lambda", "0.05", "--out",
            "model.json",
        ],
    );
    run_ok(
        &ws.path,
        &[
            "eval", "--model", "model.json", "--data", "data.csv", "--out", "report.json",
        ],
    );
    // reload the persisted weights/thresholds and predict in-process
    let model_json = read_json(&ws.path.join("model.json"));
    let model: RmtorModel = serde_json::from_value(model_json["model"].clone()).unwrap();
    let dataset = load_csv(&IngestSpec::new(&data_path)).unwrap().dataset;
    let report = mtor::eval::evaluate(&dataset, |id, x| {
        let t = model.task_index(id).unwrap();
        Ok(model.predict(t, x))
    })
    .unwrap();
    let saved = read_json(&ws.path.join("report.json"));
    assert_eq!(
        saved["report"]["overall"]["accuracy"].as_f64().unwrap(),
        report.overall.accuracy
    );
    assert_eq!(
        saved["report"]["overall"]["mae"].as_f64().unwrap(),
        report.overall.mae
    );
}

#[test]
fn train_eval_are_reproducible_byte_for_byte() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    for (model, report) in [("m1.json", "r1.json"), ("m2.json", "r2.json")] {
        run_ok(
            &ws.path,
            &[
                "train", "--data", "data.csv", "--model", "dmtor", "--epochs", "5", "--seed",
                "3", "--out", model, "--no-manifest",
            ],
        );
        run_ok(
            &ws.path,
            &[
                "eval", "--model", model, "--data", "data.csv", "--out", report,
                "--no-manifest",
            ],
        );
    }
    assert_eq!(
        std::fs::read(ws.path.join("m1.json")).unwrap(),
        std::fs::read(ws.path.join("m2.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(ws.path.join("r1.json")).unwrap(),
        std::fs::read(ws.path.join("r2.json")).unwrap()
    );
}

#[test]
fn cv_prints_grid_rows_and_winner_deterministically() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    let args = [
        "cv", "--data", "data.csv", "--grid", "0.001,0.01,0.1", "--k", "3", "--max-iterations",
        "100", "--outer-max", "8", "--seed", "4", "--out", "cv.json", "--no-manifest",
    ];
    let stdout = run_ok(&ws.path, &args);
    assert!(stdout.contains("0.001") && stdout.contains("0.01") && stdout.contains("0.1"));
    assert!(stdout.contains("selected lambda"));
    let first = read_json(&ws.path.join("cv.json"));
    run_ok(&ws.path, &args);
    let second = read_json(&ws.path.join("cv.json"));
    assert_eq!(first, second);
    assert_eq!(first["selection"]["scores"].as_array().unwrap().len(), 3);
}

#[test]
fn cv_rejects_k_below_two() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    let out = run(
        &ws.path,
        &[
            "cv", "--data", "data.csv", "--grid", "0.1", "--k", "1", "--out", "cv.json",
        ],
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let ws = workspace();
    let out_flag = mtor()
        .current_dir(&ws.path)
        .args([
            "generate", "--tasks", "2", "--n", "20", "--features", "3", "--classes", "3",
            "--seed", "21", "--out", "flag.csv", "--no-manifest",
        ])
        .output()
        .unwrap();
    assert!(out_flag.status.success());
    let out_env = mtor()
        .current_dir(&ws.path)
        .env("MTOR_SEED", "21")
        .args([
            "generate", "--tasks", "2", "--n", "20", "--features", "3", "--classes", "3",
            "--out", "env.csv", "--no-manifest",
        ])
        .output()
        .unwrap();
    assert!(out_env.status.success());
    assert_eq!(
        std::fs::read(ws.path.join("flag.csv")).unwrap(),
        std::fs::read(ws.path.join("env.csv")).unwrap()
    );
}

#[test]
fn bias_flag_adds_constant_column() {
    let ws = workspace();
    generate_dataset(&ws, "data.csv", &[]);
    run_ok(
        &ws.path,
        &[
            "train", "--data", "data.csv", "--model", "rmtor", "--bias", "--lambda", "0.1",
            "--outer-max", "5", "--out", "model.json",
        ],
    );
    let model = read_json(&ws.path.join("model.json"));
    // weights rows = G + 1 with the constant column appended
    assert_eq!(
        model["model"]["weights"]["values"].as_array().unwrap().len(),
        6
    );
}
