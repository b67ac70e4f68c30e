use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stlf_dms::pool::{forecast_matrix, ForecastMatrix};
use stlf_dms_cli::{Overrides, Run, RunConfig};
use tempfile::TempDir;

const SMALL: &str = r#"
[data]
source = "synthetic"

[data.synth]
n_hours = 1500

[split]
valid_hours = 240
test_hours = 242

[pool.hyper.mlp]
widths = [4]
epochs = 20

[pool.hyper.svr]
c_grid = [1.0]
epsilon_grid = [0.1]
max_train_rows = 300

[pool.hyper.gbm]
max_stages = 30

[pool.hyper.rf]
n_trees = 10

[agent]
episodes = 20
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stlf-dms"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn stlf(dir: &Path, config: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--no-header-timestamp")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn data_lines(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

/// Runs synth, train and forecast on the small config.
fn prepared() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for cmd in ["synth", "train", "forecast"] {
        ok(&stlf(dir.path(), &cfg, &[cmd]));
    }
    (dir, cfg)
}

#[test]
fn synth_writes_requested_hours() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[data]\nsource = \"synthetic\"\n[data.synth]\nn_hours = 24\n");
    ok(&stlf(dir.path(), &cfg, &["synth"]));
    let text = read(dir.path(), "dataset.csv");
    assert!(text.starts_with("timestamp,load,temperature,humidity,ghi,wind_speed\n"));
    assert_eq!(data_lines(&text), 24);
}

#[test]
fn synth_is_reproducible_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[data]\nsource = \"synthetic\"\n[data.synth]\nn_hours = 500\n");
    ok(&stlf(dir.path(), &cfg, &["synth"]));
    let first = read(dir.path(), "dataset.csv");
    ok(&stlf(dir.path(), &cfg, &["synth"]));
    assert_eq!(first, read(dir.path(), "dataset.csv"));
    ok(&stlf(dir.path(), &cfg, &["synth", "--seed", "3"]));
    assert_ne!(first, read(dir.path(), "dataset.csv"));
}

#[test]
fn header_timestamp_is_on_by_default() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[data]\nsource = \"synthetic\"\n[data.synth]\nn_hours = 24\n");
    let out = bin()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    ok(&out);
    let text = read(dir.path(), "dataset.csv");
    assert!(text.starts_with("# stlf-dms "), "{}", &text[..40]);
    assert_eq!(data_lines(&text), 24);
}

#[test]
fn missing_key_exits_2_and_names_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[data.synth]\nn_hours = 24\n");
    let out = stlf(dir.path(), &cfg, &["synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.source"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[data]\nsource = \"synthetic\"\n");
    assert_eq!(stlf(dir.path(), &cfg, &["nonsense"]).status.code(), Some(2));
    assert_eq!(stlf(dir.path(), &cfg, &["dms", "--reward", "regret"]).status.code(), Some(2));
    assert_eq!(bin().arg("synth").output().unwrap().status.code(), Some(2));
    let bad = write_config(dir.path(), "[data]\nsource = \"synthetic\"\n[window]\nhorizon = 0\n");
    assert_eq!(stlf(dir.path(), &bad, &["synth"]).status.code(), Some(2));
}

#[test]
fn corrupt_data_file_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("load.csv");
    fs::write(
        &data,
        "timestamp,load,temperature,humidity,ghi,wind_speed\n2014-01-01T00:00:00,abc,1,2,3,4\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[data]\nsource = \"file\"\npath = {:?}\n", data.to_str().unwrap()),
    );
    let out = stlf(dir.path(), &cfg, &["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn stages_need_their_inputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = stlf(dir.path(), &cfg, &["dms"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("forecast"));
}

#[test]
fn pipeline_outputs_have_the_expected_shapes() {
    let (dir, cfg) = prepared();
    let d = dir.path();
    let validation = read(d, "validation.csv");
    assert_eq!(data_lines(&validation), 10);
    ok(&stlf(d, &cfg, &["dms"]));
    let log = read(d, "selection_log.csv");
    assert!(log.starts_with("timestamp,chosen_model,realized_rank,forecast,actual,candidates,agent_index\n"));
    assert_eq!(data_lines(&log), 242);
    assert_eq!(data_lines(&read(d, "dms_forecast.csv")), 242);
    // 242 = 60 * 4 + 2, so the last agent covers two steps
    let curves = read(d, "learning_curves.csv");
    assert_eq!(data_lines(&curves), 61 * 20);
    assert!(curves.lines().last().unwrap().starts_with("61,20,"));
    assert!(log.lines().last().unwrap().ends_with(",61"));

    let out = stlf(d, &cfg, &["evaluate"]);
    ok(&out);
    let report = read(d, "report.csv");
    assert!(report.starts_with("model,nmae,mape,imp_nmae,imp_mape\n"), "{report}");
    let last = report.lines().last().unwrap();
    assert!(last.starts_with("M_Q,") && last.ends_with(",NA,NA"), "{last}");
    assert_eq!(data_lines(&report), 11);
    assert_eq!(data_lines(&read(d, "rank_counts.csv")), 11);
    let json: serde_json::Value = serde_json::from_str(&read(d, "report.json")).unwrap();
    assert_eq!(json["steps"], 242);
}

#[test]
fn pool_only_evaluation_has_no_improvement_columns() {
    let (dir, cfg) = prepared();
    ok(&stlf(dir.path(), &cfg, &["evaluate"]));
    let report = read(dir.path(), "report.csv");
    assert!(report.starts_with("model,nmae,mape\n"), "{report}");
    assert_eq!(data_lines(&report), 10);
}

#[test]
fn evaluation_rejects_a_log_of_the_wrong_length() {
    let (dir, cfg) = prepared();
    ok(&stlf(dir.path(), &cfg, &["dms"]));
    let path = dir.path().join("out/selection_log.csv");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(100).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let out = stlf(dir.path(), &cfg, &["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length mismatch"));
}

#[test]
fn dms_is_byte_identical_across_runs() {
    let (dir, cfg) = prepared();
    let d = dir.path();
    ok(&stlf(d, &cfg, &["dms"]));
    let first = (read(d, "selection_log.csv"), read(d, "dms_forecast.csv"), read(d, "learning_curves.csv"));
    ok(&stlf(d, &cfg, &["dms"]));
    let second = (read(d, "selection_log.csv"), read(d, "dms_forecast.csv"), read(d, "learning_curves.csv"));
    assert_eq!(first, second);

    ok(&stlf(d, &cfg, &["dms", "--reward", "error_reduction"]));
    let other = read(d, "selection_log.csv");
    assert_eq!(data_lines(&other), data_lines(&first.0));
    assert_ne!(other, first.0);
}

#[test]
fn reloaded_pool_reproduces_the_forecasts() {
    let (dir, cfg) = prepared();
    let overrides = Overrides {
        out: Some(dir.path().join("out")),
        ..Default::default()
    };
    let run = Run::new(RunConfig::load(&cfg, &overrides).unwrap(), false);
    let pool = run.load_pool().unwrap();
    assert_eq!(pool.len(), 10);
    let fs = run.features(&run.dataset().unwrap()).unwrap();
    let again = forecast_matrix(&pool, &fs.test).unwrap();
    let stored = ForecastMatrix::<f64>::read_csv(fs::File::open(dir.path().join("out/forecasts.csv")).unwrap()).unwrap();
    assert_eq!(again, stored);
}
