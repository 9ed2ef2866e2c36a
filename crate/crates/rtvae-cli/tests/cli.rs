//! End-to-end command tests against the built binary: exit codes, outputs,
//! determinism, seed overrides.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rtvae() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rtvae"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn schema_toml() -> &'static str {
    r#"
[[columns]]
name = "proto"
kind = "categorical"

[[columns]]
name = "bytes"
kind = "continuous"

[[columns]]
name = "outcome"
kind = "categorical"

[label]
column = "outcome"
normal_values = ["normal"]
"#
}

fn csv_rows() -> &'static str {
    "tcp,1.5,normal\nudp,2.0,normal\ntcp,0.5,attack\nicmp,9.9,attack\ntcp,1.1,normal\nudp,1.9,normal\n"
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("schema.toml"), schema_toml());
        write(&dir.path().join("data.csv"), csv_rows());
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn ingest_writes_cache_and_exits_zero() {
    let ws = Workspace::new();
    let output = run(rtvae()
        .args(["ingest", "--csv", &ws.arg("data.csv")])
        .args(["--schema", &ws.arg("schema.toml")])
        .args(["--out", &ws.arg("cache.rtvd")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert!(ws.path("cache.rtvd").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("6 rows"), "{stdout}");
}

#[test]
fn missing_schema_exits_one_and_names_path() {
    let ws = Workspace::new();
    let output = run(rtvae()
        .args(["ingest", "--csv", &ws.arg("data.csv")])
        .args(["--schema", &ws.arg("nope.toml")])
        .args(["--out", &ws.arg("cache.rtvd")]));
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("nope.toml"));
}

#[test]
fn unknown_flag_exits_two_with_usage() {
    let output = run(rtvae().args(["ingest", "--nonsense"]));
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).to_lowercase().contains("usage"));
}

#[test]
fn help_exits_zero() {
    let output = run(rtvae().arg("--help"));
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn malformed_csv_exits_one_with_line_number() {
    let ws = Workspace::new();
    write(&ws.path("bad.csv"), "tcp,1.5,normal\nudp,abc,normal\n");
    let output = run(rtvae()
        .args(["ingest", "--csv", &ws.arg("bad.csv")])
        .args(["--schema", &ws.arg("schema.toml")])
        .args(["--out", &ws.arg("cache.rtvd")]));
    assert_eq!(output.status.code(), Some(1));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("line 2"), "{stderr}");
    assert!(!ws.path("cache.rtvd").exists(), "no partial output");
}

fn train_config(ws: &Workspace, beta: &str) -> String {
    format!(
        r#"
seed = 11

[data]
source = "csv"
csv = "{csv}"
schema = "{schema}"

[train]
beta = {beta}
max_epochs = 2
batch_size = 4
holdout_fraction = 0.34
"#,
        csv = ws.arg("data.csv").replace('\\', "/"),
        schema = ws.arg("schema.toml").replace('\\', "/"),
    )
}

#[test]
fn train_writes_model_and_history() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "0.01"));
    let output = run(rtvae()
        .args(["train", "--config", &ws.arg("exp.toml")])
        .args(["--out-dir", &ws.arg("run")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert!(ws.path("run/model.json").exists());
    let history = std::fs::read_to_string(ws.path("run/history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss_total,loss_cat,loss_cont,loss_kl,val_auc"));

    // labeled hold-out of this tiny csv has both classes, so AUC is recorded
    let model_json = std::fs::read_to_string(ws.path("run/model.json")).unwrap();
    assert!(model_json.contains("\"format\": \"rtvae-v1\""));
}

#[test]
fn train_rerun_is_byte_identical() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "0.001"));
    let mut blobs = Vec::new();
    for dir in ["run_a", "run_b"] {
        let output = run(rtvae()
            .args(["train", "--config", &ws.arg("exp.toml")])
            .args(["--out-dir", &ws.arg(dir)]));
        assert!(output.status.success(), "{}", stderr_of(&output));
        blobs.push((
            std::fs::read(ws.path(dir).join("model.json")).unwrap(),
            std::fs::read(ws.path(dir).join("history.csv")).unwrap(),
        ));
    }
    assert_eq!(blobs[0], blobs[1]);
}

#[test]
fn seed_precedence_cli_over_env_over_config() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "0.0"));

    let run_with = |seed_flag: Option<&str>, env: Option<&str>, dir: &str| {
        let mut cmd = rtvae();
        cmd.args(["train", "--config", &ws.arg("exp.toml")])
            .args(["--out-dir", &ws.arg(dir)]);
        if let Some(seed) = seed_flag {
            cmd.args(["--seed", seed]);
        }
        match env {
            Some(value) => cmd.env("RTVAE_SEED", value),
            None => cmd.env_remove("RTVAE_SEED"),
        };
        let output = run(&mut cmd);
        assert!(output.status.success(), "{}", stderr_of(&output));
        std::fs::read(ws.path(dir).join("model.json")).unwrap()
    };

    let config_seed = run_with(None, None, "r_config");
    let env_seed = run_with(None, Some("99"), "r_env");
    let cli_seed = run_with(Some("99"), None, "r_cli");
    let cli_over_env = run_with(Some("99"), Some("123"), "r_both");

    assert_ne!(config_seed, env_seed, "env seed must override config");
    assert_eq!(env_seed, cli_seed, "same effective seed, same bytes");
    assert_eq!(cli_seed, cli_over_env, "cli seed must override env");
}

#[test]
fn score_round_trip_and_fingerprint_mismatch() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "0.0"));
    let output = run(rtvae()
        .args(["train", "--config", &ws.arg("exp.toml")])
        .args(["--out-dir", &ws.arg("run")]));
    assert!(output.status.success(), "{}", stderr_of(&output));

    // cache encoded from the same csv carries the same fingerprint
    let output = run(rtvae()
        .args(["ingest", "--csv", &ws.arg("data.csv")])
        .args(["--schema", &ws.arg("schema.toml")])
        .args(["--out", &ws.arg("cache.rtvd")]));
    assert!(output.status.success(), "{}", stderr_of(&output));

    let output = run(rtvae()
        .args(["score", "--model", &ws.arg("run/model.json")])
        .args(["--data", &ws.arg("cache.rtvd")])
        .args(["--out", &ws.arg("scores.csv")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let scores = std::fs::read_to_string(ws.path("scores.csv")).unwrap();
    let lines: Vec<&str> = scores.lines().collect();
    assert_eq!(lines[0], "row_index,score");
    assert_eq!(lines.len(), 7, "header plus six rows");

    // a cache built with a different encoder must be rejected, naming both
    // fingerprints
    write(
        &ws.path("other.csv"),
        "tcp,100.5,normal\nudp,200.0,attack\n",
    );
    let output = run(rtvae()
        .args(["ingest", "--csv", &ws.arg("other.csv")])
        .args(["--schema", &ws.arg("schema.toml")])
        .args(["--out", &ws.arg("other.rtvd")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let output = run(rtvae()
        .args(["score", "--model", &ws.arg("run/model.json")])
        .args(["--data", &ws.arg("other.rtvd")])
        .args(["--out", &ws.arg("scores2.csv")]));
    assert_eq!(output.status.code(), Some(1));
    let stderr = stderr_of(&output);
    let model_json = std::fs::read_to_string(ws.path("run/model.json")).unwrap();
    let fingerprint = model_json
        .split("\"fingerprint\": \"")
        .nth(1)
        .unwrap()
        .split('"')
        .next()
        .unwrap();
    assert!(stderr.contains(fingerprint), "model fingerprint printed");
}

#[test]
fn scoring_with_reused_encoder_matches_original_fingerprint() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "0.0"));
    assert!(run(rtvae()
        .args(["train", "--config", &ws.arg("exp.toml")])
        .args(["--out-dir", &ws.arg("run")]))
    .status
    .success());

    // new data, encoded with the model's own encoder state
    write(&ws.path("new.csv"), "tcp,1.4,normal\nicmp,8.0,attack\n");
    let output = run(rtvae()
        .args(["ingest", "--csv", &ws.arg("new.csv")])
        .args(["--schema", &ws.arg("schema.toml")])
        .args(["--out", &ws.arg("new.rtvd")])
        .args(["--encoder-from", &ws.arg("run/model.json")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let output = run(rtvae()
        .args(["score", "--model", &ws.arg("run/model.json")])
        .args(["--data", &ws.arg("new.rtvd")])
        .args(["--out", &ws.arg("new_scores.csv")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
}

#[test]
fn gridsearch_writes_table() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "0.5"));
    let output = run(rtvae()
        .args(["gridsearch", "--config", &ws.arg("exp.toml")])
        .args(["--out-dir", &ws.arg("gs")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let table = std::fs::read_to_string(ws.path("gs/gridsearch.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "beta,val_auc,selection_score,best_epoch");
    assert_eq!(lines.len(), 6, "header plus the default five-point grid");
    assert!(ws.path("gs/model.json").exists());
}

#[test]
fn train_with_beta_grid_runs_grid_search() {
    let ws = Workspace::new();
    write(&ws.path("exp.toml"), &train_config(&ws, "\"grid\""));
    let output = run(rtvae()
        .args(["train", "--config", &ws.arg("exp.toml")])
        .args(["--out-dir", &ws.arg("tg")]));
    assert!(output.status.success(), "{}", stderr_of(&output));
    assert!(ws.path("tg/gridsearch.csv").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("grid selected beta"), "{stdout}");
}

fn experiment_config() -> &'static str {
    r#"
seed = 3

[data]
source = "synthetic"

[data.synthetic]
train_normals = 250
train_anomalies = 80

[train]
beta = 0.01
max_epochs = 2
batch_size = 64

[sweep]
rates = [0.0, 0.1]
seeds = [1]
train_total = 200
test_normals = 50
test_anomalies = 50
"#
}

#[test]
fn experiment_writes_sweep_outputs() {
    let ws = Workspace::new();
    write(&ws.path("sweep.toml"), experiment_config());
    let output = run(rtvae()
        .args(["experiment", "--config", &ws.arg("sweep.toml")])
        .args(["--out-dir", &ws.arg("sw")])
        .args(["--threads", "2"]));
    assert!(output.status.success(), "{}", stderr_of(&output));

    let sweep = std::fs::read_to_string(ws.path("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "rate,beta,variant,seed,test_auc,best_epoch");
    assert_eq!(lines.len(), 5, "two rates x two variants x one seed");

    let aggregate = std::fs::read_to_string(ws.path("sw/sweep_aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("rate,variant,mean_auc,min_auc,max_auc"));

    let models: Vec<_> = std::fs::read_dir(ws.path("sw/models")).unwrap().collect();
    assert_eq!(models.len(), 4, "one model file per cell");
}

#[test]
fn config_rejects_unknown_keys() {
    let ws = Workspace::new();
    write(
        &ws.path("exp.toml"),
        "[train]\nbeta = 0.1\nlerning_rate = 0.1\n",
    );
    let output = run(rtvae().args(["train", "--config", &ws.arg("exp.toml")]));
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("lerning_rate"));
}

#[test]
fn train_without_config_is_a_usage_error() {
    let output = run(rtvae().arg("train"));
    assert_eq!(output.status.code(), Some(2));
}
