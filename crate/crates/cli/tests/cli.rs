//! End-to-end tests through the compiled binary: every subcommand, the
//! exit-code contract, and byte-level reproducibility of artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const CONFIG: &str = r#"
[dataset]
count = 40
image_size = 16
seed = 11
burn_in_steps = 12

[model]
patch_size = 4
channels = 6
depth = 1
cvae_hidden = [10, 8]

[train]
learning_rate = 5e-3
epochs = 3
batch_size = 8
latent_dim = 4
seed = 5
"#;

struct Fixture {
    _dir: TempDir,
    config: PathBuf,
    data: PathBuf,
    run: PathBuf,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_copresence")
}

fn run_in(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("COPRESENCE_SEED")
        .envs(envs.iter().copied())
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("cfg.toml");
        std::fs::write(&config, CONFIG).unwrap();
        let data = root.join("data");
        let run = root.join("run");
        assert_ok(&run_in(
            &root,
            &["generate", "--config", "cfg.toml", "--out", "data"],
            &[],
        ));
        assert_ok(&run_in(
            &root,
            &["train", "--config", "cfg.toml", "--dataset", "data", "--out", "run"],
            &[],
        ));
        Fixture {
            _dir: dir,
            config,
            data,
            run,
        }
    })
}

fn root(f: &Fixture) -> &Path {
    f.config.parent().unwrap()
}

// ── generate ─────────────────────────────────────────────────────────────

#[test]
fn generate_rerun_is_byte_identical() {
    let f = fixture();
    let out = run_in(
        root(f),
        &["generate", "--config", "cfg.toml", "--out", "data"],
        &[],
    );
    let stdout = assert_ok(&out);
    assert!(stdout.contains("dataset unchanged (byte-identical rerun)"));
    assert!(stdout.contains("40 samples (32 train / 8 test)"));
}

#[test]
fn generate_rejects_unknown_keys_and_degenerate_counts() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[dataset]\ncout = 10\n").unwrap();
    let out = run_in(dir.path(), &["generate", "--config", "bad.toml", "--out", "d"], &[]);
    assert_eq!(exit_code(&out), 2);

    std::fs::write(dir.path().join("zero.toml"), "[dataset]\ncount = 0\n").unwrap();
    let out = run_in(dir.path(), &["generate", "--config", "zero.toml", "--out", "d"], &[]);
    assert_eq!(exit_code(&out), 2);

    let out = run_in(dir.path(), &["generate", "--config", "gone.toml", "--out", "d"], &[]);
    assert_eq!(exit_code(&out), 3);
}

// ── train ────────────────────────────────────────────────────────────────

#[test]
fn train_writes_all_run_artifacts() {
    let f = fixture();
    for name in ["checkpoint.json", "run.json", "loss_curve.csv", "loss_curve.svg"] {
        assert!(f.run.join(name).exists(), "missing {name}");
    }
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.run.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 5);
    assert_eq!(record["epochs"].as_array().unwrap().len(), 3);
    assert_eq!(record["train"]["batch_size"], 8);
    assert_eq!(record["model"]["image_size"], 16);
    assert_eq!(record["model"]["categories"], 14);
    assert!(record["config_hash"].as_str().unwrap().len() == 64);

    let csv = std::fs::read_to_string(f.run.join("loss_curve.csv")).unwrap();
    assert!(csv.contains("# tool_version:"));
    assert!(csv.contains("epoch,train_loss,regression,divergence,val_ssd"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let svg = std::fs::read_to_string(f.run.join("loss_curve.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("config_hash"));
}

#[test]
fn train_reruns_bit_identically_except_wall_time() {
    let f = fixture();
    assert_ok(&run_in(
        root(f),
        &["train", "--config", "cfg.toml", "--dataset", "data", "--out", "run_b"],
        &[],
    ));
    let a = root(f).join("run");
    let b = root(f).join("run_b");
    assert_eq!(
        std::fs::read(a.join("checkpoint.json")).unwrap(),
        std::fs::read(b.join("checkpoint.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("loss_curve.csv")).unwrap(),
        std::fs::read(b.join("loss_curve.csv")).unwrap()
    );
    let mut ra: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    let mut rb: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("run.json")).unwrap()).unwrap();
    ra["wall_time_secs"] = 0.into();
    rb["wall_time_secs"] = 0.into();
    assert_eq!(ra, rb);
}

#[test]
fn ablation_flag_trains_the_deterministic_baseline() {
    let f = fixture();
    assert_ok(&run_in(
        root(f),
        &[
            "train", "--config", "cfg.toml", "--dataset", "data", "--out", "run_base",
            "--ablation", "no-unc", "--epochs", "1",
        ],
        &[],
    ));
    let record: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root(f).join("run_base/run.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record["model"]["use_tokens"], false);
    assert_eq!(record["model"]["use_latent"], false);
    assert_eq!(record["train"]["lambda"], 0.0);

    let saved =
        copresence_core::model::ModelParams::load(&root(f).join("run_base/checkpoint.json"))
            .unwrap();
    let names: Vec<&str> = saved.params.tensors.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["embed.w", "embed.b", "head.w3", "head.b3"]);
}

#[test]
fn seed_env_overrides_the_config() {
    let f = fixture();
    assert_ok(&run_in(
        root(f),
        &[
            "train", "--config", "cfg.toml", "--dataset", "data", "--out", "run_seeded",
            "--epochs", "1",
        ],
        &[("COPRESENCE_SEED", "999")],
    ));
    let record: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root(f).join("run_seeded/run.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record["seed"], 999);

    let out = run_in(
        root(f),
        &["train", "--config", "cfg.toml", "--dataset", "data", "--out", "x"],
        &[("COPRESENCE_SEED", "not-a-number")],
    );
    assert_eq!(exit_code(&out), 2);
}

fn missing_dataset_exits_3_inner(f: &Fixture) {
    let out = run_in(
        root(f),
        &["train", "--config", "cfg.toml", "--dataset", "missing", "--out", "x"],
        &[],
    );
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn missing_dataset_exits_3() {
    missing_dataset_exits_3_inner(fixture());
}

// ── eval ─────────────────────────────────────────────────────────────────

#[test]
fn eval_prints_both_tracks_and_writes_tables() {
    let f = fixture();
    let out = run_in(
        root(f),
        &[
            "eval", "--checkpoint", "run/checkpoint.json", "--dataset", "data",
            "--out", "evalout",
        ],
        &[],
    );
    let stdout = assert_ok(&out);
    assert!(stdout.contains("estimation"));
    assert!(stdout.contains("classification"));
    for stratum in ["1", "2", "3", "4", ">4", "all"] {
        assert!(stdout.contains(stratum));
    }
    for file in [
        "eval.json",
        "eval_categories.csv",
        "eval_strata.csv",
        "eval_classification.csv",
        "category_ssd.svg",
    ] {
        assert!(root(f).join("evalout").join(file).exists(), "missing {file}");
    }
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root(f).join("evalout/eval.json")).unwrap())
            .unwrap();
    assert_eq!(eval["report"]["per_stratum"].as_array().unwrap().len(), 6);
    assert!(eval["tool_version"].is_string());
    assert_eq!(eval["model"]["image_size"], 16);
}

#[test]
fn eval_rejects_checkpoint_from_different_categories() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("five.toml"),
        r#"
[dataset]
count = 12
image_size = 16
seed = 3
burn_in_steps = 10
categories = ["blizzard", "clear", "cloudy", "rain", "snow"]
max_copresent = 5
"#,
    )
    .unwrap();
    assert_ok(&run_in(
        dir.path(),
        &["generate", "--config", "five.toml", "--out", "five"],
        &[],
    ));
    let ckpt = f.run.join("checkpoint.json");
    let out = run_in(
        dir.path(),
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "five"],
        &[],
    );
    assert_eq!(exit_code(&out), 5);
}

#[test]
fn eval_rejects_bogus_track_with_usage_error() {
    let f = fixture();
    let out = run_in(
        root(f),
        &[
            "eval", "--checkpoint", "run/checkpoint.json", "--dataset", "data",
            "--track", "bogus",
        ],
        &[],
    );
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("estimation"));
    assert!(stderr.contains("classification"));
}

// ── predict ──────────────────────────────────────────────────────────────

#[test]
fn predict_is_deterministic_and_sorted() {
    let f = fixture();
    let args = [
        "predict",
        "--checkpoint",
        "run/checkpoint.json",
        "--image",
        "data/images/00000.png",
        "--json",
        "pred.json",
        "--svg",
        "pred.svg",
    ];
    let first = assert_ok(&run_in(root(f), &args, &[]));
    let second = assert_ok(&run_in(root(f), &args, &[]));
    assert_eq!(first, second);

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root(f).join("pred.json")).unwrap())
            .unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 14);
    let probs: Vec<f64> = rows.iter().map(|r| r["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]), "rows sorted by probability");
    assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(root(f).join("pred.svg").exists());

    let out = run_in(
        root(f),
        &["predict", "--checkpoint", "run/checkpoint.json", "--image", "nope.png"],
        &[],
    );
    assert_eq!(exit_code(&out), 3);
}

// ── report ───────────────────────────────────────────────────────────────

#[test]
fn report_emits_tables_and_self_delta_is_zero() {
    let f = fixture();
    // Single run: no delta columns.
    assert_ok(&run_in(root(f), &["report", "--out", "rep1", "run"], &[]));
    let csv = std::fs::read_to_string(root(f).join("rep1/report_categories.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "run,category,ssd,kl,r2,ce");

    // A run against itself: delta columns exist and are exactly zero.
    assert_ok(&run_in(root(f), &["report", "--out", "rep2", "run", "run"], &[]));
    let csv = std::fs::read_to_string(root(f).join("rep2/report_categories.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.ends_with("ssd_delta_pct,kl_delta_pct,r2_delta_pct,ce_delta_pct"));
    for line in csv.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        for delta in &cols[cols.len() - 4..] {
            if !delta.is_empty() {
                assert_eq!(delta.parse::<f64>().unwrap(), 0.0, "line: {line}");
            }
        }
    }
    for file in ["report_strata.csv", "report.json", "val_ssd.svg", "train_loss.svg", "category_ssd.svg"] {
        assert!(root(f).join("rep2").join(file).exists(), "missing {file}");
    }

    let out = run_in(root(f), &["report", "--out", "rep3"], &[]);
    assert_eq!(exit_code(&out), 2, "report with no runs is a usage error");
}

// ── ablate ───────────────────────────────────────────────────────────────

#[test]
fn ablate_writes_one_table_per_axis() {
    let f = fixture();
    let out = run_in(
        root(f),
        &[
            "ablate", "--config", "cfg.toml", "--dataset", "data", "--out", "abl",
            "--axis", "lambda", "--epochs", "1", "--samples", "10",
        ],
        &[],
    );
    assert_ok(&out);
    let csv = std::fs::read_to_string(root(f).join("abl/ablation_lambda.csv")).unwrap();
    let values: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(values, ["1e-3", "1e-4", "1e-5", "1e-6", "1e-7"]);
    assert!(root(f).join("abl/ablation_lambda.svg").exists());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root(f).join("abl/ablation.json")).unwrap())
            .unwrap();
    assert_eq!(doc["tables"].as_array().unwrap().len(), 1);
}
