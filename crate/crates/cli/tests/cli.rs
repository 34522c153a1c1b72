use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imbalml::corpus::{label_frequencies, load_dataset, DataFormat};
use imbalml::{LabelSpace, MetricsReport};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imbalml"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("exp.json");
    let cfg = serde_json::json!({
        "data": {"synthetic": {"n": 240, "prevalence": [0.1, 0.4, 0.15, 0.25, 0.3]}},
        "encoding": {"max_len": 12},
        "model": {"embed_dim": 16, "num_heads": 2, "num_layers": 1, "feedforward_dim": 32},
        "train": {"learning_rate": 0.01, "num_epochs": 2},
        "seed": 5,
        "output_dir": "runs"
    });
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixture_predictions_reproduce_bert_micro_row() {
    let dir = fixture("bert_counts");
    let o = run(
        &dir,
        &[
            "eval",
            "--predictions",
            "predictions.jsonl",
            "--data",
            "truth.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("micro avg     0.7216    0.6978    0.7095       182"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn json_and_text_reports_agree() {
    let dir = fixture("bert_counts");
    let base = [
        "eval",
        "--predictions",
        "predictions.jsonl",
        "--data",
        "truth.csv",
    ];
    let text = stdout(&run(&dir, &base));
    let json = run(&dir, &[&base[..], &["--json"]].concat());
    let report = MetricsReport::from_json(&stdout(&json)).unwrap();
    assert_eq!(report.render_text(), text);
    for row in report
        .classes
        .iter()
        .chain([&report.micro, &report.macro_avg, &report.weighted])
    {
        let line = format!(
            "{:.4}    {:.4}    {:.4}{:>10}",
            row.precision, row.recall, row.f1, row.support
        );
        assert!(text.contains(&line), "missing {line}");
    }
}

#[test]
fn wrong_class_count_in_truth_is_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = std::fs::read_to_string(fixture("bert_counts/truth.csv")).unwrap();
    let four: String = truth
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    std::fs::write(tmp.path().join("truth.csv"), four).unwrap();
    let preds = fixture("bert_counts/predictions.jsonl");
    let o = run(
        tmp.path(),
        &[
            "eval",
            "--predictions",
            preds.to_str().unwrap(),
            "--data",
            "truth.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));
}

#[test]
fn raising_tau_never_adds_assignments() {
    let dir = fixture("bert_counts");
    let count = |tau: &str| {
        let o = run(
            &dir,
            &[
                "eval",
                "--predictions",
                "predictions.jsonl",
                "--data",
                "truth.csv",
                "--tau",
                tau,
                "--json",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let r = MetricsReport::from_json(&stdout(&o)).unwrap();
        (r.micro.recall * 182.0 / r.micro.precision.max(1e-12)).round()
    };
    assert!(count("0.9") <= count("0.5"));
}

#[test]
fn train_writes_artifacts_and_prints_report_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = run(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = tmp.path().join("runs/run-s5");
    for f in [
        "model.ckpt",
        "model.json",
        "vocab.tsv",
        "manifest.json",
        "report.json",
        "report.txt",
        "history.csv",
    ] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let report =
        MetricsReport::from_json(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some(MetricsReport::summary_header()));
    let printed: Vec<f64> = lines
        .next()
        .unwrap()
        .split('\t')
        .map(|v| v.parse().unwrap())
        .collect();
    let expected = report.summary();
    for (p, e) in printed.iter().zip(expected) {
        assert_eq!(format!("{p:.4}"), format!("{:.4}", e.unwrap()));
    }
    let manifest = read_json(&run_dir.join("manifest.json"));
    assert_eq!(manifest["tag"], "base");
    assert!(manifest["class_weights"].is_null());
    let history = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn reruns_give_identical_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let manifest = tmp.path().join("runs/run-s5/manifest.json");
    let mut seen = Vec::new();
    for _ in 0..2 {
        let o = run(tmp.path(), &["train", "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        seen.push(std::fs::read(&manifest).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn weighted_flag_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = run(
        tmp.path(),
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--use-class-weights",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read_json(&tmp.path().join("runs/run-s5-w/manifest.json"));
    assert_eq!(manifest["tag"], "+w");
    assert_eq!(manifest["train"]["use_class_weights"], true);
    let weights: Vec<f64> = serde_json::from_value(manifest["class_weights"].clone()).unwrap();
    assert_eq!(weights.len(), 5);
    assert!(weights.contains(&1.0) && weights.iter().all(|&w| w >= 1.0));
}

#[test]
fn dotted_overrides_reach_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = run(
        tmp.path(),
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--train.num_epochs",
            "1",
            "--run-id",
            "short",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read_json(&tmp.path().join("runs/short/manifest.json"));
    assert_eq!(manifest["train"]["num_epochs"], 1);
}

#[test]
fn missing_dataset_is_a_usage_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.json");
    std::fs::write(&cfg, r#"{"data": {"train": "no/such/train.csv"}}"#).unwrap();
    let o = run(tmp.path(), &["train", "--config", "exp.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no/such/train.csv"), "{}", stderr(&o));
}

#[test]
fn unknown_config_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = run(
        tmp.path(),
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--model.depth",
            "3",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("depth"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let c = cfg.to_str().unwrap();
    for args in [
        vec!["train", "--config", c, "--train.learning_rate", "-1"],
        vec!["train", "--config", c, "--model.num_heads", "3"],
        vec!["tune", "--config", c, "--trials", "0"],
        vec!["stats", "--data", "absent.csv"],
        vec!["frobnicate"],
    ] {
        let o = run(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn predict_is_deterministic_and_never_empty_with_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    assert!(
        run(tmp.path(), &["train", "--config", cfg.to_str().unwrap()])
            .status
            .success()
    );
    std::fs::write(
        tmp.path().join("texts.txt"),
        "anger_0 fear_1 filler\nqqq zzz xxx\n\njoy_2\n",
    )
    .unwrap();
    let args = ["predict", "--run", "runs/run-s5", "--input", "texts.txt"];
    let first = run(tmp.path(), &args);
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&run(tmp.path(), &args)));
    let rows: Vec<Value> = stdout(&first)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2]["id"], "line-4");
    for row in &rows {
        assert!(!row["labels"].as_array().unwrap().is_empty());
        assert_eq!(row["probs"].as_array().unwrap().len(), 5);
    }
    let total = |extra: &[&str]| -> usize {
        let o = run(tmp.path(), &[&args[..], extra, &["--no-fallback"]].concat());
        stdout(&o)
            .lines()
            .map(|l| {
                serde_json::from_str::<Value>(l).unwrap()["labels"]
                    .as_array()
                    .unwrap()
                    .len()
            })
            .sum()
    };
    assert!(total(&["--tau", "0.9"]) <= total(&[]));
}

#[test]
fn eval_of_a_run_matches_its_own_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    assert!(
        run(tmp.path(), &["train", "--config", cfg.to_str().unwrap()])
            .status
            .success()
    );
    let o = run(
        tmp.path(),
        &[
            "synth",
            "--n",
            "60",
            "--prevalence",
            "0.1,0.4,0.15,0.25,0.3",
            "--seed",
            "9",
            "--out",
            "held.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let direct = run(
        tmp.path(),
        &[
            "eval",
            "--run",
            "runs/run-s5",
            "--data",
            "held.csv",
            "--json",
            "--out",
            "ev",
        ],
    );
    assert!(direct.status.success(), "{}", stderr(&direct));
    assert!(tmp.path().join("ev/report.txt").exists());
    let o = run(
        tmp.path(),
        &[
            "predict",
            "--run",
            "runs/run-s5",
            "--input",
            "held.csv",
            "--out",
            "p.jsonl",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let via_file = run(
        tmp.path(),
        &[
            "eval",
            "--predictions",
            "p.jsonl",
            "--data",
            "held.csv",
            "--json",
        ],
    );
    assert!(via_file.status.success(), "{}", stderr(&via_file));
    assert_eq!(
        MetricsReport::from_json(&stdout(&direct)).unwrap(),
        MetricsReport::from_json(&stdout(&via_file)).unwrap()
    );
}

#[test]
fn run_with_mismatched_labels_is_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    assert!(
        run(tmp.path(), &["train", "--config", cfg.to_str().unwrap()])
            .status
            .success()
    );
    let path = tmp.path().join("runs/run-s5/manifest.json");
    let mut manifest = read_json(&path);
    manifest["labels"] = serde_json::json!(["a", "b", "c", "d"]);
    std::fs::write(&path, manifest.to_string()).unwrap();
    let o = run(
        tmp.path(),
        &["predict", "--run", "runs/run-s5", "--input", "exp.json"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));
}

#[test]
fn tune_writes_sorted_table_and_usable_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = bin()
        .args(["tune", "--config", cfg.to_str().unwrap(), "--trials", "4"])
        .args(["--tune.space.lr_min", "1e-3", "--tune.space.lr_max", "1e-2"])
        .args([
            "--tune.space.epochs",
            "[1,2]",
            "--tune.space.batch_sizes",
            "[16]",
        ])
        .env("IMBALML_THREADS", "2")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("runs/tune-s5");
    let tuning = read_json(&dir.join("tuning.json"));
    let trials = tuning["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 4);
    let f1: Vec<f64> = trials
        .iter()
        .map(|t| t["dev_macro_f1"].as_f64().unwrap())
        .collect();
    assert!(f1.windows(2).all(|w| w[0] >= w[1]));
    assert!(dir.join("tuning.txt").exists());

    let report = run(tmp.path(), &["report", "runs/tune-s5/tuning.json"]);
    assert_eq!(
        stdout(&report),
        std::fs::read_to_string(dir.join("tuning.txt")).unwrap()
    );

    let o = run(
        tmp.path(),
        &["train", "--config", "runs/tune-s5/best_profile.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read_json(&dir.join("run-s5/manifest.json"));
    assert_eq!(
        manifest["train"]["learning_rate"],
        tuning["best"]["learning_rate"]
    );
}

#[test]
fn single_trial_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = run(
        tmp.path(),
        &[
            "tune",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "1",
            "--tune.space.epochs",
            "[1]",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let tuning = read_json(&tmp.path().join("runs/tune-s5/tuning.json"));
    assert_eq!(tuning["trials"].as_array().unwrap().len(), 1);
    assert_eq!(tuning["trials"][0]["status"], "completed");
}

#[test]
fn synth_is_seeded_and_stats_match_frequencies() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = |seed: &str, out: &str| {
        run(
            tmp.path(),
            &[
                "synth",
                "--n",
                "150",
                "--prevalence",
                "0.05,0.5,0.2",
                "--seed",
                seed,
                "--out",
                out,
            ],
        )
    };
    assert!(synth("4", "a.jsonl").status.success());
    assert!(synth("4", "b.jsonl").status.success());
    assert!(synth("5", "c.jsonl").status.success());
    let read = |f: &str| std::fs::read(tmp.path().join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));

    let o = run(
        tmp.path(),
        &[
            "stats",
            "--data",
            "a.jsonl",
            "--labels",
            "class0,class1,class2",
            "--csv",
            "dist.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let space = LabelSpace::new(["class0", "class1", "class2"]).unwrap();
    let data = load_dataset(tmp.path().join("a.jsonl"), DataFormat::Jsonl, &space).unwrap();
    let freq = label_frequencies(&data);
    let csv = String::from_utf8(read("dist.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("class,count"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for ((row, name), count) in rows.iter().zip(space.names()).zip(&freq.counts) {
        assert_eq!(*row, format!("{name},{count}"));
    }
    assert!(stdout(&o).contains("fraction"));
}

#[test]
fn report_rerenders_saved_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixture("bert_counts");
    let o = run(
        &dir,
        &[
            "eval",
            "--predictions",
            "predictions.jsonl",
            "--data",
            "truth.csv",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
    );
    assert!(o.status.success());
    let again = run(tmp.path(), &["report", "report.json"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(
        stdout(&again),
        std::fs::read_to_string(tmp.path().join("report.txt")).unwrap()
    );
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn overrides_are_rejected_outside_train_and_tune() {
    let dir = fixture("bert_counts");
    let o = run(
        &dir,
        &[
            "eval",
            "--predictions",
            "predictions.jsonl",
            "--data",
            "truth.csv",
            "--train.seed",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_run_keeps_last_good_model_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = run(
        tmp.path(),
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--train.learning_rate",
            "1e300",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let dir = tmp.path().join("runs/run-s5");
    assert!(dir.join("model.ckpt").exists());
    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["history"]["stop_reason"]["kind"], "aborted");
}
