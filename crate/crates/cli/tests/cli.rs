use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revdict_core::checkpoint::Checkpoint;
use revdict_core::dataset::{write_dataset, Dataset, Manifest, Splits};
use revdict_core::embeddings::write_fixture;
use revdict_core::model::Model;
use revdict_core::ranking::EvalReport;
use revdict_core::synth::overfit_set;

fn revdict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revdict"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = revdict(args);
    assert!(
        out.status.success(),
        "revdict {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Overfit {
    _dir: tempfile::TempDir,
    single: PathBuf,
    multi: PathBuf,
    data: PathBuf,
    checkpoint: PathBuf,
    instances: Vec<revdict_core::dataset::Instance>,
    emb: revdict_core::embeddings::Embeddings,
}

/// Trains a small attention model that memorises 16 definitions, which serve
/// as train, dev and test split alike.
fn overfit() -> Overfit {
    let dir = tempfile::tempdir().unwrap();
    let (emb, instances) = overfit_set(3, 16, 8, 3);
    let (single, multi) = write_fixture(&emb, dir.path()).unwrap();
    let data = dir.path().join("data");
    let n = instances.len();
    write_dataset(
        &Dataset {
            splits: Splits {
                train: instances.clone(),
                dev: instances.clone(),
                test: instances.clone(),
            },
            manifest: Manifest {
                seed: 3,
                train: n,
                dev: n,
                test: n,
                rows_read: 3 * n,
                rejected_multiword: 0,
                dropped: Default::default(),
            },
        },
        &data,
    )
    .unwrap();
    let checkpoint = dir.path().join("model.json");
    ok(&[
        "train",
        "--dataset",
        s(&data),
        "--single",
        s(&single),
        "--multi",
        s(&multi),
        "--hidden-dim",
        "16",
        "--batch-size",
        "8",
        "--lr",
        "0.01",
        "--max-epochs",
        "150",
        "--patience",
        "150",
        "--seed",
        "3",
        "--out",
        s(&checkpoint),
    ]);
    Overfit {
        _dir: dir,
        single,
        multi,
        data,
        checkpoint,
        instances,
        emb,
    }
}

#[test]
fn build_dataset_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    ok(&[
        "gen-fixtures",
        "--out",
        s(&fx),
        "--words",
        "60",
        "--dim",
        "8",
        "--synsets",
        "300",
    ]);
    let build = |out: &str| {
        ok(&[
            "build-dataset",
            "--glosses",
            s(&fx.join("glosses.tsv")),
            "--single",
            s(&fx.join("single.txt")),
            "--multi",
            s(&fx.join("multi.tsv")),
            "--seed",
            "11",
            "--out",
            s(&dir.path().join(out)),
        ])
    };
    assert_eq!(build("a"), build("b"));
    for file in ["train.tsv", "dev.tsv", "test.tsv", "manifest.json"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn missing_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = revdict(&[
        "build-dataset",
        "--glosses",
        s(&missing),
        "--single",
        s(&missing),
        "--multi",
        s(&missing),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = revdict(&[
        "evaluate",
        "--checkpoint",
        s(&missing),
        "--dataset",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Missing required option.
    assert_eq!(revdict(&["evaluate"]).status.code(), Some(1));
}

#[test]
fn zero_learning_rate_leaves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    ok(&[
        "gen-fixtures",
        "--out",
        s(&fx),
        "--words",
        "60",
        "--dim",
        "8",
        "--synsets",
        "300",
    ]);
    let data = dir.path().join("data");
    let (single, multi, glosses) = (
        fx.join("single.txt"),
        fx.join("multi.tsv"),
        fx.join("glosses.tsv"),
    );
    let emb_args = ["--single", s(&single), "--multi", s(&multi)];
    let mut args = vec!["build-dataset", "--glosses", s(&glosses), "--out", s(&data)];
    args.extend(emb_args);
    ok(&args);

    let ckpt_path = dir.path().join("model.json");
    let mut args = vec![
        "train",
        "--dataset",
        s(&data),
        "--hidden-dim",
        "8",
        "--lr",
        "0",
        "--max-epochs",
        "1",
        "--seed",
        "5",
        "--out",
        s(&ckpt_path),
    ];
    args.extend(emb_args);
    let stdout = ok(&args);
    assert!(stdout.starts_with("epoch\t"), "{stdout}");

    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    let init = Model::new(ckpt.config, ckpt.embedding_dim);
    assert_eq!(ckpt.params, init.params);
    assert_eq!(ckpt.train.unwrap().lr, 0.0);
    assert!(ckpt.embeddings.is_some());
}

#[test]
fn trained_model_evaluates_queries_and_studies() {
    let fx = overfit();
    let ckpt = s(&fx.checkpoint);

    // Evaluation: the checkpoint remembers its embeddings.
    let eval = || {
        ok(&[
            "evaluate",
            "--checkpoint",
            ckpt,
            "--dataset",
            s(&fx.data),
            "--json",
        ])
    };
    let first = eval();
    assert_eq!(first, eval());
    let report: EvalReport = serde_json::from_str(first.trim()).unwrap();
    assert_eq!(report.acc_at_10, 1.0, "{report:?}");
    assert_eq!(report.n, fx.instances.len());
    let table = ok(&[
        "evaluate",
        "--checkpoint",
        ckpt,
        "--dataset",
        s(&fx.data),
        "--split",
        "dev",
    ]);
    assert!(table.starts_with(EvalReport::HEADER));

    // Local query with trace.
    let inst = &fx.instances[2];
    let mut args = vec![
        "query",
        "--checkpoint",
        ckpt,
        "--json",
        "--trace",
        "--top-k",
        "3",
    ];
    args.extend(inst.tokens.iter().map(String::as_str));
    let resp: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(resp["candidates"][0]["word"], inst.target.as_str());
    assert_eq!(resp["candidates"].as_array().unwrap().len(), 3);
    for row in resp["trace"].as_array().unwrap() {
        let sum: f64 = row["weights"]
            .as_array()
            .unwrap()
            .iter()
            .map(|w| w.as_f64().unwrap())
            .sum();
        assert!((sum - 1.0).abs() <= 1e-6, "{row}");
    }
    let human = ok(&[
        "query",
        "--checkpoint",
        ckpt,
        "--trace",
        &inst.tokens.join(" "),
    ]);
    assert!(human.contains("attention"), "{human}");
    assert_eq!(
        revdict(&["query", "--checkpoint", ckpt, "  "])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        revdict(&["query", "--checkpoint", ckpt, "--top-k", "0", "w1"])
            .status
            .code(),
        Some(1)
    );

    // Study: label the first token of every instance as its first sense.
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.tsv");
    let mut text = String::from("# instance\tposition\tlabel\n");
    for (i, inst) in fx.instances.iter().enumerate() {
        let k = fx.emb.multi.sense_count(&inst.tokens[0]).unwrap_or(0);
        let label = if k > 1 { "0" } else { "MONO" };
        text.push_str(&format!("{i}\t0\t{label}\n"));
    }
    std::fs::write(&labels, text).unwrap();
    let study = || {
        ok(&[
            "study",
            "--checkpoint",
            ckpt,
            "--dataset",
            s(&fx.data),
            "--labels",
            s(&labels),
            "--json",
        ])
    };
    let first = study();
    assert_eq!(first, study());
    let report: serde_json::Value = serde_json::from_str(first.trim()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);

    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let out = revdict(&[
        "study",
        "--checkpoint",
        ckpt,
        "--dataset",
        s(&fx.data),
        "--labels",
        s(&empty),
        "--single",
        s(&fx.single),
        "--multi",
        s(&fx.multi),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
