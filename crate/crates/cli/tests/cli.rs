use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_entlink");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("ENTLINK_OUT")
        .args(args)
        .output()
        .expect("spawn entlink")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup(dir: &Path) {
    fs::write(dir.join("spec.txt"), "entities=8\nscenes=8\nepisodes=2\nmains=3\n").unwrap();
    fs::write(
        dir.join("cfg.txt"),
        "model=entlib\nepochs=2\nd_tok=6\nhidden=6\nk=4\nscenes_per_batch=4\nlearning_rate=0.01\n",
    )
    .unwrap();
    ok(dir, &["gen-synthetic", "--config", "spec.txt", "--seed", "2", "--out", "data"]);
}

#[test]
fn oracle_predictions_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok(d, &["train", "--config", "cfg.txt", "--corpus", "data/corpus.jsonl", "--out", "run"]);
    ok(d, &["eval", "--model", "run/model.bin", "--corpus", "data/corpus.jsonl", "--out", "ev"]);
    let text = fs::read_to_string(d.join("ev/predictions.jsonl")).unwrap();
    let mut oracle = String::new();
    for line in text.lines() {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        v["predicted"] = v["gold"].clone();
        oracle.push_str(&v.to_string());
        oracle.push('\n');
    }
    fs::write(d.join("oracle.jsonl"), oracle).unwrap();
    let report = ok(d, &["eval", "--predictions", "oracle.jsonl", "--corpus", "data/corpus.jsonl", "--out", "ev2"]);
    assert!(report.contains("all\t1.000000\t1.000000"), "{report}");
    assert!(report.contains("main\t1.000000\t1.000000"), "{report}");
}

#[test]
fn train_eval_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    for r in ["a", "b"] {
        ok(d, &["train", "--config", "cfg.txt", "--corpus", "data/corpus.jsonl", "--out", r]);
        ok(d, &["eval", "--model", &format!("{r}/model.bin"), "--corpus", "data/corpus.jsonl", "--out", r]);
    }
    for f in ["model.bin", "history.jsonl", "eval.txt", "predictions.jsonl"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/train.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["model"], "entlib");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn compare_with_itself_gives_p_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok(d, &["train", "--config", "cfg.txt", "--corpus", "data/corpus.jsonl", "--out", "run"]);
    let text = ok(
        d,
        &[
            "compare",
            "--model-a",
            "run/model.bin",
            "--model-b",
            "run/model.bin",
            "--corpus",
            "data/corpus.jsonl",
            "--iterations",
            "1000",
            "--out",
            "cmp",
        ],
    );
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with("\t1.000000")), "{text}");
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    fs::write(d.join("bad.txt"), "model=entlib\nlearning_rat=0.1\n").unwrap();
    let cases: [&[&str]; 3] = [
        &["train", "--config", "bad.txt", "--corpus", "data/corpus.jsonl"],
        &["train", "--config", "cfg.txt", "--corpus", "missing.jsonl"],
        &["eval", "--model", "nope.bin", "--corpus", "data/corpus.jsonl"],
    ];
    for args in cases {
        let out = run(d, args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error: "), "{err}");
    }
    let err = String::from_utf8(run(d, cases[0]).stderr).unwrap();
    assert!(err.contains("learning_rat"), "{err}");
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = Command::new(BIN)
        .current_dir(d)
        .env("ENTLINK_OUT", "envdir")
        .args(["gen-synthetic", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("envdir/corpus.jsonl").exists());
    assert!(d.join("envdir/gen-synthetic.manifest.json").exists());
}

#[test]
fn analyses_and_probes_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    fs::write(d.join("net.txt"), "model=entnet\nepochs=1\nd_tok=6\nhidden=6\nk=4\n").unwrap();
    ok(d, &["train", "--config", "net.txt", "--corpus", "data/corpus.jsonl", "--out", "run"]);
    for which in ["rsa", "pairs", "drift", "pca"] {
        ok(d, &["analyze", which, "--model", "run/model.bin", "--corpus", "data/corpus.jsonl", "--out", "an"]);
    }
    let ab = ok(
        d,
        &[
            "analyze",
            "ablation",
            "--model",
            "run/model.bin",
            "--corpus",
            "data/corpus.jsonl",
            "--updates",
            "false",
            "--out",
            "an",
        ],
    );
    assert!(ab.contains("mismatched\ttrue"), "{ab}");
    for which in ["descriptions", "attributes", "relations"] {
        ok(
            d,
            &[
                "probe",
                which,
                "--model",
                "run/model.bin",
                "--kb",
                "data/kb.tsv",
                "--catalog",
                "data/corpus.catalog.tsv",
                "--out",
                "pr",
            ],
        );
    }
    let params = ok(d, &["params", "--model", "run/model.bin", "--out", "pa"]);
    assert!(params.starts_with("model\tentnet\n"));
}
