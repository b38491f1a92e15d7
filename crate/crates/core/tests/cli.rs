use std::path::Path;
use std::process::{Command, Output};

fn s2a(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2a"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&s2a(dir.path(), &["--help"])), 0);
    assert_eq!(code(&s2a(dir.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&s2a(dir.path(), &[])), 1);
    assert_eq!(code(&s2a(dir.path(), &["transmogrify"])), 1);
    assert_eq!(code(&s2a(dir.path(), &["render", "--score", "x.mid"])), 1);
    assert_eq!(code(&s2a(dir.path(), &["demo-data", "--performers", "0"])), 1);

    std::fs::write(dir.path().join("bad.json"), r#"{"version": 1, "train": {"batch_size": 0}}"#).unwrap();
    assert_eq!(code(&s2a(dir.path(), &["--config", "bad.json", "train"])), 1);
    std::fs::write(dir.path().join("typo.json"), r#"{"version": 1, "trian": {}}"#).unwrap();
    assert_eq!(code(&s2a(dir.path(), &["--config", "typo.json", "demo-data"])), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.mid"), b"MThd\x00\x00").unwrap();
    let out = s2a(dir.path(), &["tokenize", "--input", "junk.mid", "--output", "t.tsv"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&s2a(dir.path(), &["tokenize", "--input", "missing.mid", "--output", "t.tsv"])), 2);
    assert_eq!(code(&s2a(dir.path(), &["train", "--corpus", "nowhere"])), 2);
}

#[test]
fn evaluation_without_pairs_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("pred")).unwrap();
    std::fs::create_dir(dir.path().join("target")).unwrap();
    let out = s2a(
        dir.path(),
        &["evaluate", "--pred-dir", "pred", "--target-dir", "target", "--output-dir", "out"],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let run = |args: &[&str]| {
        let out = s2a(p, args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["demo-data", "--pieces", "3", "--notes", "40", "--performers", "1", "--seed", "4"]);
    assert!(p.join("data/corpus.json").exists());
    run(&["tokenize", "--input", "data/scores/piece_000.mid", "--output", "tok.tsv", "--score"]);
    let tsv = std::fs::read_to_string(p.join("tok.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 41);
    run(&[
        "align",
        "--score",
        "data/scores/piece_000.mid",
        "--performance",
        "data/performances/piece_000.mid",
        "--output",
        "map.json",
    ]);
    run(&["train", "--steps", "3"]);
    assert!(p.join("out/model.s2a").exists());
    assert_eq!(std::fs::read_to_string(p.join("out/train_log.csv")).unwrap().lines().count(), 4);
    run(&["render", "--score", "data/scores/piece_001.mid", "--output", "one.mid"]);
    run(&["render"]);
    run(&["synth"]);
    let stdout = run(&["evaluate"]).stdout;
    assert!(!stdout.is_empty());
    for f in ["report.json", "report.csv", "report.txt"] {
        assert!(p.join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn zero_piece_corpus_is_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let out = s2a(dir.path(), &["demo-data", "--pieces", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
