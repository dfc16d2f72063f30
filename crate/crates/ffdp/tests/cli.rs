//! End-to-end checks of the `ffdp` binary.

use std::path::Path;
use std::process::Command;

use ffdp::conllu::write_conllu;
use ffdp::synth::projective_treebank;

fn ffdp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ffdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_treebank(path: &Path, count: usize, seed: u64) {
    let sents = projective_treebank(count, seed);
    std::fs::write(path, write_conllu(&sents, None).unwrap()).unwrap();
}

#[test]
fn train_parse_eval_bench_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let train = tmp.path().join("train.conllu");
    let test = tmp.path().join("test.conllu");
    write_treebank(&train, 30, 1);
    write_treebank(&test, 10, 2);
    let model_dir = tmp.path().join("model");

    let out = ffdp(&[
        "train",
        train.to_str().unwrap(),
        "--template",
        "no-gd-d",
        "--epochs",
        "2",
        "--hidden",
        "32",
        "--dev",
        test.to_str().unwrap(),
        "--out",
        model_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("input_dim\t540"), "stdout: {stdout}");
    assert!(stdout.contains("dev_las"));
    for artifact in ["model.bin", "vocab.txt", "manifest.json", "runlog.tsv"] {
        assert!(model_dir.join(artifact).exists(), "missing {artifact}");
    }

    let parsed = tmp.path().join("parsed.conllu");
    let out = ffdp(&[
        "parse",
        "--model",
        model_dir.to_str().unwrap(),
        test.to_str().unwrap(),
        "--out",
        parsed.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "parse failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&parsed).unwrap();
    assert_eq!(text.matches("\n\n").count(), 10);

    let out = ffdp(&[
        "eval",
        "--model",
        model_dir.to_str().unwrap(),
        test.to_str().unwrap(),
        "--runs",
        "1",
    ]);
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("las\t"));
    assert!(stdout.contains("kt_per_sec\t"));

    let out = ffdp(&[
        "bench",
        "--model",
        model_dir.to_str().unwrap(),
        test.to_str().unwrap(),
        "--runs",
        "2",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("per_run\t"));

    // comparing the parser's output against gold-as-predictions
    let out = ffdp(&[
        "compare",
        test.to_str().unwrap(),
        parsed.to_str().unwrap(),
        test.to_str().unwrap(),
        "--iterations",
        "200",
    ]);
    assert!(
        out.status.success(),
        "compare failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("p_value\t"));
    assert!(stdout.contains("las_b\t100.0000"));
}

#[test]
fn grid_writes_table_and_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let train = tmp.path().join("train.conllu");
    let test = tmp.path().join("test.conllu");
    write_treebank(&train, 30, 3);
    write_treebank(&test, 8, 4);
    let out_dir = tmp.path().join("grid");

    let out = ffdp(&[
        "grid",
        "--train",
        train.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--systems",
        "arc-standard",
        "--templates",
        "standard,no-gd-d",
        "--epochs",
        "1",
        "--hidden",
        "16",
        "--runs",
        "1",
        "--iterations",
        "200",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "grid failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("no-gd-d"), "stdout: {stdout}");
    assert!(out_dir.join("results.txt").exists());
    let jsonl = std::fs::read_to_string(out_dir.join("results.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2);
    // the non-baseline cell is compared against the baseline cell
    assert!(jsonl.contains("\"p_value\":"));
    assert!(out_dir
        .join("arc-standard_no-gd-d_r0/predicted.conllu")
        .exists());
}

#[test]
fn rejects_bad_flags_and_missing_files() {
    let out = ffdp(&["train", "/nonexistent.conllu", "--out", "/tmp/x-ffdp-none"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = ffdp(&["train", "x.conllu", "--reduce", "35", "--out", "/tmp/y"]);
    assert!(!out.status.success());

    let out = ffdp(&[
        "train",
        "x.conllu",
        "--system",
        "arc-eager",
        "--out",
        "/tmp/y",
    ]);
    assert!(!out.status.success());
}
