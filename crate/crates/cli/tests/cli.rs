use std::path::Path;
use std::process::{Command, Output};

fn hmmlstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmlstm"))
        .args(args)
        .env_remove("HMMLSTM_DATA")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn tiny_corpus(dir: &Path) -> String {
    let p = dir.join("tiny.txt");
    std::fs::write(&p, "to be or not to be, that is the question.\n".repeat(40)).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn help_succeeds_and_bad_usage_exits_1() {
    assert_eq!(code(&hmmlstm(&["--help"])), 0);
    assert_eq!(code(&hmmlstm(&[])), 1);
    assert_eq!(code(&hmmlstm(&["train"])), 1);
    assert_eq!(code(&hmmlstm(&["train", "--method", "bogus"])), 1);
    assert_eq!(
        code(&hmmlstm(&[
            "train",
            "--method",
            "hybrid",
            "--hidden-dim",
            "3"
        ])),
        1
    );
    assert_eq!(code(&hmmlstm(&["fetch-data", "--dataset", "nope"])), 1);
}

#[test]
fn missing_and_empty_data_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let o = hmmlstm(&[
        "train",
        "--method",
        "discrete_hmm",
        "--hmm-states",
        "2",
        "--dataset",
        "/no/such/file",
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 2);
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let o = hmmlstm(&[
        "gibbs",
        "--hmm-states",
        "2",
        "--dataset",
        empty.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_eval_and_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_corpus(dir.path());
    let out = dir.path().join("out");
    let outs = out.to_str().unwrap();
    let common = [
        "--dataset",
        data.as_str(),
        "--epochs",
        "1",
        "--iters",
        "3",
        "--seed",
        "4",
        "--out",
        outs,
    ];

    let o = hmmlstm(
        &[
            &["train", "--method", "lstm", "--hidden-dim", "3"],
            &common[..],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = hmmlstm(
        &[
            &["hybrid", "--hidden-dim", "3", "--hmm-states", "2"],
            &common[..],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = hmmlstm(&[&["gibbs", "--hmm-states", "2"], &common[..]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let md = std::fs::read_to_string(out.join("results.md")).unwrap();
    assert!(md.starts_with("| Data | Method | Parameters |"));

    let ckpt = out.join("checkpoints").join("tiny-hybrid-h3-n2-s4");
    assert!(ckpt.join("manifest.json").exists());
    assert!(ckpt.join("frozen_hmm").join("manifest.json").exists());
    let o = hmmlstm(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed = String::from_utf8(o.stdout).unwrap();
    let row = csv.lines().find(|l| l.contains(",hybrid,")).unwrap();
    let validation: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    assert!(
        printed.contains(&format!("validation={validation:.6}")),
        "{printed} vs {row}"
    );

    let merged = dir.path().join("merged");
    let o = hmmlstm(&[
        "table",
        out.join("results.csv").to_str().unwrap(),
        "--out",
        merged.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read_to_string(merged.join("results.csv")).unwrap(),
        csv
    );
}

#[test]
fn tampered_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_corpus(dir.path());
    let out = dir.path().join("out");
    let o = hmmlstm(&[
        "train",
        "--method",
        "lstm",
        "--hidden-dim",
        "2",
        "--epochs",
        "1",
        "--dataset",
        &data,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let ckpt = out.join("checkpoints").join("tiny-lstm-h2-s0");
    let blob = std::fs::read_dir(&ckpt)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&blob, bytes).unwrap();
    let o = hmmlstm(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn visualize_and_tree_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_corpus(dir.path());
    let out = dir.path().join("out");
    let o = hmmlstm(&[
        "visualize",
        "--dataset",
        &data,
        "--hidden-dim",
        "3",
        "--hmm-states",
        "3",
        "--clusters",
        "3",
        "--epochs",
        "1",
        "--iters",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let html = std::fs::read_to_string(out.join("report.html")).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>"));

    let o = hmmlstm(&[
        "tree",
        "--dataset",
        &data,
        "--hidden-dim",
        "3",
        "--epochs",
        "1",
        "--format",
        "dot",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .starts_with("digraph tree {"));
    let o = hmmlstm(&[
        "tree",
        "--dataset",
        &data,
        "--hidden-dim",
        "3",
        "--dim",
        "3",
    ]);
    assert_eq!(code(&o), 1);
}
