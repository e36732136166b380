mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::scattered;
use kgnav::controllers::ControllerConfig;
use tempfile::TempDir;

fn kgnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgnav"))
        .current_dir(dir)
        .env_remove("LLM_URL")
        .env_remove("EMBEDDER_URL")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let lines: Vec<String> = rows.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// Temp workspace holding corpus.jsonl and questions.jsonl from the scattered fixture.
fn workspace() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let s = scattered();
    write_jsonl(&dir.path().join("corpus.jsonl"), &s.docs);
    write_jsonl(&dir.path().join("questions.jsonl"), &s.questions);
    let root = dir.path().to_path_buf();
    (dir, root)
}

const DATA: [&str; 4] = ["--corpus", "corpus.jsonl", "--questions", "questions.jsonl"];

fn with_data<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(DATA);
    v.extend(extra);
    v
}

#[test]
fn help_lists_every_controller_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgnav(dir.path(), &["--help"]);
    assert!(out.status.success());
    let help = stdout(&out);
    let fields = serde_json::to_value(ControllerConfig::default()).unwrap();
    for key in fields.as_object().unwrap().keys() {
        let flag = format!("--{}", key.replace('_', "-"));
        assert!(help.contains(&flag), "{flag} missing from --help");
    }
}

#[test]
fn build_ask_eval_diagnose_export() {
    let (_tmp, dir) = workspace();
    let out = kgnav(&dir, &with_data("build", &[]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("kgnav-out/snapshot.json").is_file());
    assert!(stdout(&out).contains("entities"));

    let out = kgnav(
        &dir,
        &[
            "ask",
            "Where did Marlow Vance hide the stolen ledger?",
            "--json",
            "--frozen-clock",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v.to_string().contains("s01#c00000"));
    assert!(dir.join("kgnav-out/traces/ask/heuristic.jsonl").is_file());

    let out = kgnav(
        &dir,
        &with_data("eval", &["--bootstrap-resamples", "200", "--frozen-clock"]),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("kgnav-out/report.json").is_file());
    assert!(dir.join("kgnav-out/traces/heuristic").is_dir());

    let out = kgnav(&dir, &["diagnose"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("failures"));

    let out = kgnav(&dir, &["export-triples"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let triples = fs::read_to_string(dir.join("kgnav-out/triples.nt")).unwrap();
    assert!(triples.lines().count() > 40);
}

#[test]
fn frozen_clock_reports_are_byte_identical() {
    let (_tmp, dir) = workspace();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = kgnav(
            &dir,
            &with_data(
                "eval",
                &[
                    "--out-dir",
                    run,
                    "--bootstrap-resamples",
                    "300",
                    "--frozen-clock",
                    "--parallelism",
                    "3",
                ],
            ),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        reports.push(fs::read(dir.join(run).join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn exit_codes() {
    let (_tmp, dir) = workspace();
    // usage: unknown flag, and no corpus for build
    assert_eq!(kgnav(&dir, &["build", "--bogus"]).status.code(), Some(1));
    assert_eq!(kgnav(&dir, &["build"]).status.code(), Some(1));
    // validation: bad setting value, malformed or missing corpus
    assert_eq!(
        kgnav(&dir, &with_data("ask", &["x?", "--k", "0"])).status.code(),
        Some(2)
    );
    fs::write(dir.join("bad.jsonl"), "{not json\n").unwrap();
    let out = kgnav(&dir, &["build", "--corpus", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert_eq!(
        kgnav(&dir, &["build", "--corpus", "missing.jsonl"]).status.code(),
        Some(2)
    );
    // runtime: the snapshot cannot be written under a regular file
    let out = kgnav(&dir, &with_data("build", &["--out-dir", "corpus.jsonl"]));
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn diagnose_requires_trace_directory() {
    let (_tmp, dir) = workspace();
    let out = kgnav(
        &dir,
        &with_data("eval", &["--bootstrap-resamples", "100", "--controllers", "vector"]),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    fs::remove_dir_all(dir.join("kgnav-out/traces")).unwrap();
    let out = kgnav(&dir, &with_data("diagnose", &[]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trace directory"));
}

#[test]
fn config_file_and_flag_override() {
    let (_tmp, dir) = workspace();
    fs::write(dir.join("run.conf"), "corpus = corpus.jsonl\nk = 5\n").unwrap();
    let out = kgnav(
        &dir,
        &[
            "ask",
            "--config",
            "run.conf",
            "--json",
            "--controller",
            "vector",
            "Marlow Vance?",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["evidence"]["items"].as_array().map(Vec::len), Some(5), "{v}");
    let out = kgnav(
        &dir,
        &[
            "ask",
            "--config",
            "run.conf",
            "--k",
            "3",
            "--json",
            "--controller",
            "vector",
            "Marlow Vance?",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["evidence"]["items"].as_array().map(Vec::len), Some(3));
}
