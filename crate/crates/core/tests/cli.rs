use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phpvul::dataset::load;
use serde_json::Value;

mod common;

fn phpvul(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phpvul"))
        .args(args)
        .env_remove("PHPVUL_ENDPOINT")
        .output()
        .expect("spawn phpvul")
}

fn ok(args: &[&str]) -> Output {
    let out = phpvul(args);
    assert!(
        out.status.success(),
        "phpvul {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scan_reports_the_seeded_flows() {
    let dir = tempfile::tempdir().unwrap();
    let project = common::fixture("scan_project");
    let expected = fs::read_to_string(project.join("expected.tsv")).unwrap();
    for cwe in ["79", "89"] {
        let json = dir.path().join(format!("scan{cwe}.json"));
        let out = ok(&[
            "scan",
            s(&project),
            "--cwe",
            cwe,
            "--classifier",
            "rule",
            "--json",
            s(&json),
        ]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("# resolved configuration"), "{stderr}");
        let report: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        let bad: Vec<(String, u64)> = report["findings"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|f| f["label"] == "bad")
            .map(|f| {
                (
                    f["file"].as_str().unwrap().to_string(),
                    f["line"].as_u64().unwrap(),
                )
            })
            .collect();
        let mut want: Vec<(String, u64)> = expected
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split('\t').collect::<Vec<_>>())
            .filter(|c| c[0] == cwe)
            .map(|c| (c[1].to_string(), c[2].parse().unwrap()))
            .collect();
        want.sort();
        assert_eq!(bad, want, "CWE-{cwe}");
    }
}

#[test]
fn extract_classify_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = common::fixture("labeled/src");
    let unlabeled = dir.path().join("unlabeled.jsonl");
    ok(&[
        "extract",
        s(&src),
        "--cwe",
        "79",
        "--no-dedup",
        "-o",
        s(&unlabeled),
    ]);
    let samples = load(&unlabeled).unwrap();
    let cases = common::labeled_cases();
    let mut labels = String::from("# id\tlabel\n");
    for smp in &samples {
        let case = cases.iter().find(|c| c.file == smp.file).unwrap();
        labels.push_str(&format!("{}\t{}\n", smp.id, case.label));
    }
    let labels_path = dir.path().join("labels.tsv");
    fs::write(&labels_path, labels).unwrap();

    let labeled = dir.path().join("labeled.jsonl");
    ok(&[
        "extract",
        s(&src),
        "--cwe",
        "79",
        "--no-dedup",
        "--labels",
        s(&labels_path),
        "-o",
        s(&labeled),
    ]);
    let labeled_samples = load(&labeled).unwrap();
    assert_eq!(
        labeled_samples.len(),
        cases.iter().filter(|c| c.cwe.as_str() == "CWE-79").count()
    );
    assert!(labeled_samples.iter().all(|x| x.label.is_some()));

    let preds = dir.path().join("preds.jsonl");
    ok(&[
        "classify",
        "--input",
        s(&labeled),
        "--classifier",
        "rule",
        "-o",
        s(&preds),
    ]);
    let report = dir.path().join("report.json");
    let out = ok(&[
        "eval",
        "--preds",
        s(&preds),
        "--truth",
        s(&labeled),
        "--json",
        s(&report),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("F1"), "{text}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let c = &v["confusion"];
    let total: u64 = ["tp", "fp", "fn_", "tn"]
        .iter()
        .map(|k| c[k].as_u64().unwrap())
        .sum();
    assert_eq!(total as usize, labeled_samples.len());

    // Perfect predictions: the truth file doubles as a prediction file.
    let out = ok(&["eval", "--preds", s(&labeled), "--truth", s(&labeled)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("100.00"));
}

#[test]
fn no_normalize_keeps_names() {
    let dir = tempfile::tempdir().unwrap();
    let src = common::fixture("labeled/src");
    let raw = dir.path().join("raw.jsonl");
    ok(&[
        "extract",
        s(&src),
        "--cwe",
        "89",
        "--no-normalize",
        "-o",
        s(&raw),
    ]);
    let samples = load(&raw).unwrap();
    assert!(samples.iter().any(|x| x.code.contains("$sql")));
    assert!(samples.iter().all(|x| !x.code.contains("$var0")));
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let samples: Vec<_> = common::labeled_cases()
        .into_iter()
        .map(|c| c.sample)
        .collect();
    phpvul::dataset::persist(&samples, &raw).unwrap();
    let hosts = common::fixture("scan_project");
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("syn{run}.jsonl"));
        ok(&[
            "synth",
            "--raw",
            s(&raw),
            "--hosts",
            s(&hosts),
            "-T",
            "2",
            "--seed",
            "7",
            "-o",
            s(&out),
        ]);
        outputs.push(fs::read(&out).unwrap());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    for x in load(&dir.path().join("syn0.jsonl")).unwrap() {
        assert!(x.synthetic && x.origin.is_some() && x.label.is_some());
    }
}

#[test]
fn split_writes_three_files_and_counts_drops() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("ds");
    let out = ok(&[
        "split",
        "--mode",
        "project",
        "--input",
        s(&common::fixture("split/real.jsonl")),
        "--synthetic",
        s(&common::fixture("split/synthetic.jsonl")),
        "-o",
        s(&prefix),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("dropped 3 synthetic sample(s): unknown origin"),
        "{stderr}"
    );
    let mut total = 0;
    for split in ["train", "val", "test"] {
        let part = load(&dir.path().join(format!("ds.{split}.jsonl"))).unwrap();
        assert!(!part.is_empty(), "{split}");
        total += part.len();
    }
    assert!(total < 22 + 24);
}

#[test]
fn stats_and_dedup() {
    let dir = tempfile::tempdir().unwrap();
    let input = common::fixture("dedup/snippets.jsonl");
    let out = ok(&["stats", "--input", s(&input)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("CWE-79"));
    let kept = dir.path().join("kept.jsonl");
    ok(&[
        "dedup",
        "--input",
        s(&input),
        "--threshold",
        "0.9",
        "-o",
        s(&kept),
    ]);
    let n = load(&kept).unwrap().len();
    assert!(n < 50 && n > 0);
}

#[test]
fn exit_codes() {
    assert_eq!(phpvul(&["--help"]).status.code(), Some(0));
    assert_eq!(phpvul(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        phpvul(&["stats", "--input", "/nonexistent/x.jsonl"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        phpvul(&["dedup", "--input", "x", "--threshold", "2", "-o", "y"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(phpvul(&["scan", "/nonexistent/dir"]).status.code(), Some(1));
    // Remote classification without an endpoint is a usage error.
    let project = common::fixture("scan_project");
    assert_eq!(
        phpvul(&["scan", s(&project), "--classifier", "remote"])
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "seed = 1\nbogus = 2\n").unwrap();
    let out = phpvul(&[
        "--config",
        s(&cfg),
        "stats",
        "--input",
        s(&common::fixture("split/real.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn remote_scan_against_the_mock() {
    let server = phpvul::classify::mock::MockServer::start().unwrap();
    let project = common::fixture("scan_project");
    let out = ok(&[
        "scan",
        s(&project),
        "--classifier",
        "remote",
        "--endpoint",
        &server.base_url(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    // The mock flags exactly the snippets reading `$_GET`.
    assert!(text.contains("bad"), "{text}");
    assert!(server.requests() >= 1);
}
