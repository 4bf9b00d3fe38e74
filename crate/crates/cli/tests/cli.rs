use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn miko(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miko"))
        .current_dir(dir)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout={} stderr={}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn distill(dir: &Path, kb: &str, extra: &[&str]) -> Output {
    let corpus = fixtures().join("corpus7.jsonl");
    let images = fixtures().join("images");
    let mut args = vec![
        "distill",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        kb,
        "--backend",
        "mock",
        "--seed",
        "7",
        "--image-root",
        images.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    miko(dir, &args)
}

#[test]
fn distill_with_mock_backend_yields_seventy_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = distill(dir.path(), "kb", &["--parallel", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["intentions_written"], 70);
    assert_eq!(report["descriptions_written"], 4);
    assert_eq!(report["keyinfo_written"], 7);
    let on_disk: Value = serde_json::from_slice(&std::fs::read(dir.path().join("kb/report.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);

    let stats = miko(dir.path(), &["kb-stats", "--kb", "kb", "--json"]);
    assert_eq!(stats.status.code(), Some(0));
    let stats = stdout_json(&stats);
    let sum: u64 = stats["per_relation"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(sum, 70);
    assert_eq!(stats["total"], 70);

    let table = miko(dir.path(), &["kb-stats", "--kb", "kb"]);
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["total", "70"]));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("miko.toml"), "cache_dir = \"from-config\"\n[mock]\nseed = 7\n").unwrap();
    let out = distill(dir.path(), "kb", &["--config", "miko.toml", "--cache-dir", "from-flag"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let count = |d: &str| walk(&dir.path().join(d));
    assert_eq!(count("from-config"), 0);
    assert_eq!(count("from-flag"), 81);
}

fn walk(dir: &Path) -> usize {
    let Ok(entries) = std::fs::read_dir(dir) else { return 0 };
    entries
        .map(|e| e.unwrap().path())
        .map(|p| if p.is_dir() { walk(&p) } else { 1 })
        .sum()
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("secret.toml"), "[llm]\napi_key = \"sk-1\"\n").unwrap();
    std::fs::write(dir.path().join("zero.toml"), "parallel = 0\n").unwrap();
    for cfg in ["secret.toml", "zero.toml", "missing.toml"] {
        let out = distill(dir.path(), "kb", &["--config", cfg]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    assert_eq!(distill(dir.path(), "kb", &["--parallel", "0"]).status.code(), Some(2));
}

#[test]
fn strict_turns_failures_into_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "Concept: x\\nAction: y\\nObject: z\\nEmotion: w\\nKeywords: a, b";
    std::fs::write(
        dir.path().join("replies.jsonl"),
        format!("{{\"id\":\"keyinfo:p5\",\"text\":\"{bad}\"}}\n{{\"id\":\"keyinfo:p5:retry1\",\"text\":\"{bad}\"}}\n"),
    )
    .unwrap();
    std::fs::write(dir.path().join("miko.toml"), "[mock]\nfixtures = \"replies.jsonl\"\n").unwrap();

    let lenient = distill(dir.path(), "kb1", &["--config", "miko.toml"]);
    assert_eq!(lenient.status.code(), Some(0));
    let report = stdout_json(&lenient);
    assert_eq!(report["posts_failed"], 1);
    assert_eq!(report["intentions_written"], 60);

    let strict = distill(dir.path(), "kb2", &["--config", "miko.toml", "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn metrics_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.jsonl"), "1\n1\n0\n0\n").unwrap();
    std::fs::write(dir.path().join("p.jsonl"), "1\n0\n1\n0\n").unwrap();
    let out = miko(dir.path(), &["metrics", "--gold", "g.jsonl", "--pred", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    let m = stdout_json(&out);
    for k in ["acc", "p", "r", "f1"] {
        assert_eq!(m[k], 50.0);
    }
}

#[test]
fn metrics_aligns_by_id() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.jsonl"), "{\"id\":\"a\",\"label\":1}\n{\"id\":\"b\",\"label\":0}\n").unwrap();
    std::fs::write(dir.path().join("p.jsonl"), "{\"id\":\"b\",\"pred\":0}\n{\"id\":\"a\",\"pred\":1}\n").unwrap();
    let m = stdout_json(&miko(dir.path(), &["metrics", "--gold", "g.jsonl", "--pred", "p.jsonl"]));
    assert_eq!(m["acc"], 100.0);

    std::fs::write(dir.path().join("bad.jsonl"), "1\n2\n").unwrap();
    let out = miko(dir.path(), &["metrics", "--gold", "bad.jsonl", "--pred", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(miko(dir.path(), &["bogus"]).status.code(), Some(2));
    assert_eq!(miko(dir.path(), &["distill"]).status.code(), Some(2));
    assert_eq!(miko(dir.path(), &["kb-stats", "--kb", "absent"]).status.code(), Some(2));
    let help = miko(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    for sub in [
        "ingest",
        "distill",
        "kb-stats",
        "sample",
        "annotate-serve",
        "aggregate",
        "export-benchmark",
        "eval",
        "export-instructions",
        "augment",
        "metrics",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
}

#[test]
fn ingest_writes_generic_jsonl_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("raw.tsv"), "id\ttext\timage\n1\thello\t1.jpg\n2\tworld\t\n2\tdup\t\n").unwrap();
    let out = miko(dir.path(), &["ingest", "--source", "raw.tsv", "--out", "posts.jsonl", "--require-image"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = stdout_json(&out);
    assert_eq!(manifest["total_kept"], 1);
    assert_eq!(manifest["dropped_missing_image"], 1);
    assert_eq!(manifest["duplicate_ids"], 1);
    assert_eq!(std::fs::read_to_string(dir.path().join("posts.jsonl")).unwrap().lines().count(), 1);
    assert!(dir.path().join("posts.manifest.json").exists());
}

#[test]
fn annotation_session_commands() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(distill(dir.path(), "kb", &[]).status.code(), Some(0));
    let out = miko(dir.path(), &["sample", "--kb", "kb", "--session", "s", "--n", "5", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["posts"], 5);
    assert_eq!(
        miko(dir.path(), &["sample", "--kb", "kb", "--session", "s"]).status.code(),
        Some(1)
    );

    let agg = miko(dir.path(), &["aggregate", "--kb", "kb", "--session", "s", "--typicality-csv", "t.csv"]);
    assert_eq!(agg.status.code(), Some(0));
    assert_eq!(stdout_json(&agg), Value::Array(vec![]));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("t.csv")).unwrap(),
        "post_id,relation,annotator_id,value\n"
    );
    let export = miko(dir.path(), &["export-benchmark", "--kb", "kb", "--session", "s", "--out", "b.jsonl"]);
    assert_eq!(export.status.code(), Some(1));
}

#[test]
fn export_instructions_and_augment() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(distill(dir.path(), "kb", &[]).status.code(), Some(0));
    let out = miko(dir.path(), &["export-instructions", "--kb", "kb", "--out", "inst.jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<Value> = std::fs::read_to_string(dir.path().join("inst.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 7);
    assert!(lines.iter().all(|c| c["turns"].as_array().unwrap().len() == 20));

    let corpus = fixtures().join("corpus7.jsonl");
    let out = miko(
        dir.path(),
        &["augment", "--corpus", corpus.to_str().unwrap(), "--kb", "kb", "--variant", "Text+INTE", "--out", "aug.jsonl"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["count"], 7);
    let first: Value = serde_json::from_str(
        std::fs::read_to_string(dir.path().join("aug.jsonl")).unwrap().lines().next().unwrap(),
    )
    .unwrap();
    assert!(first["text"].as_str().unwrap().contains(" [SEP] "));
}

#[test]
fn eval_identical_candidates_score_one_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let prov = r#"{"caption_used":false,"keyinfo_digest":"","template_versions":{},"model_id":"m","temperature":0.0}"#;
    let mut bench = String::new();
    let mut cands = String::new();
    for (post, rel, text) in [("a", "xWant", "to go home early"), ("b", "Open", "share a photo of the sea")] {
        bench.push_str(&format!(
            "{{\"post_id\":\"{post}\",\"relation\":\"{rel}\",\"gold_text\":\"{text}\",\"source_provenance\":{prov}}}\n"
        ));
        cands.push_str(&format!(
            "{{\"post_id\":\"{post}\",\"relation\":\"{rel}\",\"text\":\"{text}\",\"model_name\":\"copy\"}}\n"
        ));
    }
    std::fs::write(dir.path().join("bench.jsonl"), bench).unwrap();
    std::fs::write(dir.path().join("cand.jsonl"), cands).unwrap();
    let out = miko(
        dir.path(),
        &["eval", "--benchmark", "bench.jsonl", "--candidates", "cand.jsonl", "--out", "report.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["average"], 100.0);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("model,xWant,oEffect,xAttr,xIntent,xReact,oReact,oWant,xEffect,xNeed,Open,Average\n"));
}

#[test]
fn annotate_serve_answers_http() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(distill(dir.path(), "kb", &[]).status.code(), Some(0));
    assert_eq!(
        miko(dir.path(), &["sample", "--kb", "kb", "--session", "s", "--n", "2"]).status.code(),
        Some(0)
    );
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_miko"))
        .current_dir(dir.path())
        .args(["annotate-serve", "--kb", "kb", "--session", "s", "--addr", &addr])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    let stream = loop {
        match TcpStream::connect(&addr) {
            Ok(s) => break Some(s),
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(_) => break None,
        }
    };
    let response = stream.map(|mut s| {
        write!(s, "GET /api/tasks/next?annotator=a HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut buf = String::new();
        s.read_to_string(&mut buf).unwrap();
        buf
    });
    child.kill().unwrap();
    child.wait().unwrap();
    let response = response.expect("server did not start");
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"task\""));
}
