use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use serde_json::{json, Value};
use storyreason::oracles::MockFixtures;
use storyreason_cli::{run, serve, EXIT_DATA, EXIT_OK, EXIT_SERVICE, EXIT_USAGE};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mock")
}

fn dataset() -> String {
    fixtures().join("dataset.jsonl").display().to_string()
}

fn pools() -> String {
    fixtures().join("pools.json").display().to_string()
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["storyreason"];
    full.extend_from_slice(args);
    run(full)
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

fn mock_url() -> &'static str {
    static URL: OnceLock<String> = OnceLock::new();
    URL.get_or_init(|| {
        let fx = MockFixtures::load(&fixtures()).unwrap();
        serve::spawn_background(fx, "127.0.0.1:0").unwrap()
    })
}

fn http_config(dir: &Path, base: &str) -> PathBuf {
    let path = dir.join("config.json");
    let cfg = json!({
        "endpoints": {
            "segmentation": base, "caption": base, "chat": base, "loss": base, "gradient": base
        },
        "max_retries": 1,
        "timeout_secs": 5
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn reason_mock(out: &Path, cache: &Path) -> String {
    let mock = p(&fixtures());
    let code = cli(&[
        "--mock", &mock, "--cache-dir", &p(cache), "reason", &dataset(), "--out", &p(out),
    ]);
    assert_eq!(code, EXIT_OK);
    std::fs::read_to_string(out).unwrap()
}

fn optimize_mock(out: &Path, extra: &[&str]) -> (String, String) {
    let mock = p(&fixtures());
    let (data, pools) = (dataset(), pools());
    let out_s = p(out);
    let mut args = vec![
        "--mock", &mock, "optimize", &data, "--pools", &pools, "--n", "12", "--batch", "4", "--seed", "7",
        "--out", &out_s,
    ];
    args.extend_from_slice(extra);
    if !extra.contains(&"--probe") {
        args.extend_from_slice(&["--probe", "2"]);
    }
    assert_eq!(cli(&args), EXIT_OK);
    (
        std::fs::read_to_string(out.join("result.json")).unwrap(),
        std::fs::read_to_string(out.join("trace.jsonl")).unwrap(),
    )
}

#[test]
fn reason_is_byte_identical_across_runs_and_cache_states() {
    let t = tempfile::tempdir().unwrap();
    let a = reason_mock(&t.path().join("a.jsonl"), &t.path().join("c1"));
    let b = reason_mock(&t.path().join("b.jsonl"), &t.path().join("c1"));
    let c = reason_mock(&t.path().join("c.jsonl"), &t.path().join("c2"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.lines().count(), 30);
}

#[test]
fn optimize_is_byte_identical_across_runs() {
    let t = tempfile::tempdir().unwrap();
    let first = optimize_mock(&t.path().join("a"), &[]);
    let second = optimize_mock(&t.path().join("b"), &[]);
    assert_eq!(first, second);
    let result: Value = serde_json::from_str(&first.0).unwrap();
    assert!(result["final_full_loss"].as_f64().unwrap() <= result["initial_full_loss"].as_f64().unwrap());
    assert_eq!(first.1.lines().count(), 12);
}

#[test]
fn remote_hints_match_probe_hints_in_process() {
    let t = tempfile::tempdir().unwrap();
    let probe = optimize_mock(&t.path().join("probe"), &[]);
    let remote = optimize_mock(&t.path().join("remote"), &["--hints", "remote"]);
    let full_probe = optimize_mock(&t.path().join("full"), &["--probe", "4"]);
    let without_config = |text: &str| {
        let mut v: Value = serde_json::from_str(text).unwrap();
        v.as_object_mut().unwrap().remove("config");
        v
    };
    assert_eq!(remote.1, full_probe.1);
    assert_eq!(without_config(&remote.0), without_config(&full_probe.0));
    assert_ne!(probe.1, full_probe.1);
}

fn canonical(label: &str) -> String {
    let l = label.trim().to_lowercase();
    match l.as_str() {
        "spouses" | "spouse" | "lovers" | "couple" => "loves/spouses".into(),
        _ => l,
    }
}

#[test]
fn evaluate_matches_an_independent_recount() {
    let t = tempfile::tempdir().unwrap();
    let preds_path = t.path().join("p.jsonl");
    let preds = reason_mock(&preds_path, &t.path().join("cache"));
    let report_path = t.path().join("report.json");
    let mock = p(&fixtures());
    assert_eq!(
        cli(&["--mock", &mock, "evaluate", &p(&preds_path), &dataset(), "--out", &p(&report_path)]),
        EXIT_OK
    );
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();

    let predicted: HashMap<String, Option<String>> = preds
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["record_id"].as_str().unwrap().to_string(), v["label"].as_str().map(str::to_string))
        })
        .collect();
    let mut total = 0;
    let mut correct = 0;
    for line in std::fs::read_to_string(dataset()).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        total += 1;
        let gold = canonical(v["label"].as_str().unwrap());
        if predicted[v["id"].as_str().unwrap()].as_deref() == Some(gold.as_str()) {
            correct += 1;
        }
    }
    assert_eq!(total, 30);
    assert_eq!(report["total"], total);
    assert_eq!(report["correct"], correct);
    assert!((report["accuracy"].as_f64().unwrap() - correct as f64 / total as f64).abs() < 1e-12);
    let per_label_total: u64 = report["per_label"].as_object().unwrap().values().map(|s| s["total"].as_u64().unwrap()).sum();
    assert_eq!(per_label_total, 30);
}

#[test]
fn evaluate_test_split_only() {
    let t = tempfile::tempdir().unwrap();
    let preds_path = t.path().join("p.jsonl");
    reason_mock(&preds_path, &t.path().join("cache"));
    let report_path = t.path().join("r.json");
    let mock = p(&fixtures());
    let code = cli(&[
        "--mock", &mock, "evaluate", &p(&preds_path), &dataset(), "--split", "test", "--out", &p(&report_path),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let test_count = std::fs::read_to_string(dataset()).unwrap().matches("\"split\": \"test\"").count();
    assert_eq!(report["total"], test_count);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let mock = p(&fixtures());
    let out = p(&t.path().join("o"));
    assert_eq!(cli(&["--mock", &mock, "optimize", &dataset(), "--out", &out]), EXIT_USAGE);
    assert_eq!(cli(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(cli(&["--help"]), EXIT_OK);
    assert_eq!(cli(&["reason", &dataset()]), EXIT_USAGE);
    assert_eq!(
        cli(&["--mock", &mock, "optimize", &dataset(), "--pools", &pools(), "--k", "0", "--out", &out]),
        EXIT_USAGE
    );
    assert_eq!(cli(&["--mock", &mock, "reason", "/nonexistent/data.jsonl"]), EXIT_DATA);
    let bad = t.path().join("bad.jsonl");
    std::fs::write(&bad, "not json\n").unwrap();
    assert_eq!(cli(&["--mock", &mock, "reason", &p(&bad)]), EXIT_DATA);

    let cfg = http_config(t.path(), "http://127.0.0.1:9");
    let image = p(&fixtures().join("images/office.png"));
    assert_eq!(cli(&["--config", &p(&cfg), "perceive", &image]), EXIT_SERVICE);
}

#[test]
fn binary_reports_exit_code() {
    let status = Command::new(env!("CARGO_BIN_EXE_storyreason"))
        .args(["optimize", "data.jsonl", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&status.stderr).contains("--pools"));
}

#[test]
fn manifest_records_seed_and_cache_counts() {
    let t = tempfile::tempdir().unwrap();
    let mock = p(&fixtures());
    let manifest = t.path().join("m.json");
    let cache = t.path().join("cache");
    for _ in 0..2 {
        let code = cli(&[
            "--mock", &mock, "--cache-dir", &p(&cache), "--manifest", &p(&manifest), "optimize", &dataset(),
            "--pools", &pools(), "--n", "2", "--seed", "11", "--out", &p(&t.path().join("o")),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "optimize");
    assert_eq!(m["seeds"], json!([11]));
    assert_eq!(m["cache_misses"], 0);
    assert!(m["cache_hits"].as_u64().unwrap() > 0);
    assert!(m["config"].get("api_token").is_none());
}

#[test]
fn http_backends_match_in_process_mocks() {
    let t = tempfile::tempdir().unwrap();
    let in_process = reason_mock(&t.path().join("a.jsonl"), &t.path().join("c"));
    let cfg = http_config(t.path(), mock_url());
    let out = t.path().join("b.jsonl");
    assert_eq!(cli(&["--config", &p(&cfg), "reason", &dataset(), "--out", &p(&out)]), EXIT_OK);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), in_process);

    let (data, pools) = (dataset(), pools());
    let local = optimize_mock(&t.path().join("local"), &["--hints", "remote"]);
    let remote_dir = t.path().join("remote");
    let code = cli(&[
        "--config", &p(&cfg), "optimize", &data, "--pools", &pools, "--n", "12", "--batch", "4", "--probe", "2",
        "--seed", "7", "--hints", "remote", "--out", &p(&remote_dir),
    ]);
    assert_eq!(code, EXIT_OK);
    let remote_result: Value =
        serde_json::from_str(&std::fs::read_to_string(remote_dir.join("result.json")).unwrap()).unwrap();
    let local_result: Value = serde_json::from_str(&local.0).unwrap();
    assert_eq!(remote_result, local_result);
    assert_eq!(std::fs::read_to_string(remote_dir.join("trace.jsonl")).unwrap(), local.1);
}

fn post(path: &str, body: Value) -> (u16, Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.post(&format!("{}{path}", mock_url())).send_json(&body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

#[test]
fn loss_wire_format() {
    let (status, body) = post("/v1/loss", json!({"prompt": "the colleagues met", "target": "colleagues friends"}));
    assert_eq!(status, 200);
    let obj = body.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["nll", "token_count"]);
    assert!((body["nll"].as_f64().unwrap() - 1.1).abs() < 1e-9);
    assert_eq!(body["token_count"], 2);

    let (status, body) = post("/v1/loss", json!({"prompt": "x", "target": "  "}));
    assert_eq!(status, 400);
    assert!(body["error"].is_string());
}

#[test]
fn segment_gradients_wire_format() {
    let segments = ["sys", "exp", "ctx", "guide"];
    let candidates = json!([["sys", "alt"], ["exp"], ["ctx", "colleagues"], ["guide"]]);
    let (status, body) = post(
        "/v1/segment_gradients",
        json!({
            "segments": segments,
            "candidates": candidates,
            "examples": [{"story": "P1 and P2 at a meeting.", "query": "P1 and P2?", "target": "colleagues"}]
        }),
    );
    assert_eq!(status, 200);
    let scores = body["scores"].as_array().unwrap();
    let shape: Vec<usize> = scores.iter().map(|r| r.as_array().unwrap().len()).collect();
    assert_eq!(shape, [2, 1, 2, 1]);
    let ctx: Vec<f64> = scores[2].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(ctx[1] > ctx[0]);

    let (status, _) = post(
        "/v1/segment_gradients",
        json!({"segments": ["a"], "candidates": [["b"]], "examples": []}),
    );
    assert_eq!(status, 502);
}

#[test]
fn healthz() {
    let mut resp = ureq::get(&format!("{}/healthz", mock_url())).call().unwrap();
    assert_eq!(resp.body_mut().read_to_string().unwrap(), "ok");
}
