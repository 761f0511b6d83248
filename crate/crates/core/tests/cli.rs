mod common;

use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Output};

use verichain::run::{read_results, ERRORS_FILE, RESULTS_FILE, RUN_FILE};
use verichain::Method;

use common::{fixture, read};

fn verichain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verichain"))
        .args(args)
        .env_remove("VERICHAIN_API_KEY")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn mock_run(dir: &Path, dataset: &str, methods: &str, extra: &[&str]) -> Output {
    let script = fixture("limit_script.json");
    let data = fixture(dataset);
    let out = dir.join("out");
    let cache = dir.join("cache");
    let datasets = format!("pubmedqa={}", s(&data));
    let mut args = vec![
        "run",
        "--mock",
        s(&script),
        "--datasets",
        &datasets,
        "--methods",
        methods,
        "--out",
        s(&out),
        "--cache-root",
        s(&cache),
    ];
    args.extend_from_slice(extra);
    verichain(&args)
}

#[test]
fn limit_and_method_filter() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock_run(dir.path(), "pubmedqa_eight.json", "two_phase", &["--limit", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = read_results(&dir.path().join("out").join(RESULTS_FILE)).unwrap();
    assert_eq!(results.len(), 5);
    assert!(results.iter().all(|r| r.method == Method::TwoPhase));
    let ids: HashSet<_> = results.iter().map(|r| r.question_id.as_str()).collect();
    assert_eq!(ids.len(), 5);

    let run: serde_json::Value = serde_json::from_str(&read(&dir.path().join("out").join(RUN_FILE))).unwrap();
    assert_eq!(run["config"]["limit"], 5);
    assert!(run["backend_id"].as_str().unwrap().starts_with("mock:"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Two-phase"));
}

#[test]
fn resume_skips_finished_work_and_drops_partial_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock_run(dir.path(), "pubmedqa_small.json", "ls,step", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("out").join(RESULTS_FILE);
    let complete = read(&path);
    assert_eq!(complete.lines().count(), 6);

    // simulate a crash halfway through writing the last record
    let cut = complete.len() - complete.lines().last().unwrap().len() / 2 - 1;
    std::fs::write(&path, &complete[..cut]).unwrap();

    let o = mock_run(dir.path(), "pubmedqa_small.json", "ls,step", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("5 resumed"), "{}", stderr(&o));
    let results = read_results(&path).unwrap();
    let keys: HashSet<_> = results.iter().map(|r| (r.question_id.clone(), r.method)).collect();
    assert_eq!(results.len(), 6);
    assert_eq!(keys.len(), 6);

    let o = mock_run(dir.path(), "pubmedqa_small.json", "ls,step", &[]);
    assert!(stderr(&o).contains("0 result(s) written, 6 resumed"), "{}", stderr(&o));
    assert_eq!(read_results(&path).unwrap().len(), 6);
}

#[test]
fn per_question_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("empty.json");
    std::fs::write(&script, r#"{"rules": []}"#).unwrap();
    let data = format!("pubmedqa={}", s(&fixture("pubmedqa_small.json")));
    let out = dir.path().join("out");
    let o = verichain(&[
        "run", "--mock", s(&script), "--datasets", &data, "--methods", "step", "--out", s(&out),
        "--cache-root", s(&dir.path().join("cache")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let errors = read(&out.join(ERRORS_FILE));
    assert_eq!(errors.lines().count(), 3);
    assert!(stderr(&o).contains("3 failure(s)"));
}

#[test]
fn invalid_config_fails_before_any_request() {
    let dir = tempfile::tempdir().unwrap();
    let data = format!("pubmedqa={}", s(&fixture("pubmedqa_small.json")));
    let out = dir.path().join("out");

    // no backend URL and no mock
    let o = verichain(&["run", "--datasets", &data, "--methods", "two_phase", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("base_url"), "{}", stderr(&o));
    assert!(!out.exists());

    // entropy methods with a single sample
    let cfg = dir.path().join("one_sample.json");
    std::fs::write(
        &cfg,
        r#"{"backend": {"base_url": "http://127.0.0.1:9", "capabilities": {"logprobs": true}}, "nli": {"base_url": "http://127.0.0.1:9"},
            "sampling": {"num_samples": 1}, "methods": ["se"]}"#,
    )
    .unwrap();
    let o = verichain(&["run", "-c", s(&cfg), "--datasets", &data, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("num_samples"), "{}", stderr(&o));
    assert!(!out.exists());

    // unknown keys are rejected
    std::fs::write(&cfg, r#"{"wokers": 2}"#).unwrap();
    let o = verichain(&["run", "-c", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wokers"), "{}", stderr(&o));
}

#[test]
fn report_export_and_cache_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let o = mock_run(dir.path(), "pubmedqa_small.json", "ls,two_phase", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = dir.path().join("out").join(RESULTS_FILE);

    let o = verichain(&["report", s(&results), "--csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,method,dataset,auroc,n_items,n_correct"));
    assert_eq!(lines.count(), 2);

    let o = verichain(&["report", s(&results)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Overall average"));

    let exported = dir.path().join("medqa.jsonl");
    let arg = format!("medqa={}", s(&fixture("medqa_small.jsonl")));
    let o = verichain(&["datasets", "export", "--dataset", &arg, "--limit", "2", "--out", s(&exported)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&exported).lines().count(), 2);

    let o = verichain(&["cache", "inspect", s(&dir.path().join("cache"))]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let on_disk = walkdir(&dir.path().join("cache"));
    assert!(text.contains(&format!("entries: {on_disk}")), "{text}");
    assert!(text.contains(&format!("{on_disk} miss(es)")), "{text}");
}

fn walkdir(root: &Path) -> usize {
    std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .map(|shard| std::fs::read_dir(shard).unwrap().count())
        .sum()
}
