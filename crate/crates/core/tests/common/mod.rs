#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use verichain::backend::{MockBackend, MockScript};
use verichain::config::RunConfig;
use verichain::entailment::MockJudge;
use verichain::run::{run_with, RunSummary, Services};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Golden-run config with output and cache redirected under `dir`.
pub fn golden_config(dir: &Path, workers: usize) -> RunConfig {
    let mut cfg = RunConfig::load(&fixture("golden_run/config.json")).unwrap();
    cfg.out = dir.join("out");
    cfg.cache_root = dir.join("cache");
    cfg.workers = workers;
    cfg
}

pub struct MockRun {
    pub summary: RunSummary,
    pub backend: Arc<MockBackend>,
    pub judge: Arc<MockJudge>,
}

/// Run `cfg` against its mock script, keeping handles to the mocks so
/// call counts can be checked afterwards.
pub fn run_mock(cfg: &RunConfig) -> MockRun {
    let script = MockScript::load(cfg.mock.as_ref().expect("mock script configured")).unwrap();
    let judge = Arc::new(match &script.nli {
        Some(v) => MockJudge::from_value(v).unwrap(),
        None => MockJudge::new(Default::default()),
    });
    let backend = Arc::new(MockBackend::new(script));
    let services = Services {
        backend: backend.clone(),
        judge: judge.clone(),
    };
    let summary = run_with(cfg, services).unwrap();
    MockRun {
        summary,
        backend,
        judge,
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Compare `actual` against a checked-in golden file, or rewrite the file
/// when `UPDATE_GOLDEN` is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = read(&path);
    assert!(
        expected == actual,
        "{} differs from the golden copy; rerun with UPDATE_GOLDEN=1 after reviewing",
        path.display()
    );
}
