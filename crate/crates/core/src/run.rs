//! End-to-end benchmark run: load, score with a worker pool, persist, report.
//!
//! Output directory layout:
//!
//! - `run.json`: resolved config, backend id and start timestamp
//! - `results.jsonl`: one `UncertaintyResult` per line, in job order
//! - `errors.jsonl`: failures from this invocation
//! - `report.txt`, `report.csv`: AUROC tables over every stored result

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{
    ChatBackend, Gateway, MockBackend, MockScript, OpenAiBackend, OpenAiConfig, ResponseCache,
    RetryPolicy, RunStats, SamplingParams,
};
use crate::config::{RunConfig, API_KEY_ENV};
use crate::datasets::{load_dataset, subsample, DatasetKind, QARecord};
use crate::entailment::{HttpNliJudge, MockJudge, NliJudge};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, build_report, BenchmarkReport, Cell, ScoredItem};
use crate::method::Method;
use crate::pipeline::{Engine, EngineSettings, UncertaintyResult};
use crate::verification::ChainSettings;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_CSV_FILE: &str = "report.csv";

/// A (question, method) that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub dataset: DatasetKind,
    pub question_id: String,
    pub method: Method,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub questions: usize,
    /// Results written by this invocation.
    pub scored: usize,
    /// Results already present from an earlier invocation.
    pub resumed: usize,
    pub failures: Vec<FailureRecord>,
    pub stats: RunStats,
    pub report: Option<BenchmarkReport>,
}

/// Backend and NLI judge, built from config or injected by the caller.
pub struct Services {
    pub backend: Arc<dyn ChatBackend>,
    pub judge: Arc<dyn NliJudge>,
}

impl Services {
    /// Scripted mock backend and table judge from one script file.
    pub fn mock(script: MockScript) -> Result<Self> {
        let judge = match &script.nli {
            Some(v) => MockJudge::from_value(v)?,
            None => MockJudge::new(Default::default()),
        };
        Ok(Self {
            backend: Arc::new(MockBackend::new(script)),
            judge: Arc::new(judge),
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        if let Some(path) = &cfg.mock {
            return Self::mock(MockScript::load(path)?);
        }
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let retry = RetryPolicy {
            attempts: cfg.backend.retry_attempts,
            initial_backoff: Duration::from_millis(cfg.backend.retry_backoff_ms),
        };
        let base_url = cfg
            .backend
            .base_url
            .clone()
            .ok_or_else(|| Error::Config("backend.base_url is required".into()))?;
        let backend = OpenAiBackend::new(OpenAiConfig {
            base_url,
            model: cfg.backend.model.clone(),
            api_key: api_key.clone(),
            capabilities: cfg.backend.capabilities,
            timeout: Duration::from_secs(cfg.backend.timeout_secs),
            retry,
        })?;
        let judge: Arc<dyn NliJudge> = match &cfg.nli.base_url {
            Some(url) => Arc::new(HttpNliJudge::new(
                url,
                api_key,
                Duration::from_secs(cfg.nli.timeout_secs),
                retry,
            )?),
            // only reachable when no selected method needs NLI
            None => Arc::new(MockJudge::new(Default::default())),
        };
        Ok(Self {
            backend: Arc::new(backend),
            judge,
        })
    }
}

pub fn engine_settings(cfg: &RunConfig) -> EngineSettings {
    EngineSettings {
        chain: ChainSettings {
            answer_max_tokens: cfg.sampling.answer_max_tokens,
            verify_max_tokens: cfg.sampling.verify_max_tokens,
        },
        sampling: SamplingParams {
            temperature: cfg.sampling.temperature,
            num_samples: cfg.sampling.num_samples,
            max_tokens: cfg.sampling.answer_max_tokens,
            want_logprobs: false,
            seed: Some(cfg.seed),
        },
        entailment: cfg.entailment.clone(),
    }
}

/// Load every configured dataset and apply the seeded `limit`.
pub fn load_questions(cfg: &RunConfig) -> Result<Vec<QARecord>> {
    let mut all = Vec::new();
    for (&kind, path) in &cfg.datasets {
        let records = load_dataset(kind, path)?;
        all.extend(subsample(records, cfg.limit, cfg.seed));
    }
    Ok(all)
}

type ResultKey = (DatasetKind, String, Method);

fn key_of(r: &UncertaintyResult) -> ResultKey {
    (r.dataset, r.question_id.clone(), r.method)
}

/// Read stored results, dropping a trailing partial line left by an
/// interrupted write.
pub fn read_results(path: &Path) -> Result<Vec<UncertaintyResult>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut out = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: UncertaintyResult = serde_json::from_str(line).map_err(|e| Error::DatasetParse {
            path: path.to_path_buf(),
            failures: vec![format!("line {}: {e}", i + 1)],
        })?;
        out.push(r);
    }
    Ok(out)
}

fn truncate_partial_line(path: &Path) -> Result<()> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(());
    };
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        log::warn!("{}: dropping partial trailing line", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

struct Job<'a> {
    record: &'a QARecord,
    methods: Vec<Method>,
}

/// Run with services built from the config.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let mock_logprobs = match &cfg.mock {
        Some(p) => Some(MockScript::load(p)?.logprobs),
        None => None,
    };
    cfg.validate(mock_logprobs)?;
    let services = Services::from_config(cfg)?;
    run_with(cfg, services)
}

/// Run with caller-supplied services. Config is validated against the
/// backend's declared capabilities before any call is made.
pub fn run_with(cfg: &RunConfig, services: Services) -> Result<RunSummary> {
    cfg.validate(Some(services.backend.capabilities().logprobs))?;
    let questions = load_questions(cfg)?;

    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let cache = ResponseCache::open(&cfg.cache_root)?;
    let gateway = Arc::new(Gateway::new(services.backend, Some(cache)));
    let engine = Engine::new(gateway.clone(), services.judge, engine_settings(cfg), cfg.backend.model.clone());

    write_run_file(cfg, gateway.backend_id())?;

    let results_path = cfg.out.join(RESULTS_FILE);
    truncate_partial_line(&results_path)?;
    let existing = read_results(&results_path)?;
    let done: HashSet<ResultKey> = existing.iter().map(key_of).collect();

    let jobs: Vec<Job> = questions
        .iter()
        .filter_map(|record| {
            let methods: Vec<Method> = cfg
                .methods
                .iter()
                .copied()
                .filter(|&m| !done.contains(&(record.dataset, record.id.clone(), m)))
                .collect();
            (!methods.is_empty()).then_some(Job { record, methods })
        })
        .collect();

    let mut results_out = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&results_path)
            .map_err(|e| Error::io(&results_path, e))?,
    );
    let errors_path = cfg.out.join(ERRORS_FILE);
    let mut errors_out =
        BufWriter::new(File::create(&errors_path).map_err(|e| Error::io(&errors_path, e))?);

    let mut scored = 0;
    let mut failures = Vec::new();
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.min(jobs.len()).max(1);

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, engine) = (&jobs, &next, &engine);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let outcomes = engine.score_question(job.record, &job.methods);
                if tx.send((i, outcomes)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // single writer: flush strictly in job order
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for (i, outcomes) in rx {
            pending.insert(i, outcomes);
            while let Some(outcomes) = pending.remove(&cursor) {
                let record = jobs[cursor].record;
                for (method, outcome) in outcomes {
                    match outcome {
                        Ok(r) => {
                            serde_json::to_writer(&mut results_out, &r)?;
                            results_out.write_all(b"\n").map_err(|e| Error::io(&results_path, e))?;
                            scored += 1;
                        }
                        Err(e) => {
                            let f = FailureRecord {
                                dataset: record.dataset,
                                question_id: record.id.clone(),
                                method,
                                error: e.to_string(),
                            };
                            log::error!("{} {} {}: {}", f.dataset, f.question_id, f.method, f.error);
                            serde_json::to_writer(&mut errors_out, &f)?;
                            errors_out.write_all(b"\n").map_err(|e| Error::io(&errors_path, e))?;
                            failures.push(f);
                        }
                    }
                }
                results_out.flush().map_err(|e| Error::io(&results_path, e))?;
                cursor += 1;
            }
        }
        Ok(())
    })?;
    errors_out.flush().map_err(|e| Error::io(&errors_path, e))?;
    drop(results_out);

    let stats = gateway.stats();
    if let Some(cache) = gateway.cache() {
        cache.write_run_stats(&stats)?;
    }

    // a run where every question failed has nothing to tabulate
    let all = read_results(&results_path)?;
    let report = if all.is_empty() {
        None
    } else {
        let report = report_from_results(&all)?;
        write_report(&cfg.out, &report)?;
        Some(report)
    };

    Ok(RunSummary {
        questions: questions.len(),
        scored,
        resumed: existing.len(),
        failures,
        stats,
        report,
    })
}

fn write_run_file(cfg: &RunConfig, backend_id: &str) -> Result<()> {
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "started_unix": started,
        "backend_id": backend_id,
        "config": cfg,
    });
    let path = cfg.out.join(RUN_FILE);
    fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn write_report(dir: &Path, report: &BenchmarkReport) -> Result<()> {
    let text = dir.join(REPORT_TEXT_FILE);
    fs::write(&text, report.render_text()).map_err(|e| Error::io(&text, e))?;
    let csv = dir.join(REPORT_CSV_FILE);
    fs::write(&csv, report.render_csv()).map_err(|e| Error::io(&csv, e))
}

/// AUROC cells per (model, method, dataset). Single-class cells stay in the
/// report as undefined.
pub fn report_from_results(results: &[UncertaintyResult]) -> Result<BenchmarkReport> {
    let mut groups: BTreeMap<(String, Method, DatasetKind), Vec<ScoredItem>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for r in results {
        if !seen.insert((r.model.clone(), key_of(r))) {
            return Err(Error::ContractViolation(format!(
                "duplicate result for {} {} {}",
                r.dataset, r.question_id, r.method
            )));
        }
        groups
            .entry((r.model.clone(), r.method, r.dataset))
            .or_default()
            .push(ScoredItem::new(r.score, r.correct));
    }
    if groups.is_empty() {
        return Err(Error::Config("no results to report".into()));
    }
    let cells = groups
        .into_iter()
        .map(|((model, method, dataset), items)| {
            let value = match auroc(&items) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(Cell {
                model,
                method,
                dataset,
                auroc: value,
                n_items: items.len(),
                n_correct: items.iter().filter(|i| i.correct).count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_report(cells)
}

/// Read and merge result files for `verichain report`.
pub fn report_from_files(paths: &[PathBuf]) -> Result<BenchmarkReport> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_results(p)?);
    }
    report_from_results(&all)
}
