use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use verichain::backend::inspect_cache;
use verichain::config::RunConfig;
use verichain::datasets::{export_jsonl, load_dataset, subsample, DatasetKind};
use verichain::run::{report_from_files, run};
use verichain::Method;

#[derive(Parser)]
#[command(name = "verichain", version, about = "Uncertainty estimation benchmarks for medical QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every configured question under the selected methods.
    Run(RunArgs),
    /// Re-render the AUROC tables from stored result files.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
    #[command(subcommand)]
    Datasets(DatasetsCommand),
    #[command(subcommand)]
    Cache(CacheCommand),
}

#[derive(Subcommand)]
enum DatasetsCommand {
    /// Write normalized records as JSONL.
    Export {
        /// `kind=path`, e.g. `pubmedqa=data/ori_pqal.json`.
        #[arg(long = "dataset", required = true)]
        datasets: Vec<String>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Entry count, size, corrupted entries and last-run hit statistics.
    Inspect {
        #[arg(default_value = ".verichain-cache")]
        root: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Scripted mock backend; no network access.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Comma-separated, e.g. `two_phase,se`.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// `kind` to restrict configured datasets, or `kind=path` to add one.
    #[arg(long, value_delimiter = ',')]
    datasets: Option<Vec<String>>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_root: Option<PathBuf>,
}

fn parse_dataset_arg(s: &str) -> anyhow::Result<(DatasetKind, Option<PathBuf>)> {
    match s.split_once('=') {
        Some((k, p)) => Ok((k.parse()?, Some(PathBuf::from(p)))),
        None => Ok((s.parse()?, None)),
    }
}

fn resolve_config(args: RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = args.mock {
        cfg.mock = Some(m);
    }
    if let Some(m) = args.methods {
        cfg.methods = m;
    }
    if let Some(list) = args.datasets {
        let mut keep = std::collections::BTreeMap::new();
        for item in list {
            let (kind, path) = parse_dataset_arg(&item)?;
            let path = match path.or_else(|| cfg.datasets.get(&kind).cloned()) {
                Some(p) => p,
                None => bail!("dataset `{kind}` has no path; pass `{kind}=<path>`"),
            };
            keep.insert(kind, path);
        }
        cfg.datasets = keep;
    }
    if args.limit.is_some() {
        cfg.limit = args.limit;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    if let Some(c) = args.cache_root {
        cfg.cache_root = c;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve_config(args)?;
            let summary = run(&cfg)?;
            eprintln!(
                "{} question(s); {} result(s) written, {} resumed; cache {} hit(s), {} miss(es)",
                summary.questions, summary.scored, summary.resumed, summary.stats.hits, summary.stats.misses
            );
            if let Some(report) = &summary.report {
                print!("{}", report.render_text());
            }
            if summary.failures.is_empty() {
                return Ok(ExitCode::SUCCESS);
            }
            eprintln!("{} failure(s):", summary.failures.len());
            for f in &summary.failures {
                eprintln!("  {} {} {}: {}", f.dataset, f.question_id, f.method, f.error);
            }
            Ok(ExitCode::from(1))
        }
        Command::Report { files, csv } => {
            let report = report_from_files(&files)?;
            if csv {
                print!("{}", report.render_csv());
            } else {
                print!("{}", report.render_text());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Datasets(DatasetsCommand::Export {
            datasets,
            limit,
            seed,
            out,
        }) => {
            let mut records = Vec::new();
            for d in datasets {
                let (kind, path) = parse_dataset_arg(&d)?;
                let path = path.with_context(|| format!("`{d}`: expected kind=path"))?;
                records.extend(subsample(load_dataset(kind, &path)?, limit, seed));
            }
            match out {
                Some(p) => {
                    let f = std::fs::File::create(&p).with_context(|| p.display().to_string())?;
                    export_jsonl(&records, std::io::BufWriter::new(f))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    export_jsonl(&records, &mut lock)?;
                    lock.flush()?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Cache(CacheCommand::Inspect { root }) => {
            let s = inspect_cache(&root)?;
            println!("root: {}", root.display());
            println!("entries: {}", s.entries);
            println!("bytes: {}", s.bytes);
            match s.last_run {
                Some(r) => println!("last run: {} hit(s), {} miss(es)", r.hits, r.misses),
                None => println!("last run: none"),
            }
            for p in &s.corrupted {
                println!("corrupted: {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
