//! Command-line entry points. Exit codes: 0 success, 1 runtime failure,
//! 2 malformed input, 3 insufficient data for analysis.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{self, AnalysisError, AnalysisInput};
use crate::config::{Config, ProviderKind};
use crate::domain::UserId;
use crate::ingest::{by_user, quartile_gap_csv, quartile_gap_report, Dataset};
use crate::metrics::{metrics_csv, read_metrics_csv, MetricsOptions};
use crate::pipeline::Pipeline;
use crate::semantic::ClusterParams;
use crate::service::Engine;
use crate::simulate::{simulate, Scenario, SimulateError};
use crate::stats::{groups_csv, read_groups_csv};
use crate::store::encode_id;

#[derive(Debug, Parser)]
#[command(name = "selfportrait", version, about = "Editable interest portraits from rating histories")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-user work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize movies.csv, tags.csv and ratings.csv into the data directory.
    Ingest {
        /// Directory holding the three CSV files.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a portrait per qualifying user.
    Generate(GenerateArgs),
    /// Run a scenario on a virtual daily clock.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare groups on the log metrics.
    Analyze(AnalyzeArgs),
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated user ids; all users when absent.
    #[arg(long)]
    pub users: Option<String>,
    /// Anchor of the recent-year window. Defaults to the latest rating.
    #[arg(long)]
    pub reference_date: Option<DateTime<Utc>>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ProviderArg {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Experiment window, START/END.
    #[arg(long)]
    pub window: Option<String>,
    /// Baseline window, START/END.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Group CSV (user_id,group); groups come from edit counts otherwise.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Precomputed experiment metrics CSV, instead of logs.
    #[arg(long, requires = "baseline_metrics", requires = "groups")]
    pub metrics: Option<PathBuf>,
    /// Precomputed baseline metrics CSV.
    #[arg(long, requires = "metrics")]
    pub baseline_metrics: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Insufficient(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Input(_) => 2,
            CliError::Insufficient(_) => 3,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(input_err)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs a parsed command line; the caller maps the error to an exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(runtime)?;
    pool.install(|| match cli.command {
        Command::Ingest { input, out } => ingest(&input, &out.unwrap_or(cfg.data_dir.clone())),
        Command::Generate(args) => {
            if let Some(p) = args.provider {
                let kind = match p {
                    ProviderArg::Mock => ProviderKind::Mock,
                    ProviderArg::Http => ProviderKind::Http,
                };
                cfg.llm.kind = kind;
                cfg.embedding.kind = kind;
            }
            generate(&cfg, &args)
        }
        Command::Simulate { scenario, out } => run_simulation(&cfg, &scenario, &out),
        Command::Analyze(args) => analyze(&cfg, &args),
        Command::Serve { bind } => serve(&cfg, bind),
    })
}

fn ingest(input: &Path, out: &Path) -> Result<(), CliError> {
    let (dataset, s) = Dataset::ingest(input).map_err(input_err)?;
    dataset.write(out).map_err(runtime)?;
    println!(
        "movies={} tag_rows={} rating_rows={} duplicates_dropped={} ratings_kept={} users={}",
        s.movies,
        s.tag_rows,
        s.rating_rows,
        s.duplicates_dropped,
        dataset.ratings.len(),
        s.users
    );
    Ok(())
}

fn generate(cfg: &Config, args: &GenerateArgs) -> Result<(), CliError> {
    let dataset = Dataset::load(args.data.as_deref().unwrap_or(&cfg.data_dir)).map_err(input_err)?;
    let per_user = by_user(&dataset.ratings);
    let users: Vec<UserId> = match &args.users {
        None => per_user.keys().cloned().collect(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(UserId::from)
            .collect(),
    };
    if users.is_empty() {
        return Ok(());
    }
    let reference = args
        .reference_date
        .or_else(|| dataset.ratings.iter().map(|r| r.timestamp).max())
        .ok_or_else(|| input_err("no ratings to generate from"))?;
    let embedder = cfg.embedder().map_err(input_err)?;
    let summarizer = cfg.summarizer().map_err(input_err)?;
    let templates = cfg.templates().map_err(input_err)?;
    let pipeline = Pipeline {
        catalog: &dataset.catalog,
        embedder: embedder.as_ref(),
        summarizer: summarizer.as_ref(),
        templates: &templates,
        cluster_params: ClusterParams::default(),
        min_ratings: cfg.min_ratings,
    };
    let empty = Vec::new();
    let results: Vec<_> = users
        .par_iter()
        .map(|u| {
            let ratings = per_user.get(u).unwrap_or(&empty);
            (u, pipeline.generate(u, ratings, reference, reference, None))
        })
        .collect();

    let mut quartiles = Vec::new();
    let mut records = Vec::new();
    let mut skipped = String::from("user_id,reason\n");
    let (mut ok, mut skip, mut failed) = (0, 0, 0);
    for (user, result) in results {
        match result {
            Ok(g) => {
                let path = args.out.join("portraits").join(format!("{}.json", encode_id(user.as_str())));
                let mut json = serde_json::to_string_pretty(&g.portrait).map_err(runtime)?;
                json.push('\n');
                write(&path, json)?;
                quartiles.push(g.quartiles);
                records.push(g.record);
                ok += 1;
            }
            Err(e) => {
                if e.is_skip() {
                    skip += 1;
                } else {
                    tracing::error!(user = %user, error = %e, "generation failed");
                    failed += 1;
                }
                eprintln!("skipped {user}: {e}");
                skipped.push_str(&format!("{},{}\n", crate::ingest::csv_field(user.as_str()), crate::ingest::csv_field(&e.to_string())));
            }
        }
    }
    write(&args.out.join("quartile_gap.csv"), quartile_gap_csv(&quartile_gap_report(&quartiles)))?;
    write(&args.out.join("generations.jsonl"), crate::jsonl::to_string(&records))?;
    write(&args.out.join("skipped.csv"), skipped)?;
    println!("generated={ok} skipped={skip} failed={failed}");
    Ok(())
}

fn run_simulation(cfg: &Config, scenario: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(scenario).map_err(|e| input_err(format!("{}: {e}", scenario.display())))?;
    let s = Scenario::from_json(&text).map_err(input_err)?;
    let summary = simulate(
        &s,
        out,
        cfg.embedder().map_err(input_err)?,
        cfg.summarizer().map_err(input_err)?,
        cfg.templates().map_err(input_err)?,
        cfg.regeneration.policy(),
        cfg.min_ratings,
    )
    .map_err(|e| match e {
        SimulateError::Schema(_) => input_err(e),
        other => runtime(other),
    })?;
    println!(
        "users={} events={} edits={} initial_generations={} regenerations={} start={} end={}",
        summary.users,
        summary.events,
        summary.edits,
        summary.initial_generations,
        summary.regenerations,
        s.start.to_rfc3339(),
        s.end().to_rfc3339()
    );
    Ok(())
}

fn analysis_err(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::InsufficientData(m) => CliError::Insufficient(format!("insufficient data: {m}")),
        AnalysisError::BadWindow(_) => input_err(e),
        other => runtime(other),
    }
}

fn read_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn analyze(cfg: &Config, args: &AnalyzeArgs) -> Result<(), CliError> {
    let json = match args.format.as_str() {
        "csv" => false,
        "json" => true,
        other => return Err(input_err(format!("unknown format {other:?}"))),
    };
    let groups = match &args.groups {
        Some(p) => Some(read_groups_csv(read_file(p)?).map_err(|e| input_err(format!("{}: {e}", p.display())))?),
        None => None,
    };

    let (report, extra) = if let (Some(m), Some(b)) = (&args.metrics, &args.baseline_metrics) {
        let exp = read_metrics_csv(read_file(m)?).map_err(input_err)?;
        let base = read_metrics_csv(read_file(b)?).map_err(input_err)?;
        let groups = groups.unwrap_or_default();
        (analysis::analyze_metrics(&exp, &base, &groups).map_err(analysis_err)?, None)
    } else {
        let window = analysis::parse_window(
            args.window
                .as_deref()
                .ok_or_else(|| input_err("--window is required"))?,
        )
        .map_err(analysis_err)?;
        let baseline = match args.baseline.as_deref() {
            Some(b) => analysis::parse_window(b).map_err(analysis_err)?,
            None => return Err(CliError::Insufficient("insufficient data: no baseline window given".into())),
        };
        let dataset = Dataset::load(args.data.as_deref().unwrap_or(&cfg.data_dir)).map_err(input_err)?;
        let store = args.store.clone().unwrap_or(cfg.store_dir.clone());
        let input = AnalysisInput::from_store(&store, dataset.ratings.clone()).map_err(analysis_err)?;
        let embedder = cfg.embedder().map_err(input_err)?;
        let embeddings = analysis::movie_embeddings(&dataset.catalog, embedder.as_ref(), input.event_movies())
            .map_err(runtime)?;
        let options = MetricsOptions {
            session_gap: chrono::Duration::minutes(cfg.session_gap_minutes),
            unique_views: false,
        };
        let a = analysis::analyze(&input, window, baseline, groups.as_deref(), &embeddings, options)
            .map_err(analysis_err)?;
        (a.report.clone(), Some(a))
    };

    let text = if json { analysis::report_json(&report) } else { analysis::report_csv(&report) };
    if let Some(out) = &args.out {
        write(&out.join(if json { "report.json" } else { "report.csv" }), &text)?;
        if let Some(a) = &extra {
            write(&out.join("metrics_experiment.csv"), metrics_csv(&a.experiment))?;
            write(&out.join("metrics_baseline.csv"), metrics_csv(&a.baseline))?;
            write(&out.join("groups.csv"), groups_csv(&a.groups))?;
        }
    }
    for row in report.rows.iter().filter(|r| !r.warnings.is_empty()) {
        eprintln!("{} {}: {}", row.metric, row.test, row.warnings.join("; "));
    }
    print!("{text}");
    Ok(())
}

fn serve(cfg: &Config, bind: Option<String>) -> Result<(), CliError> {
    use crate::server::{AppState, SystemClock};
    let dataset = Dataset::load(&cfg.data_dir).map_err(input_err)?;
    let engine = Engine::new(
        dataset,
        cfg.embedder().map_err(input_err)?,
        cfg.summarizer().map_err(input_err)?,
        cfg.templates().map_err(input_err)?,
        cfg.regeneration.policy(),
        cfg.min_ratings,
    );
    let state = Arc::new(AppState::from_config(cfg, engine, Arc::new(SystemClock)).map_err(runtime)?);
    let bind = bind.unwrap_or(cfg.server.bind.clone());
    let every = std::time::Duration::from_secs(cfg.server.sweep_interval_secs.max(1));
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?
        .block_on(crate::server::serve(state, &bind, every))
        .map_err(runtime)
}
