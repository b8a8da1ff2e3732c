use crate::config::{Config, ProviderConfig};
use crate::server::{router, AppState};
use crate::service::{self, Service};
use crate::traces::TraceStore;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use finsql_core::evalkit::{aggregate, read_batch, BatchError, Evaluator};
use finsql_core::finstore::{AccountMapping, FixtureProfile, FormatKind, ProfileName};
use finsql_core::sqlgen::Status;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(
    name = "finsql",
    version,
    about = "Ask questions of a financial statement warehouse in plain language"
)]
pub struct Cli {
    /// Config file; `./finsql.toml` is used when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chat provider: scripted or remote.
    #[arg(long, global = true)]
    pub provider: Option<String>,
    /// Reply script for the scripted provider.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load statement files through the account mapping.
    Ingest(IngestArgs),
    /// Synthetic data sets.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
    /// The entity index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Answer one question and print the result table.
    Ask {
        question: String,
        #[arg(long)]
        multistep: bool,
        /// Print the full trace as JSON after the table.
        #[arg(long)]
        trace: bool,
    },
    /// Score a JSON-lines batch and print the metrics.
    Eval {
        batch: PathBuf,
        /// Reply script for the judge; the main provider judges otherwise.
        #[arg(long)]
        judge_script: Option<PathBuf>,
        /// Write one scored record per line here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        /// Overrides `server.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// bank, corporation or securities.
    #[arg(long)]
    pub format: FormatKind,
    /// Mapping file; the built-in mapping otherwise.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Stored as `date_added`; today when absent.
    #[arg(long)]
    pub date_added: Option<String>,
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Replace the warehouse contents with a fixture profile and rebuild the index.
    Seed { profile: ProfileName },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Rebuild the index from the warehouse and save it.
    Build,
}

impl Cli {
    pub fn run(self) -> Result<ExitCode> {
        let mut config = Config::load(self.config.as_deref())?;
        config.override_provider(self.provider.as_deref(), self.script.as_deref())?;
        match self.command {
            Command::Ingest(args) => ingest(&config, &args),
            Command::Fixtures(FixturesCommand::Seed { profile }) => seed(&config, profile),
            Command::Index(IndexCommand::Build) => index_build(&config),
            Command::Ask {
                question,
                multistep,
                trace,
            } => ask(config, &question, multistep, trace),
            Command::Eval {
                batch,
                judge_script,
                out,
            } => eval(config, &batch, judge_script, out.as_deref()),
            Command::Serve { bind } => serve(config, bind),
        }
    }
}

fn rebuild_index(config: &Config, warehouse: &finsql_core::finstore::Warehouse) -> Result<usize> {
    let fewshots = service::fewshots(config, warehouse)?;
    let index = service::build_fresh_index(warehouse, &fewshots, service::embedder(config)?)?;
    service::save_index(&index, &config.index_path())?;
    Ok(index.entries().len())
}

fn ingest(config: &Config, args: &IngestArgs) -> Result<ExitCode> {
    if !args.delimiter.is_ascii() {
        bail!("delimiter must be a single ASCII character");
    }
    let mut warehouse = service::open_warehouse(config)?;
    let mapping = match &args.mapping {
        Some(p) => AccountMapping::from_csv(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
            warehouse.catalog(),
        )
        .with_context(|| format!("reading mapping {}", p.display()))?,
        None => AccountMapping::builtin(warehouse.catalog()),
    };
    let date = args
        .date_added
        .clone()
        .unwrap_or_else(|| chrono::Local::now().format("%Y-%m-%d").to_string());
    let mut rejected = 0;
    for path in &args.files {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let report = warehouse
            .ingest_csv(file, args.delimiter as u8, args.format, &mapping, &date)
            .with_context(|| format!("ingesting {}", path.display()))?;
        println!(
            "{}: {} inserted, {} remapped, {} rejected",
            path.display(),
            report.inserted,
            report.remapped,
            report.rejected.len()
        );
        for r in &report.rejected {
            let line = r.line.map(|l| format!("line {l}: ")).unwrap_or_default();
            eprintln!("  {line}{:?}: {}", r.reason, r.detail);
        }
        rejected += report.rejected.len();
    }
    let entries = rebuild_index(config, &warehouse)?;
    println!("index rebuilt with {entries} entries");
    Ok(if rejected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn seed(config: &Config, profile: ProfileName) -> Result<ExitCode> {
    let mut warehouse = service::open_warehouse(config)?;
    warehouse.seed(&FixtureProfile::named(profile))?;
    for (table, n) in warehouse.table_counts()? {
        println!("{table:<30}{n:>8}");
    }
    let entries = rebuild_index(config, &warehouse)?;
    println!("index rebuilt with {entries} entries");
    Ok(ExitCode::SUCCESS)
}

fn index_build(config: &Config) -> Result<ExitCode> {
    let warehouse = service::open_warehouse(config)?;
    let entries = rebuild_index(config, &warehouse)?;
    println!("{entries} entries written to {}", config.index_path().display());
    Ok(ExitCode::SUCCESS)
}

/// Exit code per status: 0 answered, 2 exhausted, 1 failed.
pub fn status_code(status: Status) -> ExitCode {
    match status {
        Status::Answered => ExitCode::SUCCESS,
        Status::Exhausted => ExitCode::from(2),
        Status::Failed => ExitCode::FAILURE,
    }
}

fn ask(config: Config, question: &str, multistep: bool, show_trace: bool) -> Result<ExitCode> {
    if question.trim().is_empty() {
        bail!("question is empty");
    }
    let svc = Service::from_config(config)?;
    let gateway = svc.require_gateway()?.clone();
    let mut pc = svc.config.pipeline.clone();
    pc.multistep |= multistep;
    let outcome = svc.pipeline(gateway, pc).run(question);
    match (&outcome.status, &outcome.final_table) {
        (Status::Answered, Some(table)) => print!("{}", table.render_fixed_width(usize::MAX)),
        (Status::Exhausted, _) => eprintln!("no accepted answer after {} attempts", outcome.trace.attempts.len()),
        _ => eprintln!("failed: {}", outcome.trace.error.as_deref().unwrap_or("unknown error")),
    }
    if let Some(sql) = outcome.executed_sql().or(outcome.final_sql()) {
        eprintln!("\n{sql}");
    }
    if show_trace {
        println!("{}", serde_json::to_string_pretty(&outcome)?);
    }
    Ok(status_code(outcome.status))
}

fn eval(mut config: Config, batch: &Path, judge_script: Option<PathBuf>, out: Option<&Path>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(batch).with_context(|| format!("reading {}", batch.display()))?;
    let items = match read_batch(&text) {
        Ok(items) => items,
        Err(BatchError::Empty) => bail!("empty batch: {}", batch.display()),
        Err(e) => return Err(e).with_context(|| format!("in {}", batch.display())),
    };
    if let Some(script) = judge_script {
        config.judge = Some(ProviderConfig::Scripted { script });
    }
    let svc = Service::from_config(config)?;
    let gateway = svc.require_gateway()?.clone();
    let judge = svc.judge.clone().context(service::MISSING_PROVIDER)?;
    let evaluator = Evaluator::new(svc.pipeline(gateway, svc.config.pipeline.clone()), judge);
    let records = evaluator.evaluate(&items);
    if let Some(path) = out {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        for r in &records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    let report = aggregate(&records)?;
    print!("{}", report.render_table());
    Ok(ExitCode::SUCCESS)
}

pub fn app_state(svc: Arc<Service>) -> Result<AppState> {
    let cfg = &svc.config;
    let traces = TraceStore::open(cfg.trace_dir(), cfg.server.trace_capacity)
        .with_context(|| format!("opening trace store {}", cfg.trace_dir().display()))?;
    let api_key = match &cfg.server.api_key_env {
        Some(var) => Some(std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?),
        None => None,
    };
    Ok(AppState {
        deadline: cfg.server.ask_deadline(),
        traces,
        api_key,
        service: svc,
    })
}

fn serve(config: Config, bind: Option<String>) -> Result<ExitCode> {
    let bind = bind.unwrap_or_else(|| config.server.bind.clone());
    let origins = config.server.cors_origins.clone();
    // Providers hold blocking HTTP clients, which must be built outside the runtime.
    let svc = Arc::new(Service::from_config(config)?);
    if svc.gateway.is_none() {
        tracing::warn!("{}", service::MISSING_PROVIDER);
    }
    let app = router(app_state(svc)?, &origins);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("server error")
    })?;
    Ok(ExitCode::SUCCESS)
}
