//! `docrag` command-line front end.
//!
//! Settings resolve as flag, then config file (TOML), then `DOCRAG_*`
//! environment variable, then built-in default. Provider endpoints and keys
//! are read from the environment only.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use docrag_core::cost::{cost_report, PricingConfig};
use docrag_core::embed::{embedder_from_tag, Embedder, HttpEmbedder};
use docrag_core::eval::{load_dataset, run_eval, EvalOptions};
use docrag_core::generation::{answer_question, FixtureMockLlm, HttpLlm, LlmProvider, LookupMockLlm, RetryingLlm};
use docrag_core::index::{MetadataFilter, RetrievalConfig, DEFAULT_K};
use docrag_core::pipeline::{ingest_dir, IngestOptions};
use docrag_core::preprocess::{ChartProvider, FixtureChartProvider};
use docrag_core::{DefaultTokenizer, Error, LocalHashEmbedder, TableFormat, VectorIndex, DEFAULT_CHUNK_SIZE};

#[derive(Parser)]
#[command(name = "docrag", version, about = "Index financial report layouts and answer questions over them")]
struct Cli {
    /// TOML config file (also read from DOCRAG_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a directory of layout payloads.
    Ingest(IngestArgs),
    /// Answer one question against an index.
    Query(QueryArgs),
    /// Score a QA dataset and write a JSON report.
    Eval(EvalArgs),
    /// Print per-page parsing costs and per-call model costs.
    Cost(CostArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    table_format: Option<TableFormat>,
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Directory of pre-rendered chart CSVs, laid out as `<doc>/p<page>-f<n>.csv`.
    #[arg(long)]
    charts: Option<PathBuf>,
    /// `local` or `http`.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long)]
    embed_dimension: Option<usize>,
}

#[derive(Args)]
struct ProviderArgs {
    /// `mock`, `fixture` or `http`.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Question-to-answer JSON map used by the `fixture` provider.
    #[arg(long)]
    answers: Option<PathBuf>,
    /// Retry transient provider failures.
    #[arg(long)]
    retry: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long)]
    k: Option<usize>,
    /// `field=value`, repeatable.
    #[arg(long = "filter")]
    filters: Vec<MetadataFilter>,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Print the full answer as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Model used to price each call.
    #[arg(long)]
    cost_model: Option<String>,
    #[arg(long)]
    pricing: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    pricing: Option<PathBuf>,
    #[arg(long)]
    tokens_per_page: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    table_format: Option<String>,
    chunk_size: Option<usize>,
    embedder: Option<String>,
    embed_model: Option<String>,
    embed_dimension: Option<usize>,
    k: Option<usize>,
    workers: Option<usize>,
    provider: Option<String>,
    model: Option<String>,
    cost_model: Option<String>,
    pricing: Option<PathBuf>,
    tokens_per_page: Option<u32>,
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(err: E) -> Self {
        let err = err.into();
        Self::new(err.kind(), err.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let message = err.to_string();
            report_error(&CliError::new("usage", message.trim_end()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(&err);
            ExitCode::FAILURE
        }
    }
}

fn report_error(err: &CliError) {
    let body = serde_json::json!({ "error": { "kind": err.kind, "message": err.message } });
    eprintln!("{body}");
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.or_else(|| std::env::var_os("DOCRAG_CONFIG").map(PathBuf::from));
    let file = match config_path {
        Some(path) => load_config(&path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Ingest(args) => ingest(args, &file),
        Command::Query(args) => query(args, &file),
        Command::Eval(args) => eval(args, &file),
        Command::Cost(args) => cost(args, &file),
    }
}

fn load_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
}

/// Flag, then config file, then `DOCRAG_<NAME>`.
fn resolve<T: FromStr>(flag: Option<T>, file: Option<T>, env_name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    if file.is_some() {
        return Ok(file);
    }
    match std::env::var(env_name) {
        Ok(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| CliError::new("config", format!("{env_name}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn ingest(args: IngestArgs, file: &FileConfig) -> Result<()> {
    let file_format = file
        .table_format
        .as_deref()
        .map(TableFormat::from_str)
        .transpose()
        .map_err(|e| CliError::new("config", e))?;
    let options = IngestOptions {
        table_format: resolve(args.table_format, file_format, "DOCRAG_TABLE_FORMAT")?.unwrap_or_default(),
        chunk_size: resolve(args.chunk_size, file.chunk_size, "DOCRAG_CHUNK_SIZE")?.unwrap_or(DEFAULT_CHUNK_SIZE),
        ..IngestOptions::default()
    };
    let embedder_kind = resolve(args.embedder, file.embedder.clone(), "DOCRAG_EMBEDDER")?.unwrap_or_else(|| "local".into());
    let embedder: Box<dyn Embedder> = match embedder_kind.as_str() {
        "local" => Box::new(LocalHashEmbedder::default()),
        "http" => {
            let model = resolve(args.embed_model, file.embed_model.clone(), "DOCRAG_EMBED_MODEL")?
                .ok_or_else(|| CliError::new("config", "the http embedder needs --embed-model"))?;
            let dimension = resolve(args.embed_dimension, file.embed_dimension, "DOCRAG_EMBED_DIMENSION")?
                .ok_or_else(|| CliError::new("config", "the http embedder needs --embed-dimension"))?;
            Box::new(HttpEmbedder::from_env(model, dimension)?)
        }
        other => return Err(CliError::new("config", format!("unknown embedder {other:?}"))),
    };
    let charts = args.charts.map(FixtureChartProvider::new);
    let (index, report) = ingest_dir(
        &args.layout,
        charts.as_ref().map(|c| c as &dyn ChartProvider),
        embedder.as_ref(),
        &DefaultTokenizer,
        options,
    )?;
    index.persist(&args.index)?;
    for warning in &report.warnings {
        log::warn!("{warning}");
    }
    println!(
        "indexed {} documents, {} pages, {} chunks into {}",
        report.documents.len(),
        report.pages,
        report.chunks,
        args.index.display()
    );
    Ok(())
}

fn open_index(path: &Path) -> Result<(VectorIndex, Box<dyn Embedder>)> {
    let index = VectorIndex::load(path)?;
    if index.tokenizer_tag() != DefaultTokenizer::TAG {
        return Err(CliError::new(
            "index",
            format!("index was built with tokenizer {:?}", index.tokenizer_tag()),
        ));
    }
    let embedder = embedder_from_tag(index.provider_tag())?;
    Ok((index, embedder))
}

fn build_llm(args: &ProviderArgs, file: &FileConfig) -> Result<Box<dyn LlmProvider>> {
    let kind = resolve(args.provider.clone(), file.provider.clone(), "DOCRAG_PROVIDER")?.unwrap_or_else(|| "mock".into());
    let model = resolve(args.model.clone(), file.model.clone(), "DOCRAG_MODEL")?;
    let llm: Box<dyn LlmProvider> = match kind.as_str() {
        "mock" => Box::new(model.map(LookupMockLlm::new).unwrap_or_default()),
        "fixture" => {
            let path = args
                .answers
                .as_ref()
                .ok_or_else(|| CliError::new("config", "the fixture provider needs --answers"))?;
            Box::new(FixtureMockLlm::from_file(path)?)
        }
        "http" => {
            let model = model.ok_or_else(|| CliError::new("config", "the http provider needs --model"))?;
            let llm = HttpLlm::from_env(model)?;
            if args.retry {
                Box::new(RetryingLlm::new(llm))
            } else {
                Box::new(llm)
            }
        }
        other => return Err(CliError::new("config", format!("unknown provider {other:?}"))),
    };
    Ok(llm)
}

fn query(args: QueryArgs, file: &FileConfig) -> Result<()> {
    let (index, embedder) = open_index(&args.index)?;
    let k = resolve(args.k, file.k, "DOCRAG_K")?.unwrap_or(DEFAULT_K);
    let retrieval = RetrievalConfig::new(k, args.filters)?;
    let llm = build_llm(&args.provider, file)?;
    let answer = answer_question(&args.question, &index, embedder.as_ref(), &retrieval, &llm)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&answer).expect("answer serializes"));
        return Ok(());
    }
    println!("{}", answer.text);
    for r in &answer.retrieved {
        println!("  {:.6}  {}", r.score, r.chunk_id);
    }
    for warning in &answer.warnings {
        log::warn!("{warning}");
    }
    Ok(())
}

fn load_pricing(flag: Option<PathBuf>, file: &FileConfig) -> Result<PricingConfig> {
    match resolve(flag, file.pricing.clone(), "DOCRAG_PRICING")? {
        Some(path) => Ok(PricingConfig::load(&path)?),
        None => Ok(PricingConfig::default()),
    }
}

fn eval(args: EvalArgs, file: &FileConfig) -> Result<()> {
    let (index, embedder) = open_index(&args.index)?;
    let dataset = load_dataset(&args.dataset)?;
    let llm = build_llm(&args.provider, file)?;
    let pricing = load_pricing(args.pricing, file)?;
    let defaults = EvalOptions::default();
    let options = EvalOptions {
        workers: resolve(args.workers, file.workers, "DOCRAG_WORKERS")?.unwrap_or(defaults.workers),
        k: resolve(args.k, file.k, "DOCRAG_K")?.unwrap_or(defaults.k),
        cost_model: resolve(args.cost_model, file.cost_model.clone(), "DOCRAG_COST_MODEL")?,
    };
    let report = run_eval(&dataset, &index, embedder.as_ref(), &llm, &pricing, &options)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&args.report, json + "\n").map_err(|e| CliError::new("io", format!("{}: {e}", args.report.display())))?;
    println!(
        "accuracy {:.4} ({}/{}), cost ${:.6} priced as {}",
        report.accuracy, report.correct, report.total, report.total_cost_usd, report.cost_model
    );
    if report.failures > 0 {
        log::warn!("{} provider calls failed; see the report for details", report.failures);
    }
    Ok(())
}

fn cost(args: CostArgs, file: &FileConfig) -> Result<()> {
    let mut pricing = load_pricing(args.pricing, file)?;
    if let Some(tokens) = resolve(args.tokens_per_page, file.tokens_per_page, "DOCRAG_TOKENS_PER_PAGE")? {
        pricing = pricing.with_tokens_per_page(tokens)?;
    }
    print!("{}", cost_report(&pricing)?);
    Ok(())
}
