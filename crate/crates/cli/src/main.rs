//! `adesum`: batch entry points for every pipeline stage, and the
//! annotation service.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adesum_core::pipeline::PipelineError;

#[derive(Debug, Parser)]
#[command(name = "adesum", version, about = "Drug adverse-event summaries from patient forum posts")]
struct Cli {
    /// Directory every relative path resolves against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,

    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic choice; overrides the configured split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load raw posts (JSONL or CSV) into the working corpus.
    Ingest(IngestArgs),
    /// Partition the corpus into train, validation and test ids.
    Split(SplitArgs),
    /// Extract drug and ADE mentions from every post.
    Extract(ExtractArgs),
    /// Cluster extracted ADEs per drug and severity.
    Group(GroupArgs),
    /// Write one summary per drug.
    Summarize(SummarizeArgs),
    /// Build a preference dataset from gold summaries.
    DpoBuild(DpoBuildArgs),
    /// Compute the DPO loss of a scored batch.
    DpoLoss(DpoLossArgs),
    /// Score predictions against gold references.
    Eval(EvalArgs),
    /// Run the annotation and rating service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Raw post file.
    #[arg(long)]
    input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Username pattern (regex) to mask; repeatable.
    #[arg(long = "anonymize", value_name = "REGEX")]
    patterns: Vec<String>,
    /// Corpus output; the configured posts path by default.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Train, validation and test fractions, e.g. `0.8,0.05,0.15`.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[f64; 3]>,
    #[arg(long, default_value = "split.json")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Corpus input; the configured posts path by default.
    #[arg(long)]
    posts: Option<PathBuf>,
    #[arg(long, default_value = "extractions.jsonl")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct GroupArgs {
    #[arg(long, default_value = "extractions.jsonl")]
    input: PathBuf,
    #[arg(long, default_value = "grid.json")]
    output: PathBuf,
    /// `single`, `average` or `complete`.
    #[arg(long)]
    linkage: Option<adesum_core::grouping::Linkage>,
    /// Cosine distance cut-off in [0, 2].
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Template,
    Model,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[arg(long, default_value = "grid.json")]
    grid: PathBuf,
    #[arg(long, default_value = "summaries.jsonl")]
    output: PathBuf,
    /// Overrides the configured summarizer.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Send raw post texts to the model in one request, skipping
    /// extraction and grouping. Requires `--backend model`.
    #[arg(long)]
    no_grid: bool,
    /// Corpus for `--no-grid`; the configured posts path by default.
    #[arg(long)]
    posts: Option<PathBuf>,
    /// Drug field of the `--no-grid` summary record.
    #[arg(long, default_value = "all")]
    label: String,
}

#[derive(Debug, Args)]
struct DpoBuildArgs {
    /// Gold summaries, JSONL with `drug` and `text`.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value = "grid.json")]
    grid: PathBuf,
    #[arg(long, default_value = "preferences.jsonl")]
    output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["batch", "pairs"])))]
struct DpoLossArgs {
    /// Scored batch: `{"beta"?, "pairs": [{policy_chosen, policy_rejected,
    /// reference_chosen, reference_rejected}]}`.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Preference JSONL to score against the policy and reference endpoints.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Overrides the batch and configured beta.
    #[arg(long)]
    beta: Option<f64>,
    /// Write loss, per-pair z and gradients as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Summaries,
    Extraction,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Comma-separated metric families; the configured set by default.
    #[arg(long, value_parser = parse_metrics)]
    metrics: Option<MetricList>,
    #[arg(long, value_enum, default_value = "summaries")]
    task: TaskArg,
    #[arg(long, default_value = "eval.json")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Overrides the configured bind address.
    #[arg(long)]
    bind: Option<String>,
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<f64>| format!("expected three fractions, got {}", v.len()))
}

#[derive(Debug, Clone)]
struct MetricList(Vec<adesum_core::metrics::MetricKind>);

fn parse_metrics(s: &str) -> Result<MetricList, String> {
    adesum_core::metrics::MetricKind::parse_list(s).map(MetricList)
}

/// Failures with their own exit codes.
#[derive(Debug)]
enum Fault {
    Missing(PathBuf),
    Backend(String),
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Missing(p) => write!(f, "missing input: {}", p.display()),
            Fault::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

impl std::error::Error for Fault {}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Fault>() {
        Some(Fault::Missing(_)) => 2,
        Some(Fault::Backend(_)) => 3,
        None => match err.downcast_ref::<PipelineError>() {
            Some(PipelineError::MissingInput(_)) => 2,
            Some(e) if e.is_backend_failure() => 3,
            _ => 1,
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
