use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::Deserialize;

use adesum_core::alignment::{
    build_preference_pairs, dpo_loss, dpo_report, export_preference_dataset, import_preference_dataset,
    read_gold_summaries, score_pairs, DpoBatch, DpoPair,
};
use adesum_core::corpus::{ingest_posts, read_annotations, split_corpus, write_posts, Anonymizer, Corpus, PostFormat};
use adesum_core::extraction::ExtractionRecord;
use adesum_core::grouping::build_grid;
use adesum_core::metrics::{evaluate_extraction, evaluate_summaries, read_summary_records};
use adesum_core::pipeline::{
    extract_corpus, read_grid, read_jsonl, summarize_grid, write_json, write_jsonl, PipelineError, RunConfig,
    SummarizerKind,
};
use adesum_service::auth::TokenTable;
use adesum_service::AppState;

use crate::{
    BackendArg, Cli, Command, DpoBuildArgs, DpoLossArgs, EvalArgs, ExtractArgs, FormatArg, Fault, GroupArgs,
    IngestArgs, ServeArgs, SplitArgs, SummarizeArgs, TaskArg,
};

struct Ctx {
    workdir: PathBuf,
    config: RunConfig,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        RunConfig::resolve(&self.workdir, p)
    }

    /// Resolve an input path, failing with [`Fault::Missing`] if absent.
    fn input(&self, p: &Path) -> Result<PathBuf> {
        let path = self.path(p);
        if !path.exists() {
            return Err(Fault::Missing(path).into());
        }
        Ok(path)
    }

    fn posts(&self, over: Option<&PathBuf>) -> Result<PathBuf> {
        self.input(over.unwrap_or(&self.config.paths.posts))
    }

    fn corpus(&self, over: Option<&PathBuf>) -> Result<Corpus> {
        let path = self.posts(over)?;
        ingest_posts(&path, PostFormat::Jsonl).with_context(|| format!("reading {}", path.display()))
    }
}

/// Classify a stage error so it maps to the right exit code.
fn stage(e: impl Into<PipelineError>) -> anyhow::Error {
    let e = e.into();
    match e {
        PipelineError::MissingInput(p) => Fault::Missing(p).into(),
        e if e.is_backend_failure() => Fault::Backend(e.to_string()).into(),
        e => e.into(),
    }
}

fn load_config(cli: &Cli) -> Result<Ctx> {
    let workdir = cli.workdir.clone();
    let mut config = match &cli.config {
        Some(p) => {
            let path = RunConfig::resolve(&workdir, p);
            if !path.exists() {
                return Err(Fault::Missing(path).into());
            }
            RunConfig::from_json_file(&path)?
        }
        None => RunConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok());
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
    }
    Ok(Ctx { workdir, config })
}

pub fn run(cli: Cli) -> Result<()> {
    let mut ctx = load_config(&cli)?;
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Split(a) => {
            if let Some(r) = a.ratios {
                ctx.config.split.ratios = r;
            }
            split(&ctx, a)
        }
        Command::Extract(a) => extract(&ctx, a),
        Command::Group(a) => {
            if let Some(l) = a.linkage {
                ctx.config.grouping.linkage = l;
            }
            if let Some(t) = a.threshold {
                ctx.config.grouping.threshold = t;
            }
            group(&ctx, a)
        }
        Command::Summarize(a) => {
            match a.backend {
                Some(BackendArg::Template) => ctx.config.summarization.backend = SummarizerKind::Template,
                Some(BackendArg::Model) => ctx.config.summarization.backend = SummarizerKind::Model,
                None => {}
            }
            summarize(&ctx, a)
        }
        Command::DpoBuild(a) => dpo_build(&ctx, a),
        Command::DpoLoss(a) => {
            if let Some(b) = a.beta {
                ctx.config.alignment.beta = b;
            }
            dpo_loss_cmd(&ctx, a)
        }
        Command::Eval(a) => {
            if let Some(m) = &a.metrics {
                ctx.config.eval.metrics = m.0.clone();
            }
            eval(&ctx, a)
        }
        Command::Serve(a) => serve(ctx, a),
    }
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let input = ctx.input(&a.input)?;
    let format = match a.format {
        Some(FormatArg::Jsonl) => PostFormat::Jsonl,
        Some(FormatArg::Csv) => PostFormat::Csv,
        None => PostFormat::from_path(&input),
    };
    let mut corpus = ingest_posts(&input, format).with_context(|| format!("reading {}", input.display()))?;
    if !a.patterns.is_empty() {
        let anonymizer = Anonymizer::new(&a.patterns)?;
        corpus.map_posts(|p| Ok(anonymizer.apply(p)))?;
    }
    let output = ctx.path(a.output.as_ref().unwrap_or(&ctx.config.paths.posts));
    write_posts(&output, &corpus)?;
    println!("ingested {} posts into {} (source sha256 {})", corpus.len(), output.display(), corpus.provenance);
    Ok(())
}

fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    ctx.config.validate()?;
    let corpus = ctx.corpus(None)?;
    let s = &ctx.config.split;
    let assignment = split_corpus(&corpus, s.ratios, s.seed)?;
    write_json(&ctx.path(&a.output), &assignment)?;
    let (train, validation, test) = assignment.sizes();
    println!("train {train}, validation {validation}, test {test}");
    Ok(())
}

fn extract(ctx: &Ctx, a: ExtractArgs) -> Result<()> {
    ctx.config.validate()?;
    let corpus = ctx.corpus(a.posts.as_ref())?;
    let backend = ctx.config.extraction_backend(&ctx.workdir)?;
    let out = extract_corpus(&corpus, backend.as_ref());
    let output = ctx.path(&a.output);
    write_jsonl(&output, &out.done)?;
    if let Some(e) = out.error {
        warn!("{} of {} posts extracted before the failure", out.done.len(), corpus.len());
        return Err(stage(e));
    }
    let items: usize = out.done.iter().map(|r| r.items.len()).sum();
    println!("extracted {items} items from {} posts into {}", out.done.len(), output.display());
    Ok(())
}

fn group(ctx: &Ctx, a: GroupArgs) -> Result<()> {
    ctx.config.validate()?;
    let records: Vec<ExtractionRecord> = read_jsonl(&ctx.input(&a.input)?)?;
    let provider = ctx.config.embedding_provider()?;
    let g = &ctx.config.grouping;
    let grid = build_grid(&records, provider.as_ref(), g.linkage, g.threshold).map_err(stage)?;
    let output = ctx.path(&a.output);
    write_json(&output, &grid)?;
    println!("grouped {} drugs into {} clusters in {}", grid.entries.len(), grid.cluster_count(), output.display());
    Ok(())
}

fn summarize(ctx: &Ctx, a: SummarizeArgs) -> Result<()> {
    ctx.config.validate()?;
    let output = ctx.path(&a.output);
    if a.no_grid {
        if ctx.config.summarization.backend != SummarizerKind::Model {
            bail!("--no-grid needs the model summarizer (--backend model)");
        }
        let corpus = ctx.corpus(a.posts.as_ref())?;
        let backend = ctx.config.summary_backend()?;
        let texts: Vec<String> = corpus.iter().map(|p| p.text.clone()).collect();
        let text = backend.generate_from_posts(&texts).map_err(|e| Fault::Backend(e.to_string()))?;
        write_jsonl(&output, &[serde_json::json!({ "drug": a.label, "text": text })])?;
        println!("summarized {} posts without a grid into {}", corpus.len(), output.display());
        return Ok(());
    }
    let grid = read_grid(&ctx.input(&a.grid)?)?;
    let summarizer = ctx.config.summarizer()?;
    let out = summarize_grid(&grid, summarizer.as_ref());
    write_jsonl(&output, &out.done)?;
    if let Some(e) = out.error {
        warn!("{} of {} drugs summarized before the failure", out.done.len(), grid.entries.len());
        return Err(stage(e));
    }
    let violations = out.done.iter().filter(|s| !s.is_well_ordered()).count();
    if violations > 0 {
        warn!("{violations} summaries list a lower severity before a higher one");
    }
    println!("wrote {} summaries to {}", out.done.len(), output.display());
    Ok(())
}

fn dpo_build(ctx: &Ctx, a: DpoBuildArgs) -> Result<()> {
    ctx.config.validate()?;
    let gold = read_gold_summaries(&ctx.input(&a.gold)?)?;
    let grid = read_grid(&ctx.input(&a.grid)?)?;
    let provider = ctx.config.rejected_provider()?;
    let (pairs, warnings) = build_preference_pairs(&gold, &grid, provider.as_ref()).map_err(stage)?;
    for w in &warnings {
        warn!("{w}");
    }
    let output = ctx.path(&a.output);
    export_preference_dataset(&pairs, &output)?;
    println!("wrote {} preference pairs to {}", pairs.len(), output.display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    beta: Option<f64>,
    pairs: Vec<DpoPair>,
}

fn dpo_loss_cmd(ctx: &Ctx, a: DpoLossArgs) -> Result<()> {
    let batch = match (&a.batch, &a.pairs) {
        (Some(p), _) => {
            let path = ctx.input(p)?;
            let file: BatchFile = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            let beta = a.beta.or(file.beta).unwrap_or(ctx.config.alignment.beta);
            DpoBatch { beta, pairs: file.pairs }
        }
        (None, Some(p)) => {
            ctx.config.validate()?;
            let pairs = import_preference_dataset(&ctx.input(p)?)?;
            let (policy, reference) = ctx.config.scorers()?;
            score_pairs(&pairs, policy.as_ref(), reference.as_ref(), ctx.config.alignment.beta).map_err(stage)?
        }
        (None, None) => return Err(anyhow!("pass --batch or --pairs")),
    };
    if let Some(r) = &a.report {
        write_json(&ctx.path(r), &dpo_report(&batch)?)?;
    }
    println!("{:.6}", dpo_loss(&batch)?);
    Ok(())
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    ctx.config.validate()?;
    let (pred, gold) = (ctx.input(&a.pred)?, ctx.input(&a.gold)?);
    let report = match a.task {
        TaskArg::Summaries => {
            let provider = ctx.config.embedding_provider()?;
            evaluate_summaries(
                &read_summary_records(&pred)?,
                &read_summary_records(&gold)?,
                &ctx.config.eval,
                provider.as_ref(),
            )
            .map_err(stage)?
        }
        TaskArg::Extraction => {
            let records: Vec<ExtractionRecord> = read_jsonl(&pred)?;
            evaluate_extraction(&records, &read_annotations(&gold)?)?
        }
    };
    for w in &report.warnings {
        warn!("{w}");
    }
    let output = ctx.path(&a.output);
    write_json(&output, &report)?;
    print!("{}", report.to_table());
    info!("report written to {}", output.display());
    Ok(())
}

fn serve(ctx: Ctx, a: ServeArgs) -> Result<()> {
    let tokens_path = ctx.input(&ctx.config.service.tokens_file)?;
    let tokens = TokenTable::from_json_file(&tokens_path).map_err(|e| anyhow!("{}: {e}", tokens_path.display()))?;
    let bind = a.bind.unwrap_or_else(|| ctx.config.service.bind.clone());
    let state = AppState::open(&ctx.workdir, ctx.config, tokens)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(adesum_service::serve(state, &bind))
}
