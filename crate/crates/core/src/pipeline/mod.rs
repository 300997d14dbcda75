//! End-to-end orchestration: extract → group → summarize, with every stage
//! output written to disk and fingerprinted.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alignment::AlignmentError;
use crate::corpus::{Corpus, CorpusError};
use crate::extraction::{extract, ExtractionBackend, ExtractionError, ExtractionRecord};
use crate::grouping::{build_grid, DrugGroupGrid, EmbeddingProvider, GroupingError};
use crate::metrics::MetricsError;
use crate::summarization::{DrugSummary, SummarizationError, Summarizer};

pub use config::{
    AlignmentConfig, EmbedderKind, ExtractionConfig, ExtractorKind, GroupingConfig, PathsConfig, RejectedKind,
    RunConfig, ServiceConfig, SplitConfig, SummarizationConfig, SummarizerKind,
};

pub const CONFIG_FILE: &str = "config.json";
pub const EXTRACTIONS_FILE: &str = "extractions.jsonl";
pub const GRID_FILE: &str = "grid.json";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error(transparent)]
    Corpus(#[from] CorpusError),

    #[error(transparent)]
    Extraction(#[from] ExtractionError),

    #[error(transparent)]
    Grouping(#[from] GroupingError),

    #[error(transparent)]
    Summarization(#[from] SummarizationError),

    #[error(transparent)]
    Alignment(#[from] AlignmentError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Failures caused by an external model or embedding service.
    pub fn is_backend_failure(&self) -> bool {
        match self {
            PipelineError::Extraction(e) => {
                matches!(e, ExtractionError::Transport(_) | ExtractionError::Unparseable { .. })
            }
            PipelineError::Grouping(e) => matches!(e, GroupingError::Transport(_)),
            PipelineError::Summarization(e) => {
                matches!(e, SummarizationError::Transport(_) | SummarizationError::EmptyResponse(_))
            }
            PipelineError::Alignment(e) => matches!(e, AlignmentError::Transport { .. }),
            PipelineError::Metrics(e) => matches!(e, MetricsError::Embedding(GroupingError::Transport(_))),
            _ => false,
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            PipelineError::Extraction(e) => e.is_retryable(),
            PipelineError::Grouping(e) => e.is_retryable(),
            PipelineError::Summarization(e) => e.is_retryable(),
            PipelineError::Alignment(e) => e.is_retryable(),
            PipelineError::Metrics(e) => e.is_retryable(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// The backends a run uses.
pub struct Backends {
    pub extractor: Box<dyn ExtractionBackend>,
    pub embedder: Box<dyn EmbeddingProvider>,
    pub summarizer: Box<dyn Summarizer>,
}

impl Backends {
    pub fn from_config(config: &RunConfig, workdir: &Path) -> Result<Self> {
        config.validate()?;
        Ok(Backends {
            extractor: config.extraction_backend(workdir)?,
            embedder: config.embedding_provider()?,
            summarizer: config.summarizer()?,
        })
    }
}

/// Outputs that succeeded before the first failure (in input order), and
/// that failure.
#[derive(Debug)]
pub struct Partial<T, E> {
    pub done: Vec<T>,
    pub error: Option<E>,
}

impl<T, E> Partial<T, E> {
    fn from_results(results: Vec<std::result::Result<T, E>>) -> Self {
        let mut done = Vec::with_capacity(results.len());
        let mut error = None;
        for r in results {
            match r {
                Ok(v) => done.push(v),
                Err(e) => {
                    if error.is_none() {
                        error = Some(e);
                    }
                }
            }
        }
        Partial { done, error }
    }

    pub fn into_result(self) -> std::result::Result<Vec<T>, E> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.done),
        }
    }
}

/// Extract every post in parallel; records keep corpus order.
pub fn extract_corpus(corpus: &Corpus, backend: &dyn ExtractionBackend) -> Partial<ExtractionRecord, ExtractionError> {
    Partial::from_results(corpus.posts().par_iter().map(|p| extract(p, backend)).collect())
}

/// Summarize every drug in the grid in parallel; summaries keep drug order.
pub fn summarize_grid(grid: &DrugGroupGrid, summarizer: &dyn Summarizer) -> Partial<DrugSummary, SummarizationError> {
    let entries: Vec<_> = grid.entries.iter().collect();
    Partial::from_results(entries.par_iter().map(|(drug, buckets)| summarizer.summarize(drug, buckets)).collect())
}

/// Write one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_grid(path: &Path) -> Result<DrugGroupGrid> {
    if !path.exists() {
        return Err(PipelineError::MissingInput(path.to_path_buf()));
    }
    serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> std::io::Result<ArtifactDigest> {
    let data = fs::read(path)?;
    Ok(ArtifactDigest {
        name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Group,
    Summarize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
    pub retryable: bool,
    pub backend_failure: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub posts: usize,
    pub extraction_records: usize,
    pub items: usize,
    pub drugs: usize,
    pub clusters: usize,
    pub summaries: usize,
    pub order_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIds {
    pub extraction: String,
    pub embedding: String,
    pub summarization: String,
}

/// Summary of one run. Contains no timestamps, so identical runs produce
/// identical manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
    pub backends: BackendIds,
    pub counts: RunCounts,
    pub artifacts: Vec<ArtifactDigest>,
}

impl RunManifest {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

fn failure(stage: Stage, e: PipelineError) -> StageFailure {
    StageFailure { stage, message: e.to_string(), retryable: e.is_retryable(), backend_failure: e.is_backend_failure() }
}

/// Run extract → group → summarize over `corpus`, writing artifacts to
/// `out_dir`.
///
/// A stage failure does not return an error: the manifest is marked failed,
/// and everything produced before the failure stays on disk. Errors are
/// returned only for invalid configuration and I/O problems.
pub fn run_pipeline(corpus: &Corpus, config: &RunConfig, backends: &Backends, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut written = vec![CONFIG_FILE];
    write_json(&out_dir.join(CONFIG_FILE), &config.redacted())?;

    let mut counts = RunCounts { posts: corpus.len(), ..Default::default() };
    let mut failed = None;

    let extracted = extract_corpus(corpus, backends.extractor.as_ref());
    write_jsonl(&out_dir.join(EXTRACTIONS_FILE), &extracted.done)?;
    written.push(EXTRACTIONS_FILE);
    counts.extraction_records = extracted.done.len();
    counts.items = extracted.done.iter().map(|r| r.items.len()).sum();
    if let Some(e) = extracted.error {
        failed = Some(failure(Stage::Extract, e.into()));
    }

    if failed.is_none() {
        match build_grid(&extracted.done, backends.embedder.as_ref(), config.grouping.linkage, config.grouping.threshold) {
            Ok(grid) => {
                write_json(&out_dir.join(GRID_FILE), &grid)?;
                written.push(GRID_FILE);
                counts.drugs = grid.entries.len();
                counts.clusters = grid.cluster_count();

                let summaries = summarize_grid(&grid, backends.summarizer.as_ref());
                write_jsonl(&out_dir.join(SUMMARIES_FILE), &summaries.done)?;
                written.push(SUMMARIES_FILE);
                counts.summaries = summaries.done.len();
                counts.order_violations = summaries.done.iter().filter(|s| !s.is_well_ordered()).count();
                if let Some(e) = summaries.error {
                    failed = Some(failure(Stage::Summarize, e.into()));
                }
            }
            Err(e) => failed = Some(failure(Stage::Group, e.into())),
        }
    }

    let artifacts = written.iter().map(|name| digest_file(&out_dir.join(name))).collect::<std::io::Result<_>>()?;
    let manifest = RunManifest {
        status: if failed.is_some() { RunStatus::Failed } else { RunStatus::Completed },
        failure: failed,
        backends: BackendIds {
            extraction: backends.extractor.id().to_string(),
            embedding: backends.embedder.id().to_string(),
            summarization: backends.summarizer.id().to_string(),
        },
        counts,
        artifacts,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
