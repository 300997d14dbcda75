//! ADE extraction: map a post to its `(drug, ADE, severity)` triplets.
//!
//! Backends are interchangeable behind [`ExtractionBackend`]: the
//! deterministic [`LexiconBackend`] encodes the annotation guidelines as
//! cue lexicons, and [`PromptedBackend`] sends a rendered prompt to any
//! served fine-tuned model and decodes its JSON answer.

mod lexicon;
mod lowrank;
mod prompted;
mod schema;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationRecord, Post, Severity};
use crate::http::TransportError;

pub use lexicon::{lexicon_extract, Lexicon, LexiconBackend, TermMatcher};
pub use lowrank::{low_rank_delta, LowRankAdapter, Matrix};
pub use prompted::{
    render_prompt, CompletionClient, HttpCompletionClient, PromptTemplate, PromptedBackend,
    ReplayCompletionClient,
};
pub use schema::{parse_model_output, schema_description, serialize_items, ParsedItems, SCHEMA_V1};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("backend transport failure: {0}")]
    Transport(#[from] TransportError),

    #[error("unparseable model output: {reason}")]
    Unparseable { reason: String, raw_model_output: String },

    #[error("invalid prompt template: {0}")]
    Template(String),

    #[error("invalid post: {0}")]
    InvalidPost(String),

    #[error("invalid lexicon: {0}")]
    Lexicon(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExtractionError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ExtractionError::Transport(e) if e.retryable)
    }
}

pub type Result<T> = std::result::Result<T, ExtractionError>;

/// One extracted triplet plus the adversity judgement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractionItem {
    pub drug: String,
    #[serde(rename = "ade")]
    pub ade_text: String,
    pub severity: Severity,
    pub adversity: bool,
}

/// Everything extracted from one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub post_id: String,
    pub items: Vec<ExtractionItem>,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_model_output: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExtractionRecord {
    /// Flatten a (normalized) annotation into the extraction schema, so
    /// gold labels and predictions can be compared directly.
    pub fn from_annotation(record: &AnnotationRecord) -> Self {
        let record = record.normalized();
        ExtractionRecord {
            post_id: record.post_id.clone(),
            items: record
                .drugs
                .iter()
                .flat_map(|d| {
                    d.ades.iter().map(|a| ExtractionItem {
                        drug: d.name.clone(),
                        ade_text: a.text.clone(),
                        severity: a.severity,
                        adversity: a.adversity,
                    })
                })
                .collect(),
            backend_id: format!("annotation:{}", record.annotator_id),
            raw_model_output: None,
            warnings: Vec::new(),
        }
    }
}

/// A source of extraction records. Implementations must be safe to call
/// concurrently from several threads.
pub trait ExtractionBackend: Send + Sync {
    fn id(&self) -> &str;

    fn extract(&self, post: &Post) -> Result<ExtractionRecord>;
}

/// Validate the post and run `backend` on it.
pub fn extract(post: &Post, backend: &dyn ExtractionBackend) -> Result<ExtractionRecord> {
    post.validate().map_err(|e| ExtractionError::InvalidPost(e.to_string()))?;
    backend.extract(post)
}

pub fn write_records(path: &Path, records: &[ExtractionRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ExtractionRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                ExtractionError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("line {}: {e}", i + 1),
                ))
            })
        })
        .collect()
}
