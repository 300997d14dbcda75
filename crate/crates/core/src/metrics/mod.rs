//! Automatic and fact-based evaluation metrics.
//!
//! Token-level metrics take pre-tokenized input; [`crate::text::tokenize`]
//! is the tokenizer used throughout the pipeline.

mod classification;
mod clinical;
mod embedding_match;
mod facts;
mod overlap;
mod report;
mod similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grouping::GroupingError;

pub use classification::{classification_report, ClassScores, ClassificationReport};
pub use clinical::{clinical_eval_aggregate, AxisSummary, ClinicalAggregate, ClinicalAxis, ClinicalRating};
pub use embedding_match::embedding_match_score;
pub use facts::{extract_fact_set, fact_scores, factual_recall, omission_rate, FactScores, FactSet};
pub use overlap::{bleu, lcs_len, meteor, rouge_l, rouge_n};
pub use report::{
    evaluate_extraction, evaluate_summaries, read_summary_records, EvalOptions, ExampleScores, MetricKind,
    MetricReport, SummaryRecord,
};
pub use similarity::{hamming_distance, jaccard, ratcliff_obershelp};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} gold labels")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("score {score} for {axis} outside 1..=5")]
    OutOfRange { axis: String, score: i64 },

    #[error("embedding failure: {0}")]
    Embedding(#[from] GroupingError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl MetricsError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, MetricsError::Embedding(e) if e.is_retryable())
    }
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1 }
    }
}
