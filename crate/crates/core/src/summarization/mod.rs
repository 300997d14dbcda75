//! Per-drug summaries ordered by severity, plus reference numerics for
//! the encoder/decoder attention equations.

mod attention;
mod summary;

use thiserror::Error;

use crate::http::TransportError;

pub use attention::{
    cross_attention, decode_step, encode, scaled_dot_attention, self_attention, softmax_rows,
    AttentionHead, AttentionWeights, TokenMatrix,
};
pub use summary::{
    audit_order, model_summarize, template_summarize, template_text, DrugSummary,
    HttpSummaryBackend, ModelSummarizer, OrderViolation, ReplaySummaryBackend, Summarizer,
    SummaryBackend, TemplateSummarizer, ViolationKind,
};

#[derive(Debug, Error)]
pub enum SummarizationError {
    #[error("summarizer backend failure: {0}")]
    Transport(#[from] TransportError),

    #[error("backend returned an empty summary for `{0}`")]
    EmptyResponse(String),

    #[error("no ADE groups for `{0}`")]
    EmptyEntry(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

impl SummarizationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SummarizationError::Transport(e) if e.retryable)
    }
}

pub type Result<T> = std::result::Result<T, SummarizationError>;
