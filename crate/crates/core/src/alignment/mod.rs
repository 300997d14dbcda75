//! DPO alignment: preference-pair construction, the DPO objective with
//! analytic gradients, and sequence scoring against served models.

mod degrade;
mod dpo;
mod preference;
mod scoring;

use thiserror::Error;

use crate::http::TransportError;

pub use degrade::{degrade_summary, Mutation};
pub use dpo::{
    dpo_loss, dpo_loss_gradients, dpo_report, neg_log_sigmoid, DpoBatch, DpoPair, DpoReport,
    PairGradient,
};
pub use preference::{
    build_preference_pairs, export_preference_dataset, import_preference_dataset, prompt_for,
    read_gold_summaries, DegraderProvider, GoldSummary, HttpRejectedProvider, PreferencePair,
    PreferenceSource, RejectedProvider, ReplayRejectedProvider,
};
pub use scoring::{score_pairs, HttpLogprobScorer, LogprobScorer};

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("invalid DPO batch: {0}")]
    InvalidBatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("backend failure for `{drug}`: {source}")]
    Transport { drug: String, source: TransportError },

    #[error("every preference pair was dropped (rejected text equal to chosen)")]
    AllPairsDropped,

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl AlignmentError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, AlignmentError::Transport { source, .. } if source.retryable)
    }
}

pub type Result<T> = std::result::Result<T, AlignmentError>;
