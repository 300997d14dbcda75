use rayon::prelude::*;
use serde_json::json;

use super::dpo::{DpoBatch, DpoPair};
use super::preference::PreferencePair;
use super::{AlignmentError, Result};
use crate::http::{field, EndpointConfig, JsonClient, TransportError};

/// Sequence log-probability of a completion under some model.
pub trait LogprobScorer: Send + Sync {
    fn logprob(&self, prompt: &str, completion: &str) -> std::result::Result<f64, TransportError>;
}

/// `POST {"prompt", "completion"}` → `{"logprob"}`.
#[derive(Debug, Clone)]
pub struct HttpLogprobScorer {
    client: JsonClient,
}

impl HttpLogprobScorer {
    pub fn new(config: EndpointConfig) -> Self {
        HttpLogprobScorer { client: JsonClient::new(config) }
    }
}

impl LogprobScorer for HttpLogprobScorer {
    fn logprob(&self, prompt: &str, completion: &str) -> std::result::Result<f64, TransportError> {
        let response = self.client.post(&json!({ "prompt": prompt, "completion": completion }))?;
        match field(&response, "logprob")?.as_f64() {
            Some(lp) if lp.is_finite() && lp <= 0.0 => Ok(lp),
            other => Err(TransportError {
                message: format!("`logprob` must be a finite number ≤ 0, got {other:?}"),
                retryable: false,
            }),
        }
    }
}

/// Score every pair under the policy and reference models.
pub fn score_pairs(
    pairs: &[PreferencePair],
    policy: &dyn LogprobScorer,
    reference: &dyn LogprobScorer,
    beta: f64,
) -> Result<DpoBatch> {
    let scored: Vec<DpoPair> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let wrap = |source| AlignmentError::Transport { drug: format!("pair {i}"), source };
            Ok(DpoPair {
                policy_chosen: policy.logprob(&p.prompt, &p.chosen).map_err(wrap)?,
                policy_rejected: policy.logprob(&p.prompt, &p.rejected).map_err(wrap)?,
                reference_chosen: reference.logprob(&p.prompt, &p.chosen).map_err(wrap)?,
                reference_rejected: reference.logprob(&p.prompt, &p.rejected).map_err(wrap)?,
            })
        })
        .collect::<Result<_>>()?;
    let batch = DpoBatch { beta, pairs: scored };
    batch.validate()?;
    Ok(batch)
}
