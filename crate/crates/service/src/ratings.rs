//! Clinical ratings of summaries, one per rater and summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use adesum_core::metrics::{ClinicalAxis, ClinicalRating};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisScores {
    pub relevance: i64,
    pub consistency: i64,
    pub fluency: i64,
    pub coherence: i64,
    pub hallucination: i64,
}

impl AxisScores {
    pub fn by_axis(&self) -> [(ClinicalAxis, i64); 5] {
        [
            (ClinicalAxis::Relevance, self.relevance),
            (ClinicalAxis::Consistency, self.consistency),
            (ClinicalAxis::Fluency, self.fluency),
            (ClinicalAxis::Coherence, self.coherence),
            (ClinicalAxis::Hallucination, self.hallucination),
        ]
    }

    pub fn validate(&self) -> Result<(), ApiError> {
        for (axis, score) in self.by_axis() {
            if !(1..=5).contains(&score) {
                return Err(ApiError::bad_request(format!("{} score {score} is outside 1..5", axis.as_str())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingSubmission {
    pub summary_id: String,
    pub rater_id: String,
    pub scores: AxisScores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rating_id: String,
    pub summary_id: String,
    pub rater_id: String,
    pub scores: AxisScores,
    /// RFC 3339, UTC.
    pub submitted_at: String,
}

impl RatingRecord {
    pub fn axis_ratings(&self) -> impl Iterator<Item = ClinicalRating> + '_ {
        self.scores.by_axis().into_iter().map(|(axis, score)| ClinicalRating {
            rater_id: self.rater_id.clone(),
            axis,
            score,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RatingBook {
    records: Vec<RatingRecord>,
    index: BTreeMap<(String, String), usize>,
}

impl RatingBook {
    pub fn from_records(records: impl IntoIterator<Item = RatingRecord>) -> Self {
        let mut book = RatingBook::default();
        for r in records {
            book.push(r);
        }
        book
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn existing(&self, summary_id: &str, rater_id: &str) -> Option<&RatingRecord> {
        self.index.get(&(summary_id.to_string(), rater_id.to_string())).map(|&i| &self.records[i])
    }

    pub fn next_id(&self) -> String {
        format!("rating-{:06}", self.records.len() + 1)
    }

    pub fn push(&mut self, r: RatingRecord) {
        self.index.insert((r.summary_id.clone(), r.rater_id.clone()), self.records.len());
        self.records.push(r);
    }
}
