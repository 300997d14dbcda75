use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClinicalAxis {
    Relevance,
    Consistency,
    Fluency,
    Coherence,
    Hallucination,
}

impl ClinicalAxis {
    pub const ALL: [ClinicalAxis; 5] = [
        ClinicalAxis::Relevance,
        ClinicalAxis::Consistency,
        ClinicalAxis::Fluency,
        ClinicalAxis::Coherence,
        ClinicalAxis::Hallucination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClinicalAxis::Relevance => "relevance",
            ClinicalAxis::Consistency => "consistency",
            ClinicalAxis::Fluency => "fluency",
            ClinicalAxis::Coherence => "coherence",
            ClinicalAxis::Hallucination => "hallucination",
        }
    }
}

impl fmt::Display for ClinicalAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClinicalAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ClinicalAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| format!("unknown clinical axis `{s}`"))
    }
}

/// One rater's 1–5 score on one axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalRating {
    pub rater_id: String,
    pub axis: ClinicalAxis,
    pub score: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalAggregate {
    pub per_axis: BTreeMap<ClinicalAxis, AxisSummary>,
    /// Mean over every individual rating.
    pub overall: f64,
    pub count: usize,
    pub raters: usize,
}

pub fn clinical_eval_aggregate(ratings: &[ClinicalRating]) -> Result<ClinicalAggregate> {
    if ratings.is_empty() {
        return Err(MetricsError::Empty("no clinical ratings".into()));
    }
    let mut sums: BTreeMap<ClinicalAxis, (i64, usize)> = BTreeMap::new();
    let mut raters = std::collections::BTreeSet::new();
    for r in ratings {
        if !(1..=5).contains(&r.score) {
            return Err(MetricsError::OutOfRange { axis: r.axis.to_string(), score: r.score });
        }
        let e = sums.entry(r.axis).or_default();
        e.0 += r.score;
        e.1 += 1;
        raters.insert(r.rater_id.as_str());
    }
    let total: i64 = sums.values().map(|s| s.0).sum();
    Ok(ClinicalAggregate {
        per_axis: sums
            .into_iter()
            .map(|(axis, (sum, count))| (axis, AxisSummary { mean: sum as f64 / count as f64, count }))
            .collect(),
        overall: total as f64 / ratings.len() as f64,
        count: ratings.len(),
        raters: raters.len(),
    })
}
