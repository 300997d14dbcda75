//! Agreement and clinical-rating statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use adesum_core::corpus::{cohens_kappa, AnnotationRecord, ConfusionTable};
use adesum_core::metrics::{clinical_eval_aggregate, ClinicalAggregate};

use crate::ratings::RatingRecord;
use crate::tasks::{finalized_labels, shared_posts, TaskBook};

/// Label of an item a rater did not list.
pub const ABSENT: &str = "absent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub rater_a: String,
    pub rater_b: String,
    pub posts: usize,
    pub items: usize,
    pub kappa: f64,
    pub confusion: ConfusionTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AgreementStats {
    Ok {
        raters: Vec<String>,
        pairs: Vec<PairAgreement>,
        /// `matrix[i][j]` is the kappa between `raters[i]` and `raters[j]`;
        /// null where the two share no items.
        matrix: Vec<Vec<Option<f64>>>,
        mean_kappa: f64,
        confusion: ConfusionTable,
    },
    InsufficientData {
        message: String,
    },
}

/// Severity labels of two raters over the `(post, drug, ADE)` items either
/// of them listed on posts both labeled. An item one rater left out is
/// labeled [`ABSENT`] for that rater.
pub fn paired_labels(a: &[&AnnotationRecord], b: &[&AnnotationRecord]) -> (Vec<String>, Vec<String>) {
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    for (ra, rb) in a.iter().zip(b) {
        let (ia, ib) = (ra.items(), rb.items());
        let keys: BTreeSet<_> = ia.keys().chain(ib.keys()).collect();
        for k in keys {
            la.push(ia.get(k).map_or(ABSENT.to_string(), |x| x.severity.to_string()));
            lb.push(ib.get(k).map_or(ABSENT.to_string(), |x| x.severity.to_string()));
        }
    }
    (la, lb)
}

/// Pairwise Cohen's kappa between annotators over completed tasks.
pub fn agreement_stats(book: &TaskBook) -> AgreementStats {
    let labels = finalized_labels(book);
    let raters: Vec<String> = labels.keys().cloned().collect();
    if raters.len() < 2 {
        return AgreementStats::InsufficientData {
            message: format!("{} rater(s) with completed tasks; at least two are needed", raters.len()),
        };
    }
    let n = raters.len();
    let mut matrix = vec![vec![None; n]; n];
    let mut pairs = Vec::new();
    let mut all_a: Vec<String> = Vec::new();
    let mut all_b: Vec<String> = Vec::new();
    for i in 0..n {
        matrix[i][i] = Some(1.0);
        for j in i + 1..n {
            let (a, b) = (&labels[&raters[i]], &labels[&raters[j]]);
            let posts = shared_posts(a, b);
            let ra: Vec<&AnnotationRecord> = posts.iter().map(|p| &a[*p]).collect();
            let rb: Vec<&AnnotationRecord> = posts.iter().map(|p| &b[*p]).collect();
            let (la, lb) = paired_labels(&ra, &rb);
            let Ok(kappa) = cohens_kappa(&la, &lb) else { continue };
            matrix[i][j] = Some(kappa);
            matrix[j][i] = Some(kappa);
            pairs.push(PairAgreement {
                rater_a: raters[i].clone(),
                rater_b: raters[j].clone(),
                posts: posts.len(),
                items: la.len(),
                kappa,
                confusion: ConfusionTable::from_pairs(la.iter().map(String::as_str).zip(lb.iter().map(String::as_str))),
            });
            all_a.extend(la);
            all_b.extend(lb);
        }
    }
    if pairs.is_empty() {
        return AgreementStats::InsufficientData { message: "no two raters share a labeled item".into() };
    }
    let mean_kappa = pairs.iter().map(|p| p.kappa).sum::<f64>() / pairs.len() as f64;
    let confusion = ConfusionTable::from_pairs(all_a.iter().map(String::as_str).zip(all_b.iter().map(String::as_str)));
    AgreementStats::Ok { raters, pairs, matrix, mean_kappa, confusion }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClinicalStats {
    Ok {
        records: usize,
        #[serde(flatten)]
        aggregate: ClinicalAggregate,
    },
    InsufficientData {
        message: String,
    },
}

pub fn clinical_stats(ratings: &[RatingRecord]) -> ClinicalStats {
    if ratings.is_empty() {
        return ClinicalStats::InsufficientData { message: "no ratings submitted".into() };
    }
    let flat: Vec<_> = ratings.iter().flat_map(RatingRecord::axis_ratings).collect();
    match clinical_eval_aggregate(&flat) {
        Ok(aggregate) => ClinicalStats::Ok { records: ratings.len(), aggregate },
        Err(e) => ClinicalStats::InsufficientData { message: e.to_string() },
    }
}
