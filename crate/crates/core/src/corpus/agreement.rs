use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// Cohen's kappa between two label sequences.
///
/// Computed from integer counts, `(n·agree − Σ a_k·b_k) / (n² − Σ a_k·b_k)`,
/// so hand-computable tables come out exact. When chance agreement is 1
/// (both annotators used one identical label throughout) the result is 1.
pub fn cohens_kappa<T: Ord>(labels_a: &[T], labels_b: &[T]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(CorpusError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(CorpusError::EmptyLabels);
    }
    let n = labels_a.len() as i128;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as i128;

    let mut marginals: BTreeMap<&T, (i128, i128)> = BTreeMap::new();
    for a in labels_a {
        marginals.entry(a).or_default().0 += 1;
    }
    for b in labels_b {
        marginals.entry(b).or_default().1 += 1;
    }
    let chance: i128 = marginals.values().map(|(a, b)| a * b).sum();

    let denom = n * n - chance;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok((n * agree - chance) as f64 / denom as f64)
}

/// Mean of Cohen's kappa over every annotator pair.
///
/// `annotations[i]` is annotator i's label sequence; all sequences must be
/// aligned on the same items.
pub fn mean_pairwise_kappa<T: Ord>(annotations: &[Vec<T>]) -> Result<f64> {
    if annotations.len() < 2 {
        return Err(CorpusError::EmptyLabels);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..annotations.len() {
        for j in i + 1..annotations.len() {
            total += cohens_kappa(&annotations[i], &annotations[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Label-by-label confusion counts between two annotators.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub labels: Vec<String>,
    /// `counts[i][j]`: first annotator said `labels[i]`, second `labels[j]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)> + Clone) -> Self {
        let labels: BTreeSet<&str> = pairs.clone().into_iter().flat_map(|(a, b)| [a, b]).collect();
        let labels: Vec<String> = labels.into_iter().map(String::from).collect();
        let pos = |l: &str| labels.iter().position(|x| x == l).expect("label collected above");
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (a, b) in pairs {
            counts[pos(a)][pos(b)] += 1;
        }
        ConfusionTable { labels, counts }
    }
}
