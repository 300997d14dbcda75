use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricsError, Prf, Result};
use crate::corpus::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences of the class.
    pub support: usize,
    /// Predicted occurrences of the class.
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Macro precision over labels present in gold.
    pub precision: f64,
    /// Macro recall over labels present in gold.
    pub recall: f64,
    /// Mean of per-class F1 over labels present in gold.
    pub f1: f64,
    pub support: usize,
    pub per_class: BTreeMap<Severity, ClassScores>,
}

/// Accuracy and macro-averaged precision, recall and F1.
///
/// Per-class scores are reported for every label seen in either list; the
/// macro averages cover labels present in `gold` only. A class never
/// predicted has precision 0.
pub fn classification_report(pred: &[Severity], gold: &[Severity]) -> Result<ClassificationReport> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty("no labels to score".into()));
    }
    let mut tp: BTreeMap<Severity, usize> = BTreeMap::new();
    let mut n_pred: BTreeMap<Severity, usize> = BTreeMap::new();
    let mut n_gold: BTreeMap<Severity, usize> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gold) {
        *n_pred.entry(p).or_default() += 1;
        *n_gold.entry(g).or_default() += 1;
        if p == g {
            *tp.entry(g).or_default() += 1;
        }
    }
    let correct: usize = tp.values().sum();

    let mut per_class = BTreeMap::new();
    for &label in n_gold.keys().chain(n_pred.keys()) {
        let hit = tp.get(&label).copied().unwrap_or(0) as f64;
        let support = n_gold.get(&label).copied().unwrap_or(0);
        let predicted = n_pred.get(&label).copied().unwrap_or(0);
        let ratio = |n: usize| if n == 0 { 0.0 } else { hit / n as f64 };
        let prf = Prf::new(ratio(predicted), ratio(support));
        per_class.insert(
            label,
            ClassScores { precision: prf.precision, recall: prf.recall, f1: prf.f1, support, predicted },
        );
    }

    let k = n_gold.len() as f64;
    let macro_avg = |f: fn(&ClassScores) -> f64| n_gold.keys().map(|l| f(&per_class[l])).sum::<f64>() / k;
    Ok(ClassificationReport {
        accuracy: correct as f64 / gold.len() as f64,
        precision: macro_avg(|c| c.precision),
        recall: macro_avg(|c| c.recall),
        f1: macro_avg(|c| c.f1),
        support: gold.len(),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Severity::*;

    #[test]
    fn perfect_prediction() {
        let gold = [High, Mild, NotApplicable, Moderate];
        let r = classification_report(&gold, &gold).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        let single = classification_report(&[Mild; 3], &[Mild; 3]).unwrap();
        assert_eq!(single.f1, 1.0);
    }

    #[test]
    fn hand_computed_confusion() {
        let r = classification_report(&[High, Mild, Mild, Mild], &[High, High, Mild, Mild]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        // High: P 1, R 1/2, F1 2/3. Mild: P 2/3, R 1, F1 4/5.
        assert!((r.precision - 5.0 / 6.0).abs() < 1e-15);
        assert!((r.recall - 0.75).abs() < 1e-15);
        assert!((r.f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
        assert_eq!(r.per_class[&High].support, 2);
        assert_eq!(r.per_class[&Mild].predicted, 3);
    }

    #[test]
    fn predicted_only_labels_do_not_enter_the_macro() {
        let r = classification_report(&[High, Moderate], &[High, High]).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.per_class[&Moderate].support, 0);
    }

    #[test]
    fn errors() {
        assert!(matches!(classification_report(&[High], &[]), Err(MetricsError::LengthMismatch(1, 0))));
        assert!(matches!(classification_report(&[], &[]), Err(MetricsError::Empty(_))));
    }

    fn label() -> impl Strategy<Value = Severity> {
        prop::sample::select(Severity::DESCENDING.to_vec())
    }

    proptest! {
        #[test]
        fn scores_in_range(pairs in prop::collection::vec((label(), label()), 1..40)) {
            let (pred, gold): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = classification_report(&pred, &gold).unwrap();
            for v in [r.accuracy, r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let same = classification_report(&gold, &gold).unwrap();
            prop_assert_eq!(same.f1, 1.0);
        }
    }
}
