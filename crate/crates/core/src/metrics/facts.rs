use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{MetricsError, Result};
use crate::summarization::DrugSummary;
use crate::text::{normalize_term, token_string, tokenize};

/// Normalized ADE facts from a gold summary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSet {
    pub facts: BTreeSet<String>,
}

impl FactSet {
    /// Facts that contain no word characters are dropped.
    pub fn from_terms<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        let facts = terms
            .into_iter()
            .map(|t| normalize_term(t.as_ref()))
            .filter(|t| !tokenize(t).is_empty())
            .collect();
        FactSet { facts }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

pub fn extract_fact_set(gold: &DrugSummary) -> Result<FactSet> {
    let set = FactSet::from_terms(gold.severity_order_trace.iter().map(|(_, t)| t));
    if set.is_empty() {
        return Err(MetricsError::Empty(format!("gold summary for `{}` has no traced facts", gold.drug)));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactScores {
    /// Fraction of facts fully present.
    pub recall: f64,
    /// Fraction of facts with no token present.
    pub omission: f64,
    /// Fraction of facts not fully present but with at least half their
    /// tokens present.
    pub partial: f64,
    pub total: usize,
}

enum Presence {
    Full,
    Partial,
    Absent,
    Weak,
}

fn presence(padded: &str, tokens: &HashSet<String>, fact: &str) -> Presence {
    let phrase = token_string(fact);
    if padded.contains(&format!(" {phrase} ")) {
        return Presence::Full;
    }
    let fact_tokens = tokenize(fact);
    let hit = fact_tokens.iter().filter(|t| tokens.contains(*t)).count();
    if hit == 0 {
        Presence::Absent
    } else if 2 * hit >= fact_tokens.len() {
        Presence::Partial
    } else {
        Presence::Weak
    }
}

/// Classify each fact against `generated`.
///
/// A fact is fully present when its token sequence occurs contiguously in
/// the generated token sequence, and omitted when none of its tokens occur.
pub fn fact_scores(generated: &str, gold: &FactSet) -> Result<FactScores> {
    if gold.is_empty() {
        return Err(MetricsError::Empty("gold fact set is empty".into()));
    }
    let padded = format!(" {} ", token_string(generated));
    let tokens: HashSet<String> = tokenize(generated).into_iter().collect();
    let (mut full, mut partial, mut absent) = (0usize, 0usize, 0usize);
    for fact in &gold.facts {
        match presence(&padded, &tokens, fact) {
            Presence::Full => full += 1,
            Presence::Partial => partial += 1,
            Presence::Absent => absent += 1,
            Presence::Weak => {}
        }
    }
    let n = gold.len() as f64;
    Ok(FactScores { recall: full as f64 / n, omission: absent as f64 / n, partial: partial as f64 / n, total: gold.len() })
}

pub fn factual_recall(generated: &str, gold: &FactSet) -> Result<f64> {
    Ok(fact_scores(generated, gold)?.recall)
}

pub fn omission_rate(generated: &str, gold: &FactSet) -> Result<f64> {
    Ok(fact_scores(generated, gold)?.omission)
}
