use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result, Severity};
use crate::text::normalize_term;

/// One annotator's labels for one post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub post_id: String,
    pub annotator_id: String,
    pub drugs: Vec<DrugAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugAnnotation {
    pub name: String,
    pub ades: Vec<AdeAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdeAnnotation {
    pub text: String,
    pub severity: Severity,
    pub adversity: bool,
    #[serde(default)]
    pub evidence_terms: Vec<String>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.post_id.trim().is_empty() {
            return Err(CorpusError::InvalidAnnotation("empty post_id".into()));
        }
        if self.annotator_id.trim().is_empty() {
            return Err(CorpusError::InvalidAnnotation("empty annotator_id".into()));
        }
        for drug in &self.drugs {
            if normalize_term(&drug.name).is_empty() {
                return Err(CorpusError::InvalidAnnotation("empty drug name".into()));
            }
            for ade in &drug.ades {
                if normalize_term(&ade.text).is_empty() {
                    return Err(CorpusError::InvalidAnnotation(format!(
                        "empty ADE text under drug `{}`",
                        drug.name
                    )));
                }
                if ade.adversity && ade.evidence_terms.iter().all(|t| t.trim().is_empty()) {
                    return Err(CorpusError::InvalidAnnotation(format!(
                        "ADE `{}` marked adverse without evidence terms",
                        ade.text
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lowercase-normalize drug names and ADE texts, merging repeated
    /// entries.
    pub fn normalized(&self) -> AnnotationRecord {
        let mut drugs: BTreeMap<String, BTreeMap<String, AdeAnnotation>> = BTreeMap::new();
        for drug in &self.drugs {
            let ades = drugs.entry(normalize_term(&drug.name)).or_default();
            for ade in &drug.ades {
                let key = normalize_term(&ade.text);
                let mut evidence: Vec<String> =
                    ade.evidence_terms.iter().map(|t| normalize_term(t)).filter(|t| !t.is_empty()).collect();
                evidence.sort();
                evidence.dedup();
                ades.entry(key.clone())
                    .and_modify(|existing| {
                        existing.severity = existing.severity.max(ade.severity);
                        existing.adversity |= ade.adversity;
                        existing.evidence_terms.extend(evidence.iter().cloned());
                        existing.evidence_terms.sort();
                        existing.evidence_terms.dedup();
                    })
                    .or_insert(AdeAnnotation {
                        text: key,
                        severity: ade.severity,
                        adversity: ade.adversity,
                        evidence_terms: evidence,
                    });
            }
        }
        AnnotationRecord {
            post_id: self.post_id.clone(),
            annotator_id: self.annotator_id.clone(),
            drugs: drugs
                .into_iter()
                .map(|(name, ades)| DrugAnnotation { name, ades: ades.into_values().collect() })
                .collect(),
        }
    }

    /// Flattened `(drug, ade) -> label` view of a normalized record.
    pub fn items(&self) -> BTreeMap<(String, String), &AdeAnnotation> {
        self.drugs
            .iter()
            .flat_map(|d| d.ades.iter().map(move |a| ((d.name.clone(), a.text.clone()), a)))
            .collect()
    }
}

/// Which part of an item failed to reach a strict majority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisputedField {
    /// Annotators split on whether the item exists at all.
    Presence,
    Severity,
    Adversity,
}

/// An item routed to adjudication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisputedItem {
    pub drug: String,
    pub ade: String,
    pub field: DisputedField,
    /// `(annotator_id, label)`, sorted by annotator; `None` means the
    /// annotator did not list the item.
    pub votes: Vec<(String, Option<String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregation {
    #[serde(rename = "final")]
    pub final_record: AnnotationRecord,
    pub unresolved: Vec<DisputedItem>,
}

/// Annotator id stamped on aggregated records.
pub const MAJORITY_ANNOTATOR: &str = "majority";

fn strict_majority<T: Ord + Clone>(votes: impl IntoIterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    let mut total = 0;
    for v in votes {
        *counts.entry(v).or_default() += 1;
        total += 1;
    }
    counts.into_iter().find(|(_, c)| 2 * c > total).map(|(v, _)| v)
}

/// Majority vote over several annotators' labels for one post.
///
/// An item is kept when a strict majority of annotators listed it; its
/// severity and adversity are then each decided by strict majority among
/// the annotators who listed it. Any decision without a strict majority
/// sends the item to `unresolved` instead of the final record.
pub fn aggregate_annotations(records: &[AnnotationRecord]) -> Result<Aggregation> {
    if records.is_empty() {
        return Err(CorpusError::Aggregation("no annotation records".into()));
    }
    let post_id = &records[0].post_id;
    if let Some(other) = records.iter().find(|r| &r.post_id != post_id) {
        return Err(CorpusError::Aggregation(format!(
            "records reference different posts (`{post_id}` and `{}`)",
            other.post_id
        )));
    }
    let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
    if annotators.len() != records.len() {
        return Err(CorpusError::Aggregation("an annotator submitted twice".into()));
    }
    if records.len() < 2 {
        return Err(CorpusError::Aggregation("need at least two annotators".into()));
    }
    for r in records {
        r.validate()?;
    }

    let mut normalized: Vec<AnnotationRecord> = records.iter().map(|r| r.normalized()).collect();
    normalized.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    let views: Vec<_> = normalized.iter().map(|r| (r.annotator_id.as_str(), r.items())).collect();
    let all_items: BTreeSet<(String, String)> =
        views.iter().flat_map(|(_, items)| items.keys().cloned()).collect();

    let n = views.len();
    let mut kept: BTreeMap<String, Vec<AdeAnnotation>> = BTreeMap::new();
    let mut unresolved = Vec::new();

    for key in all_items {
        let labels: Vec<(&str, Option<&AdeAnnotation>)> =
            views.iter().map(|(who, items)| (*who, items.get(&key).copied())).collect();
        let listed: Vec<&AdeAnnotation> = labels.iter().filter_map(|(_, l)| *l).collect();
        let dispute = |field: DisputedField, render: &dyn Fn(&AdeAnnotation) -> String| DisputedItem {
            drug: key.0.clone(),
            ade: key.1.clone(),
            field,
            votes: labels.iter().map(|(who, l)| (who.to_string(), l.map(render))).collect(),
        };

        if 2 * listed.len() <= n {
            if 2 * listed.len() == n {
                unresolved.push(dispute(DisputedField::Presence, &|_| "present".into()));
            }
            continue;
        }
        let Some(severity) = strict_majority(listed.iter().map(|a| a.severity)) else {
            unresolved.push(dispute(DisputedField::Severity, &|a| a.severity.to_string()));
            continue;
        };
        let Some(adversity) = strict_majority(listed.iter().map(|a| a.adversity)) else {
            unresolved.push(dispute(DisputedField::Adversity, &|a| a.adversity.to_string()));
            continue;
        };
        let mut evidence: Vec<String> = listed
            .iter()
            .filter(|a| a.adversity == adversity && adversity)
            .flat_map(|a| a.evidence_terms.iter().cloned())
            .collect();
        evidence.sort();
        evidence.dedup();
        kept.entry(key.0.clone()).or_default().push(AdeAnnotation {
            text: key.1.clone(),
            severity,
            adversity,
            evidence_terms: evidence,
        });
    }

    Ok(Aggregation {
        final_record: AnnotationRecord {
            post_id: post_id.clone(),
            annotator_id: MAJORITY_ANNOTATOR.into(),
            drugs: kept.into_iter().map(|(name, ades)| DrugAnnotation { name, ades }).collect(),
        },
        unresolved,
    })
}
