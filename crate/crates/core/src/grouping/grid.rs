use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::cluster::{hierarchical_cluster, Linkage};
use super::embedding::{embed_texts, EmbeddingProvider};
use super::{GroupingError, Result};
use crate::corpus::Severity;
use crate::extraction::ExtractionRecord;
use crate::text::normalize_term;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterMember {
    pub ade_text: String,
    pub post_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdeCluster {
    /// Lexicographically smallest member text.
    pub representative: String,
    /// Sorted by `(ade_text, post_id)`.
    pub members: Vec<ClusterMember>,
}

/// Clusters per severity; serializes most severe first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeverityBuckets(pub BTreeMap<Severity, Vec<AdeCluster>>);

impl SeverityBuckets {
    /// Non-empty buckets, most severe first.
    pub fn iter_descending(&self) -> impl Iterator<Item = (Severity, &[AdeCluster])> {
        Severity::DESCENDING
            .into_iter()
            .filter_map(|s| self.0.get(&s).map(|c| (s, c.as_slice())))
    }

    pub fn get(&self, severity: Severity) -> Option<&[AdeCluster]> {
        self.0.get(&severity).map(Vec::as_slice)
    }
}

impl Serialize for SeverityBuckets {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (severity, clusters) in self.iter_descending() {
            map.serialize_entry(&severity, clusters)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for SeverityBuckets {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        BTreeMap::deserialize(deserializer).map(SeverityBuckets)
    }
}

/// Per-drug, per-severity clusters of ADE mentions, with the settings that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugGroupGrid {
    pub linkage: Linkage,
    pub threshold: f64,
    pub provider_id: String,
    pub entries: BTreeMap<String, SeverityBuckets>,
}

type BucketKey = (String, Severity);

impl DrugGroupGrid {
    pub fn drugs(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, drug: &str) -> Option<&SeverityBuckets> {
        self.entries.get(drug)
    }

    pub fn cluster_count(&self) -> usize {
        self.entries.values().flat_map(|b| b.0.values()).map(Vec::len).sum()
    }

    fn member_multiset(&self) -> BTreeMap<(String, Severity, ClusterMember), usize> {
        let mut out = BTreeMap::new();
        for (drug, buckets) in &self.entries {
            for (severity, clusters) in &buckets.0 {
                for m in clusters.iter().flat_map(|c| &c.members) {
                    *out.entry((drug.clone(), *severity, m.clone())).or_insert(0) += 1;
                }
            }
        }
        out
    }

    /// Check that clusters cover exactly the items of `records`, with no
    /// member in two clusters and every member under its own severity.
    pub fn check_coverage(&self, records: &[ExtractionRecord]) -> std::result::Result<(), String> {
        let mut expected = BTreeMap::new();
        for r in records {
            for item in &r.items {
                let member = ClusterMember { ade_text: item.ade_text.clone(), post_id: r.post_id.clone() };
                *expected.entry((normalize_term(&item.drug), item.severity, member)).or_insert(0) += 1;
            }
        }
        let actual = self.member_multiset();
        if actual != expected {
            let missing = expected.keys().find(|k| !actual.contains_key(*k));
            let extra = actual.keys().find(|k| !expected.contains_key(*k));
            return Err(format!("grid members differ from input items (missing {missing:?}, extra {extra:?})"));
        }
        for (drug, buckets) in &self.entries {
            for (severity, clusters) in &buckets.0 {
                let mut seen = BTreeSet::new();
                for c in clusters {
                    let texts: BTreeSet<&str> = c.members.iter().map(|m| m.ade_text.as_str()).collect();
                    if texts.first().copied() != Some(c.representative.as_str()) {
                        return Err(format!("{drug}/{severity}: representative {:?} is not the minimum", c.representative));
                    }
                    for t in texts {
                        if !seen.insert(t) {
                            return Err(format!("{drug}/{severity}: {t:?} appears in two clusters"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Group items by drug, then severity, and cluster the distinct ADE texts
/// inside each bucket. Items of different severities never share a cluster.
pub fn build_grid(
    records: &[ExtractionRecord],
    provider: &dyn EmbeddingProvider,
    linkage: Linkage,
    threshold: f64,
) -> Result<DrugGroupGrid> {
    if !(0.0..=2.0).contains(&threshold) {
        return Err(GroupingError::InvalidThreshold(threshold));
    }
    let mut buckets: BTreeMap<BucketKey, Vec<ClusterMember>> = BTreeMap::new();
    for r in records {
        for item in &r.items {
            let drug = normalize_term(&item.drug);
            if drug.is_empty() || item.ade_text.trim().is_empty() {
                return Err(GroupingError::InvalidInput(format!("post {}: empty drug or ADE text", r.post_id)));
            }
            buckets.entry((drug, item.severity)).or_default().push(ClusterMember {
                ade_text: item.ade_text.clone(),
                post_id: r.post_id.clone(),
            });
        }
    }

    let unique: BTreeSet<&str> =
        buckets.values().flatten().map(|m| m.ade_text.as_str()).collect();
    let unique: Vec<String> = unique.into_iter().map(String::from).collect();
    let vectors = embed_texts(&unique, provider)?;
    let by_text: HashMap<&str, &[f64]> =
        unique.iter().map(String::as_str).zip(vectors.iter().map(|v| v.values.as_slice())).collect();

    let clustered: Vec<(BucketKey, Vec<AdeCluster>)> = buckets
        .into_par_iter()
        .map(|(key, members)| {
            let texts: Vec<&str> =
                members.iter().map(|m| m.ade_text.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
            let vecs: Vec<&[f64]> = texts.iter().map(|t| by_text[t]).collect();
            let partition = hierarchical_cluster(&vecs, linkage, threshold)?;
            let texts = &texts;
            let slot: HashMap<&str, usize> = partition
                .iter()
                .enumerate()
                .flat_map(|(c, idx)| idx.iter().map(move |&i| (texts[i], c)))
                .collect();
            let mut clusters: Vec<AdeCluster> = partition
                .iter()
                .map(|idx| AdeCluster { representative: texts[idx[0]].to_string(), members: Vec::new() })
                .collect();
            for m in &members {
                clusters[slot[m.ade_text.as_str()]].members.push(m.clone());
            }
            for c in clusters.iter_mut() {
                c.members.sort();
            }
            clusters.sort_by(|a, b| a.representative.cmp(&b.representative));
            Ok((key, clusters))
        })
        .collect::<Result<_>>()?;

    let mut entries: BTreeMap<String, SeverityBuckets> = BTreeMap::new();
    for ((drug, severity), clusters) in clustered {
        entries.entry(drug).or_default().0.insert(severity, clusters);
    }
    Ok(DrugGroupGrid { linkage, threshold, provider_id: provider.id().to_string(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::ExtractionItem;
    use crate::grouping::HashingProvider;

    fn record(post: &str, items: &[(&str, &str, Severity)]) -> ExtractionRecord {
        ExtractionRecord {
            post_id: post.into(),
            items: items
                .iter()
                .map(|(d, a, s)| ExtractionItem {
                    drug: d.to_string(),
                    ade_text: a.to_string(),
                    severity: *s,
                    adversity: false,
                })
                .collect(),
            backend_id: "test".into(),
            raw_model_output: None,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn single_item() {
        let recs = vec![record("p1", &[("Tamoxifen", "hot flashes", Severity::Mild)])];
        let g = build_grid(&recs, &HashingProvider::default(), Linkage::Average, 0.4).unwrap();
        assert_eq!(g.drugs().collect::<Vec<_>>(), vec!["tamoxifen"]);
        assert_eq!(g.cluster_count(), 1);
        g.check_coverage(&recs).unwrap();
    }

    #[test]
    fn severities_never_share_clusters() {
        let recs = vec![record("p1", &[("x", "nausea", Severity::High), ("x", "nausea", Severity::Mild)])];
        let g = build_grid(&recs, &HashingProvider::default(), Linkage::Single, 2.0).unwrap();
        let b = g.get("x").unwrap();
        assert_eq!(b.get(Severity::High).unwrap().len(), 1);
        assert_eq!(b.get(Severity::Mild).unwrap().len(), 1);
        g.check_coverage(&recs).unwrap();
    }

    #[test]
    fn similar_texts_cluster_with_min_representative() {
        let recs = vec![
            record("p1", &[("x", "hot flashes", Severity::Moderate)]),
            record("p2", &[("x", "hot flash", Severity::Moderate), ("x", "hair loss", Severity::Moderate)]),
            record("p3", &[("x", "hot flashes", Severity::Moderate)]),
        ];
        let g = build_grid(&recs, &HashingProvider::default(), Linkage::Average, 0.4).unwrap();
        let clusters = g.get("x").unwrap().get(Severity::Moderate).unwrap();
        assert_eq!(clusters.len(), 2);
        let hot = clusters.iter().find(|c| c.representative == "hot flash").unwrap();
        assert_eq!(hot.members.len(), 3);
        g.check_coverage(&recs).unwrap();
    }

    #[test]
    fn serializes_severities_descending() {
        let recs = vec![record(
            "p1",
            &[("x", "a", Severity::NotApplicable), ("x", "b", Severity::Mild), ("x", "c", Severity::High)],
        )];
        let g = build_grid(&recs, &HashingProvider::default(), Linkage::Average, 0.4).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let (h, m, n) = (json.find("\"high\"").unwrap(), json.find("\"mild\"").unwrap(), json.find("\"na\"").unwrap());
        assert!(h < m && m < n);
        let back: DrugGroupGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn coverage_detects_tampering() {
        let recs = vec![record("p1", &[("x", "rash", Severity::Mild)])];
        let mut g = build_grid(&recs, &HashingProvider::default(), Linkage::Average, 0.4).unwrap();
        g.entries.get_mut("x").unwrap().0.get_mut(&Severity::Mild).unwrap()[0].members.clear();
        assert!(g.check_coverage(&recs).is_err());
    }

    #[test]
    fn empty_records_give_empty_grid() {
        let g = build_grid(&[], &HashingProvider::default(), Linkage::Average, 0.4).unwrap();
        assert!(g.entries.is_empty());
    }
}
