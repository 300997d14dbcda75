use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Result, SummarizationError};
use crate::corpus::Severity;
use crate::extraction::TermMatcher;
use crate::grouping::SeverityBuckets;
use crate::http::{field, EndpointConfig, JsonClient, TransportError};
use crate::text::normalize_term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A more severe ADE follows a less severe one.
    SeverityIncrease,
    /// Same severity, but not in ascending alphabetical order.
    Alphabetical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderViolation {
    /// Index of the offending entry in the trace.
    pub index: usize,
    /// Byte offset of the offending mention in the lowercased summary, when
    /// the trace was recovered from text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    pub kind: ViolationKind,
    pub previous: (Severity, String),
    pub current: (Severity, String),
}

/// One drug's summary plus the order in which it mentions ADE groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugSummary {
    pub drug: String,
    pub text: String,
    pub severity_order_trace: Vec<(Severity, String)>,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<OrderViolation>,
}

impl DrugSummary {
    pub fn is_well_ordered(&self) -> bool {
        audit_order(&self.severity_order_trace).is_empty()
    }
}

fn audit(trace: &[(Severity, String)], offsets: Option<&[usize]>) -> Vec<OrderViolation> {
    let mut out = Vec::new();
    for i in 1..trace.len() {
        let (prev, cur) = (&trace[i - 1], &trace[i]);
        let kind = if cur.0 > prev.0 {
            ViolationKind::SeverityIncrease
        } else if cur.0 == prev.0 && cur.1 < prev.1 {
            ViolationKind::Alphabetical
        } else {
            continue;
        };
        out.push(OrderViolation {
            index: i,
            offset: offsets.map(|o| o[i]),
            kind,
            previous: prev.clone(),
            current: cur.clone(),
        });
    }
    out
}

/// Every adjacent pair that breaks "most severe first, alphabetical
/// within a severity".
pub fn audit_order(trace: &[(Severity, String)]) -> Vec<OrderViolation> {
    audit(trace, None)
}

fn severity_label(s: Severity) -> &'static str {
    match s {
        Severity::High => "High",
        Severity::Moderate => "Moderate",
        Severity::Mild => "Mild",
        Severity::NotApplicable => "Unspecified",
    }
}

/// Deterministic summary text and its trace: `DRUG: <name>.` followed by
/// one sentence per severity present, most severe first, each listing the
/// cluster representatives alphabetically.
pub fn template_text(drug: &str, buckets: &SeverityBuckets) -> (String, Vec<(Severity, String)>) {
    let mut text = format!("DRUG: {drug}.");
    let mut trace = Vec::new();
    for (severity, clusters) in buckets.iter_descending() {
        let mut reps: Vec<&str> = clusters.iter().map(|c| c.representative.as_str()).collect();
        if reps.is_empty() {
            continue;
        }
        reps.sort_unstable();
        reps.dedup();
        text.push_str(&format!(" {} severity: {}.", severity_label(severity), reps.join(", ")));
        trace.extend(reps.into_iter().map(|r| (severity, r.to_string())));
    }
    (text, trace)
}

pub fn template_summarize(drug: &str, buckets: &SeverityBuckets) -> Result<DrugSummary> {
    let (text, trace) = template_text(drug, buckets);
    if trace.is_empty() {
        return Err(SummarizationError::EmptyEntry(drug.to_string()));
    }
    Ok(DrugSummary {
        drug: drug.to_string(),
        text,
        severity_order_trace: trace,
        backend_id: TemplateSummarizer::ID.into(),
        violations: Vec::new(),
    })
}

/// Recover `(severity, representative)` mentions from free text, first
/// mention of each representative only. A representative present in
/// several buckets is attributed to the most severe one.
fn scan_trace(text: &str, buckets: &SeverityBuckets) -> (Vec<(Severity, String)>, Vec<usize>) {
    let mut known: BTreeMap<String, (Severity, String)> = BTreeMap::new();
    for (severity, clusters) in buckets.iter_descending() {
        for c in clusters {
            known.entry(normalize_term(&c.representative)).or_insert((severity, c.representative.clone()));
        }
    }
    let matcher = TermMatcher::new(known.keys());
    let mut seen = HashSet::new();
    let mut trace = Vec::new();
    let mut offsets = Vec::new();
    for (offset, t) in matcher.find_all(&text.to_lowercase()) {
        let term = matcher.term(t);
        if seen.insert(term.to_string()) {
            trace.push(known[term].clone());
            offsets.push(offset);
        }
    }
    (trace, offsets)
}

/// Text generation for one drug's groups.
pub trait SummaryBackend: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, drug: &str, groups: &SeverityBuckets) -> std::result::Result<String, TransportError>;
}

/// Summarize with a model backend and audit, but never rewrite, the
/// ordering of what it produced.
pub fn model_summarize(drug: &str, buckets: &SeverityBuckets, backend: &dyn SummaryBackend) -> Result<DrugSummary> {
    let text = backend.generate(drug, buckets)?;
    if text.trim().is_empty() {
        return Err(SummarizationError::EmptyResponse(drug.to_string()));
    }
    let (trace, offsets) = scan_trace(&text, buckets);
    let violations = audit(&trace, Some(&offsets));
    Ok(DrugSummary {
        drug: drug.to_string(),
        text,
        severity_order_trace: trace,
        backend_id: backend.id().to_string(),
        violations,
    })
}

/// `POST {"drug", "groups"}` → `{"summary"}`.
#[derive(Debug, Clone)]
pub struct HttpSummaryBackend {
    id: String,
    client: JsonClient,
}

impl HttpSummaryBackend {
    pub fn new(id: impl Into<String>, config: EndpointConfig) -> Self {
        HttpSummaryBackend { id: id.into(), client: JsonClient::new(config) }
    }

    /// Summarize raw post texts with no extraction or grouping.
    pub fn generate_from_posts(&self, posts: &[String]) -> std::result::Result<String, TransportError> {
        let response = self.client.post(&json!({ "drug": null, "groups": null, "posts": posts }))?;
        summary_field(&response)
    }
}

fn summary_field(response: &serde_json::Value) -> std::result::Result<String, TransportError> {
    field(response, "summary")?.as_str().map(String::from).ok_or_else(|| TransportError {
        message: "`summary` is not a string".into(),
        retryable: false,
    })
}

impl SummaryBackend for HttpSummaryBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, drug: &str, groups: &SeverityBuckets) -> std::result::Result<String, TransportError> {
        let response = self.client.post(&json!({ "drug": drug, "groups": groups }))?;
        summary_field(&response)
    }
}

/// Canned summaries keyed by drug name.
#[derive(Debug, Clone, Default)]
pub struct ReplaySummaryBackend {
    id: String,
    by_drug: HashMap<String, String>,
}

impl ReplaySummaryBackend {
    pub fn new(id: impl Into<String>) -> Self {
        ReplaySummaryBackend { id: id.into(), by_drug: HashMap::new() }
    }

    pub fn insert(&mut self, drug: &str, summary: impl Into<String>) {
        self.by_drug.insert(drug.to_string(), summary.into());
    }
}

impl SummaryBackend for ReplaySummaryBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, drug: &str, _groups: &SeverityBuckets) -> std::result::Result<String, TransportError> {
        self.by_drug.get(drug).cloned().ok_or_else(|| TransportError {
            message: format!("no recorded summary for `{drug}`"),
            retryable: false,
        })
    }
}

/// Anything that turns one drug's grid entry into a summary.
pub trait Summarizer: Send + Sync {
    fn id(&self) -> &str;

    fn summarize(&self, drug: &str, buckets: &SeverityBuckets) -> Result<DrugSummary>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateSummarizer;

impl TemplateSummarizer {
    pub const ID: &'static str = "template";
}

impl Summarizer for TemplateSummarizer {
    fn id(&self) -> &str {
        Self::ID
    }

    fn summarize(&self, drug: &str, buckets: &SeverityBuckets) -> Result<DrugSummary> {
        template_summarize(drug, buckets)
    }
}

pub struct ModelSummarizer {
    backend: Box<dyn SummaryBackend>,
}

impl ModelSummarizer {
    pub fn new(backend: Box<dyn SummaryBackend>) -> Self {
        ModelSummarizer { backend }
    }
}

impl Summarizer for ModelSummarizer {
    fn id(&self) -> &str {
        self.backend.id()
    }

    fn summarize(&self, drug: &str, buckets: &SeverityBuckets) -> Result<DrugSummary> {
        model_summarize(drug, buckets, self.backend.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::{AdeCluster, ClusterMember};

    fn buckets(entries: &[(Severity, &[&str])]) -> SeverityBuckets {
        let mut b = SeverityBuckets::default();
        for (s, reps) in entries {
            b.0.insert(
                *s,
                reps.iter()
                    .map(|r| AdeCluster {
                        representative: r.to_string(),
                        members: vec![ClusterMember { ade_text: r.to_string(), post_id: "p".into() }],
                    })
                    .collect(),
            );
        }
        b
    }

    fn pair(s: Severity, r: &str) -> (Severity, String) {
        (s, r.to_string())
    }

    #[test]
    fn template_orders_by_severity() {
        let b = buckets(&[(Severity::Mild, &["hot flashes"]), (Severity::High, &["blood clots"])]);
        let s = template_summarize("tamoxifen", &b).unwrap();
        assert_eq!(
            s.severity_order_trace,
            vec![pair(Severity::High, "blood clots"), pair(Severity::Mild, "hot flashes")]
        );
        assert_eq!(s.text, "DRUG: tamoxifen. High severity: blood clots. Mild severity: hot flashes.");
        assert!(s.is_well_ordered());
    }

    #[test]
    fn template_omits_absent_buckets_and_sorts() {
        let b = buckets(&[(Severity::Mild, &["rash"])]);
        let s = template_summarize("x", &b).unwrap();
        assert!(!s.text.contains("High") && !s.text.contains("Moderate"));

        let b = buckets(&[(Severity::High, &["nausea", "fatigue"])]);
        let s = template_summarize("x", &b).unwrap();
        assert_eq!(s.severity_order_trace, vec![pair(Severity::High, "fatigue"), pair(Severity::High, "nausea")]);

        assert!(template_summarize("x", &SeverityBuckets::default()).is_err());
    }

    #[test]
    fn model_gold_replay_is_ordered() {
        let b = buckets(&[(Severity::High, &["blood clots"]), (Severity::Mild, &["hot flashes", "fatigue"])]);
        let mut backend = ReplaySummaryBackend::new("replay");
        backend.insert("tamoxifen", "Tamoxifen caused Blood clots in some patients; fatigue and hot flashes were mild.");
        let s = model_summarize("tamoxifen", &b, &backend).unwrap();
        assert!(s.violations.is_empty());
        assert_eq!(s.severity_order_trace.len(), 3);
        assert_eq!(s, model_summarize("tamoxifen", &b, &backend).unwrap());
    }

    #[test]
    fn model_violation_recorded_with_position() {
        let b = buckets(&[(Severity::High, &["blood clots"]), (Severity::Mild, &["hot flashes"])]);
        let mut backend = ReplaySummaryBackend::new("replay");
        let text = "Mostly hot flashes, rarely blood clots.";
        backend.insert("tamoxifen", text);
        let s = model_summarize("tamoxifen", &b, &backend).unwrap();
        assert_eq!(s.text, text);
        assert_eq!(s.violations.len(), 1);
        let v = &s.violations[0];
        assert_eq!(v.kind, ViolationKind::SeverityIncrease);
        assert_eq!(v.index, 1);
        assert_eq!(v.offset, Some(text.find("blood clots").unwrap()));
    }

    #[test]
    fn model_empty_and_missing() {
        let b = buckets(&[(Severity::Mild, &["rash"])]);
        let mut backend = ReplaySummaryBackend::new("replay");
        backend.insert("x", "   ");
        assert!(matches!(model_summarize("x", &b, &backend), Err(SummarizationError::EmptyResponse(_))));
        assert!(matches!(model_summarize("y", &b, &backend), Err(SummarizationError::Transport(_))));
    }

    #[test]
    fn audit_detects_alphabetical_breaks() {
        let trace = vec![pair(Severity::Moderate, "nausea"), pair(Severity::Moderate, "fatigue")];
        let v = audit_order(&trace);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Alphabetical);
        assert!(v[0].offset.is_none());
    }

    #[test]
    fn summary_jsonl_fields() {
        let b = buckets(&[(Severity::High, &["sepsis"])]);
        let s = template_summarize("x", &b).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["backend_id", "drug", "severity_order_trace", "text"]);
        assert_eq!(v["severity_order_trace"], json!([["high", "sepsis"]]));
    }
}
