use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::classification::classification_report;
use super::embedding_match::embedding_match_score;
use super::facts::{fact_scores, FactSet};
use super::overlap::{bleu, meteor, rouge_l, rouge_n};
use super::similarity::{hamming_distance, jaccard, ratcliff_obershelp};
use super::{MetricsError, Result};
use crate::corpus::{AnnotationRecord, Severity};
use crate::extraction::ExtractionRecord;
use crate::grouping::EmbeddingProvider;
use crate::text::{normalize_term, token_string, tokenize};

/// Selectable summary metric families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Rouge,
    Bleu,
    Meteor,
    Jaccard,
    Hamming,
    Ros,
    Bertscore,
    Facts,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Rouge,
        MetricKind::Bleu,
        MetricKind::Meteor,
        MetricKind::Jaccard,
        MetricKind::Hamming,
        MetricKind::Ros,
        MetricKind::Bertscore,
        MetricKind::Facts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Rouge => "rouge",
            MetricKind::Bleu => "bleu",
            MetricKind::Meteor => "meteor",
            MetricKind::Jaccard => "jaccard",
            MetricKind::Hamming => "hamming",
            MetricKind::Ros => "ros",
            MetricKind::Bertscore => "bertscore",
            MetricKind::Facts => "facts",
        }
    }

    /// Parse a comma-separated list such as `rouge,bleu`.
    pub fn parse_list(s: &str) -> std::result::Result<Vec<MetricKind>, String> {
        let mut out: Vec<MetricKind> =
            s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<std::result::Result<_, _>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err("no metrics selected".into());
        }
        Ok(out)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub metrics: Vec<MetricKind>,
    pub bleu_max_n: usize,
    pub bleu_smoothing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { metrics: MetricKind::ALL.to_vec(), bleu_max_n: 4, bleu_smoothing: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub scores: BTreeMap<String, f64>,
}

/// Corpus-level scores with their per-example breakdown and the parameters
/// used to compute them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean of each per-example score over the examples that have it, plus
    /// any corpus-level scores.
    pub metrics: BTreeMap<String, f64>,
    pub per_example: Vec<ExampleScores>,
    pub parameters: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricReport {
    fn from_examples(per_example: Vec<ExampleScores>, parameters: BTreeMap<String, Value>, warnings: Vec<String>) -> Self {
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for ex in &per_example {
            for (k, &v) in &ex.scores {
                let e = sums.entry(k.clone()).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        let metrics = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
        MetricReport { metrics, per_example, parameters, warnings }
    }

    /// Aligned two-column text table of the corpus-level scores.
    pub fn to_table(&self) -> String {
        let width = self.metrics.keys().map(String::len).max().unwrap_or(0).max("metric".len());
        let mut out = format!("{:<width$}  value\n", "metric");
        out.push_str(&format!("{}  {}\n", "-".repeat(width), "-".repeat(8)));
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k:<width$}  {v:.6}\n"));
        }
        out
    }
}

/// A summary keyed by drug, as read from prediction or gold JSONL. Extra
/// fields are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub drug: String,
    pub text: String,
    #[serde(default)]
    pub severity_order_trace: Vec<(Severity, String)>,
}

/// Read summary JSONL. Drug names are normalized; a repeated drug is an
/// error.
pub fn read_summary_records(path: &Path) -> Result<Vec<SummaryRecord>> {
    let text = fs::read_to_string(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut rec: SummaryRecord = serde_json::from_str(line)
            .map_err(|e| MetricsError::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rec.drug = normalize_term(&rec.drug);
        if !seen.insert(rec.drug.clone()) {
            return Err(MetricsError::InvalidInput(format!("{}: duplicate drug `{}`", path.display(), rec.drug)));
        }
        out.push(rec);
    }
    Ok(out)
}

fn summary_parameters(options: &EvalOptions, provider_id: &str) -> BTreeMap<String, Value> {
    let mut p = BTreeMap::new();
    p.insert("metrics".into(), json!(options.metrics));
    p.insert("tokenizer".into(), json!("lowercase, split on non-alphanumeric runs"));
    for m in &options.metrics {
        let v = match m {
            MetricKind::Rouge => json!({ "orders": [1, 2], "lcs": true, "averaging": "per-example mean of F1" }),
            MetricKind::Bleu => json!({ "max_n": options.bleu_max_n, "smoothing": if options.bleu_smoothing { "add-one for n >= 2" } else { "none" }, "brevity_penalty": "exp(1 - r/c) when c < r" }),
            MetricKind::Meteor => json!({ "matching": "exact unigram, greedy left to right", "alpha": 0.9, "gamma": 0.5, "beta": 3 }),
            MetricKind::Jaccard => json!({ "unit": "token set" }),
            MetricKind::Hamming => json!({ "unit": "characters of the token string", "unequal_length": "each position past the shorter string counts as a mismatch" }),
            MetricKind::Ros => json!({ "unit": "characters of the token string", "ties": "max over both argument orders of leftmost-first matching" }),
            MetricKind::Bertscore => json!({ "provider": provider_id, "matching": "greedy max cosine per token, negatives clamped to 0" }),
            MetricKind::Facts => json!({ "full": "contiguous token match", "partial": "at least half the tokens present", "omitted": "no token present" }),
        };
        p.insert(m.as_str().into(), v);
    }
    p
}

fn score_summary(
    pred: &str,
    gold: &SummaryRecord,
    options: &EvalOptions,
    provider: &dyn EmbeddingProvider,
) -> Result<BTreeMap<String, f64>> {
    let (pt, gt) = (tokenize(pred), tokenize(&gold.text));
    let (ps, gs) = (token_string(pred), token_string(&gold.text));
    let mut s = BTreeMap::new();
    for m in &options.metrics {
        match m {
            MetricKind::Rouge => {
                s.insert("rouge1_f".into(), rouge_n(&pt, &gt, 1).f1);
                s.insert("rouge2_f".into(), rouge_n(&pt, &gt, 2).f1);
                s.insert("rougeL_f".into(), rouge_l(&pt, &gt).f1);
            }
            MetricKind::Bleu => {
                for (k, v) in bleu(&pt, std::slice::from_ref(&gt), options.bleu_max_n, options.bleu_smoothing).into_iter().enumerate() {
                    s.insert(format!("bleu{}", k + 1), v);
                }
            }
            MetricKind::Meteor => {
                s.insert("meteor".into(), meteor(&pt, &gt));
            }
            MetricKind::Jaccard => {
                let a: HashSet<&String> = pt.iter().collect();
                let b: HashSet<&String> = gt.iter().collect();
                s.insert("jaccard".into(), jaccard(&a, &b));
            }
            MetricKind::Hamming => {
                s.insert("hamming".into(), hamming_distance(&ps, &gs) as f64);
            }
            MetricKind::Ros => {
                s.insert("ros".into(), ratcliff_obershelp(&ps, &gs));
            }
            MetricKind::Bertscore => {
                let prf = embedding_match_score(&pt, &gt, provider)?;
                s.insert("bertscore_p".into(), prf.precision);
                s.insert("bertscore_r".into(), prf.recall);
                s.insert("bertscore_f".into(), prf.f1);
            }
            MetricKind::Facts => {
                let facts = FactSet::from_terms(gold.severity_order_trace.iter().map(|(_, t)| t));
                if !facts.is_empty() {
                    let f = fact_scores(pred, &facts)?;
                    s.insert("factual_recall".into(), f.recall);
                    s.insert("omission_rate".into(), f.omission);
                }
            }
        }
    }
    Ok(s)
}

/// Score predicted summaries against gold summaries matched by drug.
///
/// Examples follow gold order. A gold drug without a prediction is scored
/// against empty text; predictions for drugs absent from gold are ignored.
/// Both cases are reported as warnings.
pub fn evaluate_summaries(
    pred: &[SummaryRecord],
    gold: &[SummaryRecord],
    options: &EvalOptions,
    provider: &dyn EmbeddingProvider,
) -> Result<MetricReport> {
    if gold.is_empty() {
        return Err(MetricsError::Empty("no gold summaries".into()));
    }
    if options.metrics.is_empty() {
        return Err(MetricsError::InvalidInput("no metrics selected".into()));
    }
    if options.bleu_max_n == 0 {
        return Err(MetricsError::InvalidInput("BLEU order must be at least 1".into()));
    }
    let by_drug: BTreeMap<String, &str> = pred.iter().map(|p| (normalize_term(&p.drug), p.text.as_str())).collect();
    let gold_drugs: BTreeSet<String> = gold.iter().map(|g| normalize_term(&g.drug)).collect();
    let mut warnings = Vec::new();
    for g in gold {
        let drug = normalize_term(&g.drug);
        if !by_drug.contains_key(&drug) {
            warnings.push(format!("`{drug}`: no prediction, scored as empty"));
        }
        if options.metrics.contains(&MetricKind::Facts) && g.severity_order_trace.is_empty() {
            warnings.push(format!("`{drug}`: gold has no severity trace, fact metrics skipped"));
        }
    }
    for drug in by_drug.keys().filter(|d| !gold_drugs.contains(*d)) {
        warnings.push(format!("`{drug}`: prediction has no gold summary, ignored"));
    }

    let per_example = gold
        .par_iter()
        .map(|g| {
            let drug = normalize_term(&g.drug);
            let text = by_drug.get(&drug).copied().unwrap_or("");
            Ok(ExampleScores { scores: score_summary(text, g, options, provider)?, id: drug })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_examples(per_example, summary_parameters(options, provider.id()), warnings))
}

fn sorted_join(items: &BTreeSet<String>) -> String {
    items.iter().cloned().collect::<Vec<_>>().join(", ")
}

/// Score extraction output against gold annotations matched by post id.
///
/// Drug and ADE sets are compared per post with Jaccard, and their sorted,
/// comma-joined forms with Hamming distance and Ratcliff-Obershelp.
/// Severity is scored on `(drug, ADE)` items found in both; the fraction of
/// gold items so matched is reported as `severity_coverage`.
pub fn evaluate_extraction(pred: &[ExtractionRecord], gold: &[AnnotationRecord]) -> Result<MetricReport> {
    if gold.is_empty() {
        return Err(MetricsError::Empty("no gold annotations".into()));
    }
    let by_post: BTreeMap<&str, &ExtractionRecord> = pred.iter().map(|p| (p.post_id.as_str(), p)).collect();
    let mut warnings = Vec::new();
    let mut per_example = Vec::with_capacity(gold.len());
    let (mut sev_pred, mut sev_gold) = (Vec::new(), Vec::new());
    let mut gold_items = 0usize;

    for g in gold {
        let g = g.normalized();
        let items = g.items();
        let gold_drugs: BTreeSet<String> = g.drugs.iter().map(|d| d.name.clone()).collect();
        let gold_ades: BTreeSet<String> = items.keys().map(|(_, a)| a.clone()).collect();
        let mut pred_items: BTreeMap<(String, String), Severity> = BTreeMap::new();
        match by_post.get(g.post_id.as_str()) {
            Some(p) => {
                for it in &p.items {
                    let key = (normalize_term(&it.drug), normalize_term(&it.ade_text));
                    let e = pred_items.entry(key).or_insert(it.severity);
                    *e = (*e).max(it.severity);
                }
            }
            None => warnings.push(format!("post `{}`: no prediction, scored as empty", g.post_id)),
        }
        let pred_drugs: BTreeSet<String> = pred_items.keys().map(|(d, _)| d.clone()).collect();
        let pred_ades: BTreeSet<String> = pred_items.keys().map(|(_, a)| a.clone()).collect();

        gold_items += items.len();
        for (key, label) in &items {
            if let Some(&s) = pred_items.get(key) {
                sev_pred.push(s);
                sev_gold.push(label.severity);
            }
        }

        let set = |s: &BTreeSet<String>| s.iter().cloned().collect::<HashSet<String>>();
        let mut scores = BTreeMap::new();
        for (name, p, gs) in [("drug", &pred_drugs, &gold_drugs), ("ade", &pred_ades, &gold_ades)] {
            let (pj, gj) = (sorted_join(p), sorted_join(gs));
            scores.insert(format!("{name}_jaccard"), jaccard(&set(p), &set(gs)));
            scores.insert(format!("{name}_hamming"), hamming_distance(&pj, &gj) as f64);
            scores.insert(format!("{name}_ros"), ratcliff_obershelp(&pj, &gj));
        }
        per_example.push(ExampleScores { id: g.post_id.clone(), scores });
    }
    let gold_ids: HashSet<&str> = gold.iter().map(|g| g.post_id.as_str()).collect();
    for id in by_post.keys().filter(|id| !gold_ids.contains(*id)) {
        warnings.push(format!("post `{id}`: prediction has no gold annotation, ignored"));
    }

    let mut parameters = BTreeMap::new();
    parameters.insert("normalization".into(), json!("lowercase, whitespace collapsed, trailing punctuation stripped"));
    parameters.insert("string_form".into(), json!("sorted unique names joined by \", \""));
    parameters.insert("severity_items".into(), json!("(drug, ADE) pairs present in both prediction and gold"));
    parameters.insert("severity_averaging".into(), json!("macro over labels present in gold"));

    let mut report = MetricReport::from_examples(per_example, parameters, warnings);
    let coverage = if gold_items == 0 { 0.0 } else { sev_pred.len() as f64 / gold_items as f64 };
    report.metrics.insert("severity_coverage".into(), coverage);
    if sev_gold.is_empty() {
        report.warnings.push("no matched (drug, ADE) items, severity scores omitted".into());
    } else {
        let c = classification_report(&sev_pred, &sev_gold)?;
        report.metrics.insert("severity_accuracy".into(), c.accuracy);
        report.metrics.insert("severity_precision".into(), c.precision);
        report.metrics.insert("severity_recall".into(), c.recall);
        report.metrics.insert("severity_f1".into(), c.f1);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AdeAnnotation, DrugAnnotation};
    use crate::extraction::ExtractionItem;
    use crate::grouping::HashingProvider;

    fn rec(drug: &str, text: &str, trace: &[(Severity, &str)]) -> SummaryRecord {
        SummaryRecord {
            drug: drug.into(),
            text: text.into(),
            severity_order_trace: trace.iter().map(|(s, t)| (*s, t.to_string())).collect(),
        }
    }

    #[test]
    fn prediction_equal_to_gold_maxes_out() {
        let gold = vec![
            rec("tamoxifen", "DRUG: tamoxifen. High severity: blood clots. Mild severity: hot flashes.", &[(Severity::High, "blood clots"), (Severity::Mild, "hot flashes")]),
            rec("letrozole", "DRUG: letrozole. Mild severity: joint pain.", &[(Severity::Mild, "joint pain")]),
        ];
        let provider = HashingProvider::new(64).unwrap();
        let r = evaluate_summaries(&gold, &gold, &EvalOptions::default(), &provider).unwrap();
        for key in ["rouge1_f", "rouge2_f", "rougeL_f", "bleu1", "bleu4", "jaccard", "ros", "bertscore_f", "factual_recall"] {
            assert_eq!(r.metrics[key], 1.0, "{key}");
        }
        assert_eq!(r.metrics["hamming"], 0.0);
        assert_eq!(r.metrics["omission_rate"], 0.0);
        assert!(r.metrics["meteor"] > 0.9);
        assert_eq!(r.per_example.len(), 2);
        assert!(r.warnings.is_empty());
        assert!(r.parameters.contains_key("bleu"));
        assert!(r.to_table().contains("rougeL_f"));
    }

    #[test]
    fn selection_and_missing_predictions() {
        let gold = vec![rec("a", "nausea and fatigue", &[]), rec("b", "rash", &[])];
        let pred = vec![rec("A", "nausea and fatigue", &[]), rec("z", "other", &[])];
        let options = EvalOptions { metrics: vec![MetricKind::Rouge, MetricKind::Facts], ..Default::default() };
        let r = evaluate_summaries(&pred, &gold, &options, &HashingProvider::new(16).unwrap()).unwrap();
        assert_eq!(r.metrics["rouge1_f"], 0.5);
        assert!(!r.metrics.contains_key("bleu1"));
        assert!(!r.metrics.contains_key("factual_recall"));
        assert_eq!(r.warnings.len(), 4);
        assert!(!r.parameters.contains_key("bleu"));
    }

    #[test]
    fn metric_list_parsing() {
        assert_eq!(MetricKind::parse_list("bleu, rouge,bleu").unwrap(), vec![MetricKind::Rouge, MetricKind::Bleu]);
        assert!(MetricKind::parse_list("rouge,cider").is_err());
        assert!(MetricKind::parse_list("").is_err());
    }

    #[test]
    fn summary_reader_normalizes_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        fs::write(&path, "{\"drug\":\"Tamoxifen\",\"text\":\"t\",\"backend_id\":\"template\"}\n").unwrap();
        assert_eq!(read_summary_records(&path).unwrap()[0].drug, "tamoxifen");
        fs::write(&path, "{\"drug\":\"x\",\"text\":\"t\"}\n{\"drug\":\"X\",\"text\":\"u\"}\n").unwrap();
        assert!(read_summary_records(&path).is_err());
    }

    fn annotation(post: &str, drugs: &[(&str, &[(&str, Severity)])]) -> AnnotationRecord {
        AnnotationRecord {
            post_id: post.into(),
            annotator_id: "majority".into(),
            drugs: drugs
                .iter()
                .map(|(d, ades)| DrugAnnotation {
                    name: d.to_string(),
                    ades: ades
                        .iter()
                        .map(|(a, s)| AdeAnnotation { text: a.to_string(), severity: *s, adversity: false, evidence_terms: vec![] })
                        .collect(),
                })
                .collect(),
        }
    }

    fn extraction(post: &str, items: &[(&str, &str, Severity)]) -> ExtractionRecord {
        ExtractionRecord {
            post_id: post.into(),
            items: items
                .iter()
                .map(|(d, a, s)| ExtractionItem { drug: d.to_string(), ade_text: a.to_string(), severity: *s, adversity: false })
                .collect(),
            backend_id: "test".into(),
            raw_model_output: None,
            warnings: vec![],
        }
    }

    #[test]
    fn extraction_scores() {
        let gold = vec![
            annotation("p1", &[("Tamoxifen", &[("hot flashes", Severity::Mild), ("blood clots", Severity::High)])]),
            annotation("p2", &[("letrozole", &[("joint pain", Severity::Moderate)])]),
        ];
        let pred = vec![
            extraction("p1", &[("tamoxifen", "Hot flashes", Severity::Mild), ("tamoxifen", "blood clots", Severity::Mild)]),
            extraction("p2", &[("anastrozole", "joint pain", Severity::Moderate)]),
        ];
        let r = evaluate_extraction(&pred, &gold).unwrap();
        assert_eq!(r.metrics["drug_jaccard"], 0.5);
        assert_eq!(r.metrics["ade_jaccard"], 1.0);
        assert_eq!(r.metrics["ade_hamming"], 0.0);
        assert!((r.metrics["severity_coverage"] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.metrics["severity_accuracy"], 0.5);
        assert!(r.warnings.is_empty());

        let none = evaluate_extraction(&[], &gold).unwrap();
        assert_eq!(none.metrics["drug_jaccard"], 0.0);
        assert!(!none.metrics.contains_key("severity_f1"));
        assert_eq!(none.warnings.len(), 3);
    }
}
