use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::degrade::{degrade_summary, Mutation};
use super::{AlignmentError, Result};
use crate::grouping::{DrugGroupGrid, SeverityBuckets};
use crate::http::{field, EndpointConfig, JsonClient, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceSource {
    GoldVsGenerated,
    GoldVsDegraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub source: PreferenceSource,
}

/// A reference summary for one drug. Extra fields (as in summary JSONL)
/// are ignored on read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSummary {
    pub drug: String,
    pub text: String,
}

/// Prompt text for one drug: its grid entry as compact JSON.
pub fn prompt_for(drug: &str, grid: &DrugGroupGrid) -> String {
    let empty = SeverityBuckets::default();
    json!({ "drug": drug, "groups": grid.get(drug).unwrap_or(&empty) }).to_string()
}

/// Source of non-preferred summaries.
pub trait RejectedProvider: Send + Sync {
    fn source(&self) -> PreferenceSource;

    fn rejected(&self, drug: &str, prompt: &str, chosen: &str) -> std::result::Result<String, TransportError>;
}

/// Offline provider backed by [`degrade_summary`].
#[derive(Debug, Clone)]
pub struct DegraderProvider {
    mutations: Vec<Mutation>,
}

impl DegraderProvider {
    pub fn new(mutations: Vec<Mutation>) -> Result<Self> {
        if mutations.is_empty() {
            return Err(AlignmentError::InvalidInput("select at least one mutation".into()));
        }
        Ok(DegraderProvider { mutations })
    }
}

impl Default for DegraderProvider {
    fn default() -> Self {
        DegraderProvider { mutations: Mutation::ALL.to_vec() }
    }
}

impl RejectedProvider for DegraderProvider {
    fn source(&self) -> PreferenceSource {
        PreferenceSource::GoldVsDegraded
    }

    fn rejected(&self, _drug: &str, _prompt: &str, chosen: &str) -> std::result::Result<String, TransportError> {
        degrade_summary(chosen, &self.mutations)
            .map_err(|e| TransportError { message: e.to_string(), retryable: false })
    }
}

/// `POST {"prompt", "drug"}` → `{"summary"}` from an external generator.
#[derive(Debug, Clone)]
pub struct HttpRejectedProvider {
    client: JsonClient,
}

impl HttpRejectedProvider {
    pub fn new(config: EndpointConfig) -> Self {
        HttpRejectedProvider { client: JsonClient::new(config) }
    }
}

impl RejectedProvider for HttpRejectedProvider {
    fn source(&self) -> PreferenceSource {
        PreferenceSource::GoldVsGenerated
    }

    fn rejected(&self, drug: &str, prompt: &str, _chosen: &str) -> std::result::Result<String, TransportError> {
        let response = self.client.post(&json!({ "prompt": prompt, "drug": drug }))?;
        field(&response, "summary")?.as_str().map(String::from).ok_or_else(|| TransportError {
            message: "`summary` is not a string".into(),
            retryable: false,
        })
    }
}

/// Canned generated summaries keyed by drug.
#[derive(Debug, Clone, Default)]
pub struct ReplayRejectedProvider {
    by_drug: HashMap<String, String>,
}

impl ReplayRejectedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, drug: &str, text: impl Into<String>) {
        self.by_drug.insert(drug.to_string(), text.into());
    }
}

impl RejectedProvider for ReplayRejectedProvider {
    fn source(&self) -> PreferenceSource {
        PreferenceSource::GoldVsGenerated
    }

    fn rejected(&self, drug: &str, _prompt: &str, _chosen: &str) -> std::result::Result<String, TransportError> {
        self.by_drug.get(drug).cloned().ok_or_else(|| TransportError {
            message: format!("no recorded summary for `{drug}`"),
            retryable: false,
        })
    }
}

/// One pair per gold drug, in drug order. Pairs whose rejected text equals
/// the gold text are dropped and reported in the returned warnings.
pub fn build_preference_pairs(
    gold: &BTreeMap<String, String>,
    grid: &DrugGroupGrid,
    provider: &dyn RejectedProvider,
) -> Result<(Vec<PreferencePair>, Vec<String>)> {
    let results: Vec<Result<Option<PreferencePair>>> = gold
        .par_iter()
        .map(|(drug, chosen)| {
            if chosen.trim().is_empty() {
                return Err(AlignmentError::InvalidInput(format!("gold summary for `{drug}` is empty")));
            }
            let prompt = prompt_for(drug, grid);
            let rejected = provider
                .rejected(drug, &prompt, chosen)
                .map_err(|source| AlignmentError::Transport { drug: drug.clone(), source })?;
            if &rejected == chosen {
                return Ok(None);
            }
            Ok(Some(PreferencePair { prompt, chosen: chosen.clone(), rejected, source: provider.source() }))
        })
        .collect();

    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (drug, r) in gold.keys().zip(results) {
        match r? {
            Some(p) => pairs.push(p),
            None => warnings.push(format!("`{drug}`: rejected summary equals gold, pair dropped")),
        }
    }
    if pairs.is_empty() && !gold.is_empty() {
        return Err(AlignmentError::AllPairsDropped);
    }
    Ok((pairs, warnings))
}

pub fn export_preference_dataset(pairs: &[PreferencePair], path: &Path) -> Result<()> {
    if pairs.is_empty() {
        return Err(AlignmentError::InvalidInput("no preference pairs to export".into()));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut out, p).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AlignmentError::Malformed { line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn import_preference_dataset(path: &Path) -> Result<Vec<PreferencePair>> {
    read_jsonl(path)
}

/// Gold summaries from JSONL, keyed by drug. A repeated drug is an error.
pub fn read_gold_summaries(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for g in read_jsonl::<GoldSummary>(path)? {
        if out.insert(g.drug.clone(), g.text).is_some() {
            return Err(AlignmentError::InvalidInput(format!("duplicate gold summary for `{}`", g.drug)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::Linkage;

    fn grid() -> DrugGroupGrid {
        DrugGroupGrid { linkage: Linkage::Average, threshold: 0.4, provider_id: "none".into(), entries: BTreeMap::new() }
    }

    fn gold(n: usize) -> BTreeMap<String, String> {
        (0..n).map(|i| (format!("drug{i}"), format!("DRUG: drug{i}. High severity: a{i}, b{i}. Mild severity: c{i}."))).collect()
    }

    #[test]
    fn empty_gold_gives_no_pairs() {
        let (pairs, warnings) = build_preference_pairs(&BTreeMap::new(), &grid(), &DegraderProvider::default()).unwrap();
        assert!(pairs.is_empty() && warnings.is_empty());
    }

    #[test]
    fn degrader_pairs_differ() {
        let (pairs, _) = build_preference_pairs(&gold(10), &grid(), &DegraderProvider::default()).unwrap();
        assert_eq!(pairs.len(), 10);
        assert!(pairs.iter().all(|p| p.chosen != p.rejected && p.source == PreferenceSource::GoldVsDegraded));
        assert!(pairs[0].prompt.contains("\"drug\":\"drug0\""));
    }

    #[test]
    fn replay_drops_identical_and_is_deterministic() {
        let g = gold(3);
        let mut provider = ReplayRejectedProvider::new();
        provider.insert("drug0", g["drug0"].clone());
        provider.insert("drug1", "something else");
        provider.insert("drug2", "another");
        let (pairs, warnings) = build_preference_pairs(&g, &grid(), &provider).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(warnings.len(), 1);
        assert_eq!(build_preference_pairs(&g, &grid(), &provider).unwrap().0, pairs);

        let mut same = ReplayRejectedProvider::new();
        same.insert("drug0", g["drug0"].clone());
        assert!(matches!(
            build_preference_pairs(&gold(1), &grid(), &same),
            Err(AlignmentError::AllPairsDropped)
        ));
        let missing = build_preference_pairs(&g, &grid(), &ReplayRejectedProvider::new()).unwrap_err();
        assert!(matches!(missing, AlignmentError::Transport { .. }));
    }

    #[test]
    fn jsonl_round_trip_keeps_newlines_on_one_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prefs.jsonl");
        let pairs = vec![PreferencePair {
            prompt: "{\"drug\":\"x\"}".into(),
            chosen: "line one\nline two".into(),
            rejected: "other".into(),
            source: PreferenceSource::GoldVsGenerated,
        }];
        export_preference_dataset(&pairs, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert_eq!(import_preference_dataset(&path).unwrap(), pairs);
        assert!(export_preference_dataset(&[], &path).is_err());
    }

    #[test]
    fn gold_reader_accepts_summary_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        fs::write(&path, "{\"drug\":\"x\",\"text\":\"t\",\"backend_id\":\"template\",\"severity_order_trace\":[]}\n").unwrap();
        assert_eq!(read_gold_summaries(&path).unwrap()["x"], "t");
        fs::write(&path, "{\"drug\":\"x\",\"text\":\"t\"}\n{\"drug\":\"x\",\"text\":\"u\"}\n").unwrap();
        assert!(read_gold_summaries(&path).is_err());
    }
}
