use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExtractionBackend, ExtractionError, ExtractionItem, ExtractionRecord, Result};
use crate::corpus::{Post, Severity};
use crate::text::{normalize_term, split_sentences};

/// Case-insensitive, word-bounded, leftmost-longest phrase matcher.
#[derive(Debug, Clone)]
pub struct TermMatcher {
    terms: Vec<String>,
    /// first char -> term indices, longest first
    by_first: HashMap<char, Vec<usize>>,
}

impl TermMatcher {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut terms: Vec<String> =
            terms.into_iter().map(|t| normalize_term(t.as_ref())).filter(|t| !t.is_empty()).collect();
        terms.sort();
        terms.dedup();
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, t) in terms.iter().enumerate() {
            let c = t.chars().next().expect("non-empty term");
            by_first.entry(c).or_default().push(i);
        }
        for idx in by_first.values_mut() {
            idx.sort_by(|&a, &b| terms[b].len().cmp(&terms[a].len()).then(a.cmp(&b)));
        }
        TermMatcher { terms, by_first }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    /// Non-overlapping matches in `lowered` (already lowercased), as
    /// `(byte_offset, term_index)`.
    pub fn find_all(&self, lowered: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut prev: Option<char> = None;
        let mut skip_until = 0;
        for (i, c) in lowered.char_indices() {
            let at_boundary = prev.is_none_or(|p| !p.is_alphanumeric());
            prev = Some(c);
            if i < skip_until || !at_boundary {
                continue;
            }
            let Some(candidates) = self.by_first.get(&c) else { continue };
            let rest = &lowered[i..];
            let hit = candidates.iter().copied().find(|&t| {
                let term = &self.terms[t];
                rest.starts_with(term.as_str())
                    && rest[term.len()..].chars().next().is_none_or(|n| !n.is_alphanumeric())
            });
            if let Some(t) = hit {
                out.push((i, t));
                skip_until = i + self.terms[t].len();
            }
        }
        out
    }
}

/// Serializable lexicon description (the on-disk format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconSpec {
    pub drugs: Vec<String>,
    pub ades: Vec<String>,
    pub severity_cues: BTreeMap<String, Severity>,
    pub adversity_cues: Vec<String>,
}

/// Drug, ADE and cue lexicons. Immutable once built.
#[derive(Debug, Clone)]
pub struct Lexicon {
    drugs: TermMatcher,
    ades: TermMatcher,
    severity_cues: TermMatcher,
    cue_severity: Vec<Severity>,
    adversity_cues: TermMatcher,
}

impl Lexicon {
    pub fn new(spec: &LexiconSpec) -> Result<Self> {
        let drugs = TermMatcher::new(&spec.drugs);
        let ades = TermMatcher::new(&spec.ades);
        if drugs.is_empty() || ades.is_empty() {
            return Err(ExtractionError::Lexicon("drug and ADE lexicons must be non-empty".into()));
        }
        let mut cues: BTreeMap<String, Severity> = BTreeMap::new();
        for (cue, sev) in &spec.severity_cues {
            let key = normalize_term(cue);
            let entry = cues.entry(key).or_insert(*sev);
            *entry = (*entry).max(*sev);
        }
        let severity_cues = TermMatcher::new(cues.keys());
        let cue_severity = severity_cues.terms().iter().map(|t| cues[t]).collect();
        Ok(Lexicon {
            drugs,
            ades,
            severity_cues,
            cue_severity,
            adversity_cues: TermMatcher::new(&spec.adversity_cues),
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: LexiconSpec =
            serde_json::from_str(&text).map_err(|e| ExtractionError::Lexicon(e.to_string()))?;
        Lexicon::new(&spec)
    }

    /// Built-in oncology lexicon. Severity cues follow the annotation
    /// guideline: hospitalization, life-threatening events, disability and
    /// congenital anomalies mark `High`.
    pub fn default_spec() -> LexiconSpec {
        let high = [
            "life-threatening", "life threatening", "hospitalized", "hospitalised",
            "hospitalization", "hospitalisation", "admitted to hospital", "emergency room",
            "intensive care", "icu", "disability", "disabled", "congenital", "birth defect",
        ];
        let moderate = ["moderate", "severe", "significant", "quite bad"];
        let mild = ["mild", "slight", "slightly", "minor", "manageable", "a little"];
        let mut severity_cues = BTreeMap::new();
        for (cues, sev) in [(&high[..], Severity::High), (&moderate[..], Severity::Moderate), (&mild[..], Severity::Mild)] {
            for c in cues {
                severity_cues.insert(c.to_string(), sev);
            }
        }
        LexiconSpec {
            drugs: DEFAULT_DRUGS.iter().map(|s| s.to_string()).collect(),
            ades: DEFAULT_ADES.iter().map(|s| s.to_string()).collect(),
            severity_cues,
            adversity_cues: [
                "bad", "worse", "worst", "unbearable", "irrecoverable", "permanent", "terrible",
                "awful", "horrible", "horrendous", "dreadful", "miserable", "agony", "excruciating",
                "debilitating",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    pub fn default_oncology() -> Self {
        Lexicon::new(&Lexicon::default_spec()).expect("built-in lexicon is valid")
    }

    pub fn drugs(&self) -> &[String] {
        self.drugs.terms()
    }

    pub fn ades(&self) -> &[String] {
        self.ades.terms()
    }
}

struct SentenceHits {
    drugs: Vec<String>,
    ades: Vec<String>,
    severity: Severity,
    adversity: bool,
}

fn unique_terms(matcher: &TermMatcher, lowered: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (_, t) in matcher.find_all(lowered) {
        let term = matcher.term(t);
        if !out.iter().any(|x| x == term) {
            out.push(term.to_string());
        }
    }
    out
}

/// Deterministic lexicon extraction.
///
/// Per sentence, severity is the highest cue present (else `NotApplicable`)
/// and adversity is set by any adversity cue. An ADE is linked to the drugs
/// of its own sentence, or failing that to the nearest preceding sentence
/// that names a drug, or failing that the nearest following one. Posts
/// with drugs but no ADE terms yield no items.
pub fn lexicon_extract(post: &Post, lexicon: &Lexicon) -> ExtractionRecord {
    let sentences: Vec<SentenceHits> = split_sentences(&post.text)
        .into_iter()
        .map(|s| {
            let lowered = s.to_lowercase();
            let severity = lexicon
                .severity_cues
                .find_all(&lowered)
                .into_iter()
                .map(|(_, t)| lexicon.cue_severity[t])
                .max()
                .unwrap_or(Severity::NotApplicable);
            SentenceHits {
                drugs: unique_terms(&lexicon.drugs, &lowered),
                ades: unique_terms(&lexicon.ades, &lowered),
                severity,
                adversity: !lexicon.adversity_cues.find_all(&lowered).is_empty(),
            }
        })
        .collect();

    let mut items: Vec<ExtractionItem> = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        if s.ades.is_empty() {
            continue;
        }
        let drugs = if !s.drugs.is_empty() {
            &s.drugs
        } else if let Some(prev) = sentences[..i].iter().rev().find(|p| !p.drugs.is_empty()) {
            &prev.drugs
        } else if let Some(next) = sentences[i + 1..].iter().find(|n| !n.drugs.is_empty()) {
            &next.drugs
        } else {
            continue;
        };
        for drug in drugs {
            for ade in &s.ades {
                match items.iter_mut().find(|it| &it.drug == drug && &it.ade_text == ade) {
                    Some(existing) => {
                        existing.severity = existing.severity.max(s.severity);
                        existing.adversity |= s.adversity;
                    }
                    None => items.push(ExtractionItem {
                        drug: drug.clone(),
                        ade_text: ade.clone(),
                        severity: s.severity,
                        adversity: s.adversity,
                    }),
                }
            }
        }
    }

    ExtractionRecord {
        post_id: post.id.clone(),
        items,
        backend_id: LexiconBackend::ID.into(),
        raw_model_output: None,
        warnings: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct LexiconBackend {
    lexicon: Lexicon,
}

impl LexiconBackend {
    pub const ID: &'static str = "lexicon";

    pub fn new(lexicon: Lexicon) -> Self {
        LexiconBackend { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl ExtractionBackend for LexiconBackend {
    fn id(&self) -> &str {
        Self::ID
    }

    fn extract(&self, post: &Post) -> Result<ExtractionRecord> {
        Ok(lexicon_extract(post, &self.lexicon))
    }
}

const DEFAULT_DRUGS: &[&str] = &[
    "abemaciclib", "abiraterone", "anastrozole", "arimidex", "aromasin", "avastin",
    "bevacizumab", "bortezomib", "cabozantinib", "capecitabine", "carboplatin", "cisplatin",
    "cyclophosphamide", "docetaxel", "doxorubicin", "enzalutamide", "epirubicin", "erlotinib",
    "etoposide", "exemestane", "femara", "fluorouracil", "5-fu", "folfox", "folfiri",
    "gefitinib", "gemcitabine", "gleevec", "goserelin", "herceptin", "ibrance", "imatinib",
    "ipilimumab", "irinotecan", "keytruda", "kisqali", "lenalidomide", "lenvatinib", "letrozole",
    "leuprolide", "lupron", "lynparza", "methotrexate", "nivolumab", "olaparib", "opdivo",
    "osimertinib", "oxaliplatin", "paclitaxel", "palbociclib", "pembrolizumab", "pemetrexed",
    "pertuzumab", "regorafenib", "revlimid", "ribociclib", "rituximab", "sorafenib", "sunitinib",
    "sutent", "tagrisso", "tamoxifen", "tarceva", "taxol", "taxotere", "temozolomide",
    "trastuzumab", "velcade", "verzenio", "vincristine", "xeloda", "xtandi", "zoladex", "zytiga",
];

const DEFAULT_ADES: &[&str] = &[
    "anaemia", "anemia", "anxiety", "bleeding", "blood clot", "blood clots", "bone pain",
    "brain fog", "bruising", "colitis", "constipation", "cough", "cramps", "depression",
    "diarrhea", "diarrhoea", "dizziness", "dvt", "edema", "oedema", "fatigue", "fever",
    "hair loss", "hand-foot syndrome", "headache", "hearing loss", "heart failure",
    "high blood pressure", "hot flashes", "hot flushes", "hypothyroidism", "infection",
    "insomnia", "joint pain", "kidney damage", "liver damage", "loss of appetite",
    "low white blood cell count", "memory loss", "mood swings", "mouth sores", "mouth ulcers",
    "muscle pain", "nausea", "neutropenia", "neuropathy", "night sweats", "numbness",
    "peripheral neuropathy", "pneumonitis", "pulmonary embolism", "rash", "sepsis",
    "shortness of breath", "swelling", "taste changes", "thrombocytopenia", "tingling",
    "tinnitus", "vaginal dryness", "vomiting", "weight gain", "weight loss",
];
