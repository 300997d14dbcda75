//! Seeded synthetic data for tests, demos and the acceptance suite.
//!
//! Nothing here is real patient data. Every generator is a pure function
//! of its arguments.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Forum, Post, Severity};
use crate::extraction::{ExtractionItem, ExtractionRecord, Lexicon};
use crate::grouping::{AdeCluster, ClusterMember, SeverityBuckets};
use crate::metrics::{ClinicalAxis, ClinicalRating};
use crate::summarization::template_text;

const CANCER_TYPES: [&str; 6] = ["breast", "prostate", "lung", "colorectal", "ovarian", "lymphoma"];

const OPENERS: [&str; 6] = [
    "Week three of treatment here.",
    "Just wanted to share my experience so far.",
    "Has anyone else had this?",
    "My oncologist suggested I post here.",
    "Finished cycle two yesterday.",
    "Long time reader, first post.",
];

const CLOSERS: [&str; 5] = [
    "Any tips welcome.",
    "Hoping it settles down soon.",
    "Thanks for reading.",
    "Will update after my next scan.",
    "Staying positive.",
];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap_or_default()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// `n` forum posts naming drugs and ADEs from the built-in lexicon, with
/// severity and adversity cues mixed in.
pub fn forum_posts(n: usize, seed: u64) -> Corpus {
    let spec = Lexicon::default_spec();
    let drugs: Vec<&str> = spec.drugs.iter().map(String::as_str).take(24).collect();
    let ades: Vec<&str> = spec.ades.iter().map(String::as_str).collect();
    let high = ["I was hospitalized for", "I ended up in the emergency room with", "it caused life-threatening"];
    let moderate = ["I had severe", "it gave me significant", "there was moderate"];
    let mild = ["I only had mild", "there was slight", "I got minor"];
    let neutral = ["I noticed", "I have been dealing with", "it brought on"];
    let adverse = ["It was unbearable.", "Honestly it was terrible.", "The worst part of treatment."];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::new(format!("synthetic forum posts, seed {seed}"));
    for i in 0..n {
        let mut sentences = vec![pick(&mut rng, &OPENERS).to_string()];
        let drug = pick(&mut rng, &drugs);
        let mentions = rng.random_range(1..=3);
        for m in 0..mentions {
            let ade = pick(&mut rng, &ades);
            let cue = match rng.random_range(0..4) {
                0 => pick(&mut rng, &high),
                1 => pick(&mut rng, &moderate),
                2 => pick(&mut rng, &mild),
                _ => pick(&mut rng, &neutral),
            };
            if m == 0 {
                sentences.push(format!("On {} {cue} {ade}.", capitalize(drug)));
            } else {
                sentences.push(format!("Later {cue} {ade} as well."));
            }
            if rng.random_bool(0.25) {
                sentences.push(pick(&mut rng, &adverse).to_string());
            }
        }
        if rng.random_bool(0.3) {
            let other = pick(&mut rng, &drugs);
            let ade = pick(&mut rng, &ades);
            sentences.push(format!("Switching to {other} gave me {ade} too."));
        }
        sentences.push(pick(&mut rng, &CLOSERS).to_string());
        let post = Post {
            id: format!("post-{i:04}"),
            forum: if i % 2 == 0 { Forum::Cru } else { Forum::Csn },
            thread_title: format!("Experience with {drug}"),
            cancer_type: Some(pick(&mut rng, &CANCER_TYPES).to_string()),
            timestamp: format!("2023-{:02}-{:02}T{:02}:00:00Z", 1 + i % 12, 1 + i % 28, i % 24),
            text: sentences.join(" "),
        };
        corpus.push(post).expect("generated ids are unique");
    }
    corpus
}

const ADE_VARIANTS: [(&str, &[&str]); 10] = [
    ("hot flashes", &["hot flashes", "hot flash", "hot flushes", "bad hot flashes"]),
    ("fatigue", &["fatigue", "extreme fatigue", "fatigued", "tiredness"]),
    ("nausea", &["nausea", "nauseous", "nausea and vomiting", "mild nausea"]),
    ("joint pain", &["joint pain", "joint pains", "aching joints", "joint ache"]),
    ("neuropathy", &["neuropathy", "peripheral neuropathy", "neuropathic pain"]),
    ("hair loss", &["hair loss", "losing hair", "hair thinning"]),
    ("blood clot", &["blood clot", "blood clots", "clotting"]),
    ("rash", &["rash", "skin rash", "rashes"]),
    ("diarrhea", &["diarrhea", "diarrhoea", "loose stools"]),
    ("insomnia", &["insomnia", "sleeplessness", "trouble sleeping"]),
];

/// Extraction records holding `items` items in total over `drugs` drugs,
/// with surface variants of common ADEs and uniformly random severities.
pub fn extraction_records(items: usize, drugs: usize, seed: u64) -> Vec<ExtractionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drug_names = drug_names(drugs.max(1));
    let mut records = Vec::new();
    let mut left = items;
    let mut i = 0;
    while left > 0 {
        let k = rng.random_range(1..=5).min(left);
        left -= k;
        let record_items = (0..k)
            .map(|_| {
                let (_, variants) = ADE_VARIANTS[rng.random_range(0..ADE_VARIANTS.len())];
                ExtractionItem {
                    drug: drug_names.choose(&mut rng).cloned().unwrap_or_default(),
                    ade_text: pick(&mut rng, variants).to_string(),
                    severity: Severity::DESCENDING[rng.random_range(0..4)],
                    adversity: rng.random_bool(0.3),
                }
            })
            .collect();
        records.push(ExtractionRecord {
            post_id: format!("rec-{i:05}"),
            items: record_items,
            backend_id: "fixture".into(),
            raw_model_output: None,
            warnings: Vec::new(),
        });
        i += 1;
    }
    records
}

const NAME_STEMS: [&str; 32] = [
    "aba", "beva", "cabo", "dara", "elo", "fulve", "gefi", "ibru", "ipili", "lapa", "lenva", "mido",
    "nera", "nilo", "olapa", "palbo", "pazo", "pembro", "pertu", "rego", "ribo", "ruxo", "sora",
    "suni", "tafa", "trame", "tuca", "vande", "vemu", "veneto", "zanu", "zole",
];

const NAME_SUFFIXES: [&str; 26] = [
    "ciclib", "clax", "dronate", "fenib", "lisib", "mab", "metinib", "nib", "parib", "platin",
    "relix", "rubicin", "stat", "taxel", "tecan", "tinib", "trexate", "tumab", "vastin", "xafen",
    "zumab", "lutamide", "mustine", "rafenib", "sertib", "ximab",
];

/// `n` distinct synthetic drug names (at most 832).
pub fn drug_names(n: usize) -> Vec<String> {
    assert!(n <= NAME_STEMS.len() * NAME_SUFFIXES.len(), "at most {} names", NAME_STEMS.len() * NAME_SUFFIXES.len());
    NAME_SUFFIXES
        .iter()
        .flat_map(|s| NAME_STEMS.iter().map(move |p| format!("{p}{s}")))
        .take(n)
        .collect()
}

/// One record per drug, each with a single ADE item.
pub fn one_item_per_drug(names: &[String]) -> Vec<ExtractionRecord> {
    names
        .iter()
        .enumerate()
        .map(|(i, d)| ExtractionRecord {
            post_id: format!("drug-post-{i:04}"),
            items: vec![ExtractionItem {
                drug: d.clone(),
                ade_text: ADE_VARIANTS[i % ADE_VARIANTS.len()].0.to_string(),
                severity: Severity::DESCENDING[i % 4],
                adversity: false,
            }],
            backend_id: "fixture".into(),
            raw_model_output: None,
            warnings: Vec::new(),
        })
        .collect()
}

/// Two raters' binary labels over 40 items with 2×2 counts
/// `(both yes, A only, B only, both no) = (17, 3, 2, 18)`, so observed
/// agreement is 0.875, chance agreement 0.5 and kappa 0.75. Item order is
/// shuffled by `seed`.
pub fn kappa_pair(seed: u64) -> (Vec<bool>, Vec<bool>) {
    let mut items: Vec<(bool, bool)> = [((true, true), 17), ((true, false), 3), ((false, true), 2), ((false, false), 18)]
        .into_iter()
        .flat_map(|(pair, n)| std::iter::repeat_n(pair, n))
        .collect();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    items.into_iter().unzip()
}

/// Ten raters scoring one summary on all five axes, with per-axis totals
/// 41, 39, 42, 40 and 32: 194 points over 50 ratings, a mean of 3.88.
pub fn clinical_ratings() -> Vec<ClinicalRating> {
    let table: [(ClinicalAxis, [i64; 10]); 5] = [
        (ClinicalAxis::Relevance, [4, 4, 5, 4, 4, 3, 4, 5, 4, 4]),
        (ClinicalAxis::Consistency, [4, 3, 4, 4, 5, 4, 3, 4, 4, 4]),
        (ClinicalAxis::Fluency, [5, 4, 4, 4, 5, 4, 4, 4, 4, 4]),
        (ClinicalAxis::Coherence, [4, 4, 4, 5, 4, 3, 4, 4, 4, 4]),
        (ClinicalAxis::Hallucination, [3, 3, 4, 3, 3, 3, 4, 3, 3, 3]),
    ];
    table
        .iter()
        .flat_map(|(axis, scores)| {
            scores.iter().enumerate().map(move |(r, &score)| ClinicalRating {
                rater_id: format!("rater-{r:02}"),
                axis: *axis,
                score,
            })
        })
        .collect()
}

/// Random gold-style summaries: one drug, one to four severity sections,
/// one to four ADEs each, severe first and alphabetical within a section.
pub fn gold_summaries(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = drug_names(64);
    let ades: Vec<&str> = ADE_VARIANTS.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    (0..n)
        .map(|_| {
            let drug = names.choose(&mut rng).cloned().unwrap_or_default();
            let mut buckets = SeverityBuckets::default();
            for sev in Severity::DESCENDING {
                if rng.random_bool(0.5) || (sev == Severity::NotApplicable && buckets.0.is_empty()) {
                    let k = rng.random_range(1..=4);
                    let mut picked: Vec<&str> = ades.choose_multiple(&mut rng, k).copied().collect();
                    picked.sort_unstable();
                    buckets.0.insert(
                        sev,
                        picked
                            .into_iter()
                            .map(|a| AdeCluster {
                                representative: a.to_string(),
                                members: vec![ClusterMember { ade_text: a.to_string(), post_id: "gold".into() }],
                            })
                            .collect(),
                    );
                }
            }
            let (text, _) = template_text(&drug, &buckets);
            (drug, text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::cohens_kappa;
    use crate::metrics::clinical_eval_aggregate;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(forum_posts(20, 7).posts(), forum_posts(20, 7).posts());
        assert_ne!(forum_posts(20, 7).posts(), forum_posts(20, 8).posts());
        assert_eq!(extraction_records(100, 5, 1), extraction_records(100, 5, 1));
        assert_eq!(gold_summaries(5, 3), gold_summaries(5, 3));
    }

    #[test]
    fn record_fixture_sizes() {
        let recs = extraction_records(1000, 20, 9);
        assert_eq!(recs.iter().map(|r| r.items.len()).sum::<usize>(), 1000);
        let names = drug_names(791);
        assert_eq!(names.iter().collect::<std::collections::BTreeSet<_>>().len(), 791);
    }

    #[test]
    fn kappa_fixture_counts() {
        let (a, b) = kappa_pair(11);
        assert_eq!(a.len(), 40);
        assert_eq!(a.iter().filter(|x| **x).count(), 20);
        assert_eq!(b.iter().filter(|x| **x).count(), 19);
        assert!((cohens_kappa(&a, &b).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn clinical_fixture_mean() {
        let agg = clinical_eval_aggregate(&clinical_ratings()).unwrap();
        assert!((agg.overall - 3.88).abs() < 1e-12);
    }
}
