use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AlignmentError, Result};
use crate::text::split_sentences;

/// Edits that turn a gold summary into a plausible non-preferred one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Reverse the severity sections, so milder ADEs come first.
    SeverityShuffle,
    /// Drop the last-listed ADE.
    FactDrop,
    /// Repeat the final sentence.
    RepetitionInject,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [Mutation::SeverityShuffle, Mutation::FactDrop, Mutation::RepetitionInject];

    pub fn as_str(self) -> &'static str {
        match self {
            Mutation::SeverityShuffle => "severity_shuffle",
            Mutation::FactDrop => "fact_drop",
            Mutation::RepetitionInject => "repetition_inject",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown mutation `{s}`"))
    }
}

fn is_header(sentence: &str) -> bool {
    sentence.starts_with("DRUG:")
}

fn terminator(sentence: &str) -> (&str, &str) {
    match sentence.char_indices().last() {
        Some((i, c)) if matches!(c, '.' | '!' | '?') => (&sentence[..i], &sentence[i..]),
        _ => (sentence, ""),
    }
}

fn shuffle(sentences: &mut [String]) {
    let start = usize::from(sentences.first().is_some_and(|s| is_header(s)));
    sentences[start..].reverse();
}

fn drop_fact(sentences: &mut Vec<String>) {
    let Some(idx) = sentences.iter().rposition(|s| !is_header(s)) else { return };
    let (body, end) = terminator(&sentences[idx]);
    let (head, list) = match body.rfind(':') {
        Some(c) => (&body[..=c], &body[c + 1..]),
        None => ("", body),
    };
    let items: Vec<&str> = list.split(',').map(str::trim).collect();
    if items.len() > 1 {
        let kept = items[..items.len() - 1].join(", ");
        let sep = if head.is_empty() { "" } else { " " };
        sentences[idx] = format!("{head}{sep}{kept}{end}");
    } else if sentences.len() > 1 {
        sentences.remove(idx);
    }
}

fn repeat_last(sentences: &mut Vec<String>) {
    if let Some(last) = sentences.last().cloned() {
        sentences.push(last);
    }
}

/// Deterministically degrade `gold`.
///
/// Selected mutations always apply in the order shuffle, drop, repeat.
/// If the result would equal `gold`, its final sentence is appended again,
/// so the output never equals the input.
pub fn degrade_summary(gold: &str, mutations: &[Mutation]) -> Result<String> {
    if mutations.is_empty() {
        return Err(AlignmentError::InvalidInput("select at least one mutation".into()));
    }
    let original: Vec<String> = split_sentences(gold).into_iter().map(String::from).collect();
    let Some(last) = original.last().cloned() else {
        return Err(AlignmentError::InvalidInput("gold summary is empty".into()));
    };
    let mut sentences = original;
    for m in Mutation::ALL.into_iter().filter(|m| mutations.contains(m)) {
        match m {
            Mutation::SeverityShuffle => shuffle(&mut sentences),
            Mutation::FactDrop => drop_fact(&mut sentences),
            Mutation::RepetitionInject => repeat_last(&mut sentences),
        }
    }
    let out = sentences.join(" ");
    if out == gold {
        return Ok(format!("{gold} {last}"));
    }
    Ok(out)
}
