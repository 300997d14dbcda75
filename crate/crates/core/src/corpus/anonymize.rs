use regex::Regex;

use super::{CorpusError, Post, Result};

/// Replacement token for redacted usernames.
pub const USER_TOKEN: &str = "[USER]";

/// Compiled username patterns.
///
/// Matches that overlap an existing `[USER]` token are left alone, so
/// redaction is idempotent even for patterns broad enough to match inside
/// the token itself.
#[derive(Debug, Clone)]
pub struct Anonymizer {
    patterns: Vec<Regex>,
}

impl Anonymizer {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| {
                Regex::new(p.as_ref()).map_err(|e| CorpusError::InvalidPattern {
                    pattern: p.as_ref().to_string(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Anonymizer { patterns })
    }

    /// `@handle` mentions.
    pub fn default_handles() -> Self {
        Anonymizer::new(&[r"@[A-Za-z0-9_.\-]+[A-Za-z0-9_]"]).expect("static pattern")
    }

    pub fn redact(&self, text: &str) -> String {
        let mut current = text.to_string();
        for re in &self.patterns {
            current = redact_one(re, &current);
        }
        current
    }

    pub fn apply(&self, post: &Post) -> Post {
        Post {
            id: post.id.clone(),
            forum: post.forum,
            thread_title: self.redact(&post.thread_title),
            cancer_type: post.cancer_type.as_deref().map(|c| self.redact(c)),
            timestamp: post.timestamp.clone(),
            text: self.redact(&post.text),
        }
    }
}

fn redact_one(re: &Regex, text: &str) -> String {
    let protected: Vec<(usize, usize)> =
        text.match_indices(USER_TOKEN).map(|(i, m)| (i, i + m.len())).collect();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in re.find_iter(text) {
        if m.start() == m.end() {
            continue;
        }
        let overlaps = protected.iter().any(|&(s, e)| m.start() < e && s < m.end());
        if overlaps {
            continue;
        }
        out.push_str(&text[last..m.start()]);
        out.push_str(USER_TOKEN);
        last = m.end();
    }
    out.push_str(&text[last..]);
    out
}

/// Replace every match of `username_patterns` in the post's text fields with
/// `[USER]`.
pub fn anonymize<S: AsRef<str>>(post: &Post, username_patterns: &[S]) -> Result<Post> {
    Ok(Anonymizer::new(username_patterns)?.apply(post))
}
