//! Forum posts, annotation records and the dataset-level protocols around
//! them: ingestion, username redaction, train/validation/test splits,
//! majority-vote label aggregation and inter-annotator agreement.

mod agreement;
mod annotation;
mod anonymize;
mod ingest;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{cohens_kappa, mean_pairwise_kappa, ConfusionTable};
pub use annotation::{
    aggregate_annotations, AdeAnnotation, Aggregation, AnnotationRecord, DisputedField,
    DisputedItem, DrugAnnotation,
};
pub use anonymize::{anonymize, Anonymizer, USER_TOKEN};
pub use ingest::{ingest_posts, read_annotations, write_posts, PostFormat};
pub use split::{split_corpus, SplitAssignment};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate post id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid post: {0}")]
    InvalidPost(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("invalid username pattern `{pattern}`: {message}")]
    InvalidPattern { pattern: String, message: String },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("cannot aggregate: {0}")]
    Aggregation(String),

    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("label sequences are empty")]
    EmptyLabels,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Forum a post was scraped from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Forum {
    #[serde(rename = "CRU", alias = "cru")]
    Cru,
    #[serde(rename = "CSN", alias = "csn")]
    Csn,
    #[serde(rename = "Other", alias = "other")]
    Other,
}

impl FromStr for Forum {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cru" => Ok(Forum::Cru),
            "csn" => Ok(Forum::Csn),
            "other" | "" => Ok(Forum::Other),
            other => Err(CorpusError::InvalidPost(format!("unknown forum `{other}`"))),
        }
    }
}

/// One patient forum post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub forum: Forum,
    pub thread_title: String,
    #[serde(default)]
    pub cancer_type: Option<String>,
    pub timestamp: String,
    pub text: String,
}

impl Post {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(CorpusError::InvalidPost("post id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(CorpusError::InvalidPost(format!("post `{}` has empty text", self.id)));
        }
        Ok(())
    }
}

/// An ordered, id-unique collection of posts.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    /// SHA-256 of the source file, hex encoded. Empty for in-memory corpora.
    pub provenance: String,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(provenance: impl Into<String>) -> Self {
        Corpus { posts: Vec::new(), provenance: provenance.into(), index: HashMap::new() }
    }

    /// Build a corpus from posts, rejecting invalid posts and duplicate ids.
    pub fn from_posts(posts: impl IntoIterator<Item = Post>) -> Result<Self> {
        let mut corpus = Corpus::new("");
        for post in posts {
            corpus.push(post)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, post: Post) -> Result<()> {
        post.validate()?;
        if self.index.contains_key(&post.id) {
            return Err(CorpusError::DuplicateId { id: post.id, line: self.posts.len() + 1 });
        }
        self.index.insert(post.id.clone(), self.posts.len());
        self.posts.push(post);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Post> {
        self.posts.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Post> {
        self.index.get(id).map(|&i| &self.posts[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.posts.iter().map(|p| p.id.as_str())
    }

    /// Apply `f` to every post in place. Ids must be left untouched.
    pub fn map_posts<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(&Post) -> Result<Post>,
    {
        for post in &mut self.posts {
            let updated = f(post)?;
            if updated.id != post.id {
                return Err(CorpusError::InvalidPost("post id changed during rewrite".into()));
            }
            *post = updated;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Post;
    type IntoIter = std::slice::Iter<'a, Post>;

    fn into_iter(self) -> Self::IntoIter {
        self.posts.iter()
    }
}

/// ADE severity.
///
/// `Ord` follows clinical seriousness: `High > Moderate > Mild > NotApplicable`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    #[serde(rename = "na")]
    NotApplicable,
    #[serde(rename = "mild", alias = "low")]
    Mild,
    #[serde(rename = "moderate")]
    Moderate,
    #[serde(rename = "high")]
    High,
}

impl Severity {
    /// Most severe first.
    pub const DESCENDING: [Severity; 4] =
        [Severity::High, Severity::Moderate, Severity::Mild, Severity::NotApplicable];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::High => "high",
            Severity::Moderate => "moderate",
            Severity::Mild => "mild",
            Severity::NotApplicable => "na",
        }
    }

    /// Lenient parse used for model output and user input. `low` is accepted
    /// as a synonym for `mild`.
    pub fn parse_lenient(s: &str) -> Option<Severity> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Some(Severity::High),
            "moderate" => Some(Severity::Moderate),
            "mild" | "low" => Some(Severity::Mild),
            "na" | "n/a" | "not applicable" | "not_applicable" | "notapplicable" | "none" => {
                Some(Severity::NotApplicable)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Severity::parse_lenient(s).ok_or_else(|| format!("unknown severity `{s}`"))
    }
}
