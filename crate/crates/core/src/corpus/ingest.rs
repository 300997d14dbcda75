use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{AnnotationRecord, Corpus, CorpusError, Forum, Post, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostFormat {
    Jsonl,
    Csv,
}

impl PostFormat {
    /// Guess from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> PostFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => PostFormat::Csv,
            _ => PostFormat::Jsonl,
        }
    }
}

impl FromStr for PostFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(PostFormat::Jsonl),
            "csv" => Ok(PostFormat::Csv),
            other => Err(format!("unknown post format `{other}`")),
        }
    }
}

#[derive(Deserialize)]
struct CsvRow {
    id: String,
    forum: String,
    thread_title: String,
    #[serde(default)]
    cancer_type: Option<String>,
    timestamp: String,
    text: String,
}

/// Load pre-scraped posts. Blank JSONL lines are skipped; line numbers in
/// errors are 1-based physical lines of the source file.
pub fn ingest_posts(path: &Path, format: PostFormat) -> Result<Corpus> {
    let bytes = fs::read(path)?;
    let provenance = hex::encode(Sha256::digest(&bytes));
    let mut corpus = Corpus::new(provenance);
    match format {
        PostFormat::Jsonl => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| CorpusError::Malformed { line: 0, message: e.to_string() })?;
            for (i, line) in text.lines().enumerate() {
                let line_no = i + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let post: Post = serde_json::from_str(line)
                    .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
                add(&mut corpus, post, line_no)?;
            }
        }
        PostFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(&bytes[..]);
            let headers = reader
                .headers()
                .map_err(|e| CorpusError::Malformed { line: 1, message: e.to_string() })?
                .clone();
            let mut record = csv::StringRecord::new();
            loop {
                let more = reader.read_record(&mut record).map_err(|e| CorpusError::Malformed {
                    line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                    message: e.to_string(),
                })?;
                if !more {
                    break;
                }
                let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let row: CsvRow = record
                    .deserialize(Some(&headers))
                    .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
                let forum = Forum::from_str(&row.forum).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
                let post = Post {
                    id: row.id,
                    forum,
                    thread_title: row.thread_title,
                    cancer_type: row.cancer_type.filter(|c| !c.trim().is_empty()),
                    timestamp: row.timestamp,
                    text: row.text,
                };
                add(&mut corpus, post, line_no)?;
            }
        }
    }
    Ok(corpus)
}

fn add(corpus: &mut Corpus, post: Post, line: usize) -> Result<()> {
    if corpus.contains(&post.id) {
        return Err(CorpusError::DuplicateId { id: post.id, line });
    }
    corpus.push(post).map_err(|e| match e {
        CorpusError::InvalidPost(message) => CorpusError::Malformed { line, message },
        other => other,
    })
}

/// Write posts as JSONL in corpus order.
pub fn write_posts(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for post in corpus {
        serde_json::to_writer(&mut out, post).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read annotation JSONL, validating each record.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| CorpusError::Malformed { line: i + 1, message: e.to_string() })?;
        record
            .validate()
            .map_err(|e| CorpusError::Malformed { line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}
