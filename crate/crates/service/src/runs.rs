//! Pipeline runs started through the service.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use adesum_core::corpus::{split_corpus, Corpus, CorpusError};
use adesum_core::grouping::DrugGroupGrid;
use adesum_core::pipeline::{read_grid, read_jsonl, PipelineError, RunManifest, GRID_FILE, SUMMARIES_FILE};
use adesum_core::summarization::DrugSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Running,
    Completed,
    Failed,
}

/// Which posts of the corpus a run covers, by the configured split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    Train,
    Validation,
    Test,
}

impl Subset {
    pub fn select(self, corpus: Corpus, ratios: [f64; 3], seed: u64) -> Result<Corpus, CorpusError> {
        if self == Subset::All {
            return Ok(corpus);
        }
        let split = split_corpus(&corpus, ratios, seed)?;
        let keep = match self {
            Subset::Train => &split.train,
            Subset::Validation => &split.validation,
            _ => &split.test,
        };
        let mut out = Corpus::from_posts(corpus.posts().iter().filter(|p| keep.contains(&p.id)).cloned())?;
        out.provenance = corpus.provenance;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub state: RunState,
    pub posts: String,
    pub subset: Subset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Browsable outputs of a completed run.
#[derive(Debug)]
pub struct RunData {
    pub grid: DrugGroupGrid,
    pub summaries: BTreeMap<String, DrugSummary>,
}

impl RunData {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let grid = read_grid(&dir.join(GRID_FILE))?;
        let summaries = read_jsonl::<DrugSummary>(&dir.join(SUMMARIES_FILE))?
            .into_iter()
            .map(|s| (s.drug.clone(), s))
            .collect();
        Ok(RunData { grid, summaries })
    }
}

#[derive(Debug, Default)]
pub struct RunBook {
    runs: BTreeMap<String, RunRecord>,
    data: HashMap<String, Arc<RunData>>,
}

impl RunBook {
    /// Replay run events; a run still marked running was cut off by a
    /// restart and is reported as failed.
    pub fn from_events(events: impl IntoIterator<Item = RunRecord>) -> Self {
        let mut book = RunBook::default();
        for r in events {
            book.runs.insert(r.run_id.clone(), r);
        }
        for r in book.runs.values_mut() {
            if r.state == RunState::Running {
                r.state = RunState::Failed;
                r.error = Some("interrupted by a service restart".into());
            }
        }
        book
    }

    pub fn next_id(&self) -> String {
        format!("run-{:04}", self.runs.len() + 1)
    }

    pub fn get(&self, run_id: &str) -> Option<&RunRecord> {
        self.runs.get(run_id)
    }

    pub fn all(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.values()
    }

    pub fn put(&mut self, record: RunRecord) {
        self.runs.insert(record.run_id.clone(), record);
    }

    pub fn latest_completed(&self) -> Option<&RunRecord> {
        self.runs.values().rev().find(|r| r.state == RunState::Completed)
    }

    pub fn data(&self, run_id: &str) -> Option<Arc<RunData>> {
        self.data.get(run_id).cloned()
    }

    pub fn put_data(&mut self, run_id: &str, data: RunData) -> Arc<RunData> {
        let data = Arc::new(data);
        self.data.insert(run_id.to_string(), data.clone());
        data
    }
}
