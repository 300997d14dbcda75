//! Annotation tasks: assignment, optimistic versioning and aggregation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use adesum_core::corpus::{aggregate_annotations, AnnotationRecord, DisputedItem};

use crate::auth::{Identity, Role};
use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    InProgress,
    Submitted,
    Adjudication,
    Final,
}

impl TaskStatus {
    pub fn can_become(self, next: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, next),
            (Open, InProgress) | (InProgress, Submitted) | (Submitted, Final) | (Submitted, Adjudication) | (Adjudication, Final)
        )
    }

    fn accepts_labels(self) -> bool {
        matches!(self, TaskStatus::Open | TaskStatus::InProgress)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub post_id: String,
    pub status: TaskStatus,
    /// Every status the task has held, oldest first.
    pub history: Vec<TaskStatus>,
    /// Raters the task was handed to, in assignment order.
    pub assigned: Vec<String>,
    pub submissions: Vec<AnnotationRecord>,
    pub version: u64,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_record: Option<AnnotationRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<DisputedItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjudicator: Option<String>,
}

impl AnnotationTask {
    fn new(task_id: String, post_id: String) -> Self {
        AnnotationTask {
            task_id,
            post_id,
            status: TaskStatus::Open,
            history: vec![TaskStatus::Open],
            assigned: Vec::new(),
            submissions: Vec::new(),
            version: 1,
            final_record: None,
            unresolved: Vec::new(),
            adjudicator: None,
        }
    }

    fn move_to(&mut self, next: TaskStatus) {
        debug_assert!(self.status.can_become(next), "{:?} -> {next:?}", self.status);
        self.status = next;
        self.history.push(next);
    }

    pub fn has_submitted(&self, rater: &str) -> bool {
        self.submissions.iter().any(|s| s.annotator_id == rater)
    }

    fn waiting_on(&self, rater: &str) -> bool {
        self.status.accepts_labels() && self.assigned.iter().any(|r| r == rater) && !self.has_submitted(rater)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Queue {
    Annotation,
    Adjudication,
}

/// In-memory index of every task, rebuilt from the event log.
#[derive(Debug, Clone, Default)]
pub struct TaskBook {
    tasks: BTreeMap<String, AnnotationTask>,
    by_post: BTreeMap<String, String>,
}

impl TaskBook {
    /// Later snapshots of a task replace earlier ones.
    pub fn from_snapshots(snapshots: impl IntoIterator<Item = AnnotationTask>) -> Self {
        let mut book = TaskBook::default();
        for t in snapshots {
            book.by_post.insert(t.post_id.clone(), t.task_id.clone());
            book.tasks.insert(t.task_id.clone(), t);
        }
        book
    }

    pub fn get(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.tasks.get(task_id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &AnnotationTask> {
        self.tasks.values()
    }

    pub fn task_for_post(&self, post_id: &str) -> Option<&AnnotationTask> {
        self.by_post.get(post_id).and_then(|id| self.tasks.get(id))
    }

    /// A new task for `post_id`, not yet stored.
    pub fn draft(&self, post_id: &str) -> AnnotationTask {
        AnnotationTask::new(format!("task-{:05}", self.tasks.len() + 1), post_id.to_string())
    }

    pub fn store(&mut self, task: AnnotationTask) {
        self.by_post.insert(task.post_id.clone(), task.task_id.clone());
        self.tasks.insert(task.task_id.clone(), task);
    }

    /// The task `rater` should work on next, and whether handing it out
    /// changes it.
    ///
    /// A task already assigned to the rater and still awaiting their labels
    /// comes first. Otherwise the open task with the fewest raters so far
    /// is assigned, skipping tasks the rater already holds or labeled.
    pub fn next_for(&self, rater: &str, queue: Queue, raters_per_task: usize) -> Option<(AnnotationTask, bool)> {
        match queue {
            Queue::Adjudication => self
                .tasks
                .values()
                .find(|t| t.status == TaskStatus::Adjudication)
                .map(|t| (t.clone(), false)),
            Queue::Annotation => {
                if let Some(t) = self.tasks.values().find(|t| t.waiting_on(rater)) {
                    return Some((t.clone(), false));
                }
                let t = self
                    .tasks
                    .values()
                    .filter(|t| {
                        t.status.accepts_labels()
                            && t.assigned.len() < raters_per_task
                            && !t.assigned.iter().any(|r| r == rater)
                            && !t.has_submitted(rater)
                    })
                    .min_by(|a, b| a.assigned.len().cmp(&b.assigned.len()).then_with(|| a.task_id.cmp(&b.task_id)))?;
                let mut t = t.clone();
                t.assigned.push(rater.to_string());
                if t.status == TaskStatus::Open {
                    t.move_to(TaskStatus::InProgress);
                }
                t.version += 1;
                Some((t, true))
            }
        }
    }
}

/// Apply one labels submission to a copy of `task`.
///
/// Annotators submit while the task is open; the submission that reaches
/// `raters_per_task` aggregates the labels, and the task ends final, or in
/// adjudication when some item lacks a strict majority. An adjudicator's
/// submission then becomes the final record.
pub fn submit_labels(
    task: &AnnotationTask,
    record: AnnotationRecord,
    expected_version: u64,
    who: &Identity,
    raters_per_task: usize,
) -> Result<AnnotationTask, ApiError> {
    if expected_version != task.version {
        return Err(ApiError::conflict(
            "version_conflict",
            format!("task {} is at version {}, not {expected_version}", task.task_id, task.version),
        )
        .with("current_version", task.version));
    }
    who.require_self(&record.annotator_id)?;
    if record.post_id != task.post_id {
        return Err(ApiError::bad_request(format!(
            "labels are for post `{}`, task {} is for `{}`",
            record.post_id, task.task_id, task.post_id
        )));
    }
    record.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;

    let mut next = task.clone();
    match task.status {
        TaskStatus::Open | TaskStatus::InProgress => {
            who.require(Role::Annotator)?;
            if task.has_submitted(&record.annotator_id) {
                return Err(ApiError::conflict(
                    "already_submitted",
                    format!("`{}` already labeled task {}", record.annotator_id, task.task_id),
                ));
            }
            if !task.assigned.contains(&record.annotator_id) {
                return Err(ApiError::forbidden(format!(
                    "task {} is not assigned to `{}`",
                    task.task_id, record.annotator_id
                )));
            }
            next.submissions.push(record);
            if next.submissions.len() >= raters_per_task {
                let aggregation = aggregate_annotations(&next.submissions).map_err(|e| ApiError::bad_request(e.to_string()))?;
                next.move_to(TaskStatus::Submitted);
                next.final_record = Some(aggregation.final_record);
                next.unresolved = aggregation.unresolved;
                next.move_to(if next.unresolved.is_empty() { TaskStatus::Final } else { TaskStatus::Adjudication });
            }
        }
        TaskStatus::Adjudication => {
            who.require(Role::Adjudicator)?;
            next.adjudicator = Some(record.annotator_id.clone());
            next.final_record = Some(record.normalized());
            next.move_to(TaskStatus::Final);
        }
        TaskStatus::Submitted | TaskStatus::Final => {
            return Err(ApiError::conflict("task_closed", format!("task {} is already {:?}", task.task_id, task.status)));
        }
    }
    next.version += 1;
    Ok(next)
}

/// Raters' labels from every task whose annotation round is complete,
/// as `rater -> post -> record`.
pub fn finalized_labels(book: &TaskBook) -> BTreeMap<String, BTreeMap<String, AnnotationRecord>> {
    let mut out: BTreeMap<String, BTreeMap<String, AnnotationRecord>> = BTreeMap::new();
    for t in book.tasks() {
        if matches!(t.status, TaskStatus::Adjudication | TaskStatus::Final) {
            for s in &t.submissions {
                out.entry(s.annotator_id.clone()).or_default().insert(t.post_id.clone(), s.normalized());
            }
        }
    }
    out
}

/// Posts both raters labeled.
pub fn shared_posts<'a>(
    a: &'a BTreeMap<String, AnnotationRecord>,
    b: &'a BTreeMap<String, AnnotationRecord>,
) -> BTreeSet<&'a str> {
    a.keys().filter(|k| b.contains_key(*k)).map(String::as_str).collect()
}
