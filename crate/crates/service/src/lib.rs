//! HTTP service: pipeline runs, grid and summary browsing, annotation
//! tasks, clinical ratings and agreement statistics.
//!
//! State lives in append-only JSONL event logs under the data directory and
//! is rebuilt in memory on startup.

pub mod auth;
pub mod error;
pub mod ratings;
pub mod runs;
pub mod stats;
pub mod store;
pub mod tasks;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use anyhow::Context;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use adesum_core::corpus::{ingest_posts, AnnotationRecord, Corpus, Post, PostFormat};
use adesum_core::grouping::SeverityBuckets;
use adesum_core::pipeline::{run_pipeline, Backends, RunConfig};
use adesum_core::summarization::DrugSummary;
use adesum_core::text::normalize_term;

use auth::{Caller, Role, TokenTable};
use error::{ApiError, ApiJson};
use ratings::{RatingBook, RatingRecord, RatingSubmission};
use runs::{RunBook, RunData, RunRecord, RunState, Subset};
use store::EventLog;
use tasks::{AnnotationTask, Queue, TaskBook};

pub const TASKS_LOG: &str = "tasks.jsonl";
pub const RATINGS_LOG: &str = "ratings.jsonl";
pub const RUNS_LOG: &str = "runs.jsonl";
pub const RUNS_DIR: &str = "runs";

struct Shared {
    workdir: PathBuf,
    config: RunConfig,
    tokens: TokenTable,
    corpus: Option<Corpus>,
    runs_dir: PathBuf,
    tasks: RwLock<TaskBook>,
    task_log: EventLog,
    ratings: RwLock<RatingBook>,
    rating_log: EventLog,
    runs: RwLock<RunBook>,
    run_log: EventLog,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

fn read<T>(lock: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(lock: &RwLock<T>) -> RwLockWriteGuard<'_, T> {
    lock.write().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// Load the corpus named by `config` (when present) and replay the
    /// event logs under its data directory.
    pub fn open(workdir: &Path, config: RunConfig, tokens: TokenTable) -> anyhow::Result<Self> {
        config.validate()?;
        let data_dir = RunConfig::resolve(workdir, &config.service.data_dir);
        let runs_dir = data_dir.join(RUNS_DIR);
        fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;

        let posts = RunConfig::resolve(workdir, &config.paths.posts);
        let corpus = if posts.exists() {
            Some(ingest_posts(&posts, PostFormat::from_path(&posts))?)
        } else {
            log::warn!("{} not found; annotation tasks cannot be created", posts.display());
            None
        };

        let task_log = EventLog::new(data_dir.join(TASKS_LOG));
        let rating_log = EventLog::new(data_dir.join(RATINGS_LOG));
        let run_log = EventLog::new(data_dir.join(RUNS_LOG));
        let tasks = TaskBook::from_snapshots(task_log.replay::<AnnotationTask>()?);
        let ratings = RatingBook::from_records(rating_log.replay::<RatingRecord>()?);
        let mut run_book = RunBook::from_events(run_log.replay::<RunRecord>()?);
        let completed: Vec<String> =
            run_book.all().filter(|r| r.state == RunState::Completed).map(|r| r.run_id.clone()).collect();
        for id in completed {
            match RunData::load(&runs_dir.join(&id)) {
                Ok(data) => {
                    run_book.put_data(&id, data);
                }
                Err(e) => log::warn!("run {id}: artifacts unreadable: {e}"),
            }
        }

        Ok(AppState(Arc::new(Shared {
            workdir: workdir.to_path_buf(),
            config,
            tokens,
            corpus,
            runs_dir,
            tasks: RwLock::new(tasks),
            task_log,
            ratings: RwLock::new(ratings),
            rating_log,
            runs: RwLock::new(run_book),
            run_log,
        })))
    }

    pub fn tokens(&self) -> &TokenTable {
        &self.0.tokens
    }

    /// A completed run's data: `run_id` when given, else the latest.
    fn run_data(&self, run_id: Option<&str>) -> Result<(String, Arc<RunData>), ApiError> {
        let runs = read(&self.0.runs);
        let record = match run_id {
            Some(id) => runs.get(id).ok_or_else(|| ApiError::not_found("unknown_run", format!("no run `{id}`")))?,
            None => runs
                .latest_completed()
                .ok_or_else(|| ApiError::not_found("no_completed_run", "no run has completed yet"))?,
        };
        if record.state != RunState::Completed {
            return Err(ApiError::conflict(
                "run_not_completed",
                format!("run {} is {:?}", record.run_id, record.state).to_lowercase(),
            ));
        }
        let data = runs
            .data(&record.run_id)
            .ok_or_else(|| ApiError::internal(format!("artifacts of run {} are unavailable", record.run_id)))?;
        Ok((record.run_id.clone(), data))
    }

    fn finish_run(&self, mut record: RunRecord, outcome: Result<adesum_core::pipeline::RunManifest, String>) {
        let dir = self.0.runs_dir.join(&record.run_id);
        let mut data = None;
        match outcome {
            Ok(manifest) if manifest.is_completed() => match RunData::load(&dir) {
                Ok(d) => {
                    record.state = RunState::Completed;
                    record.manifest = Some(manifest);
                    data = Some(d);
                }
                Err(e) => {
                    record.state = RunState::Failed;
                    record.manifest = Some(manifest);
                    record.error = Some(format!("artifacts unreadable: {e}"));
                }
            },
            Ok(manifest) => {
                record.state = RunState::Failed;
                record.error = manifest.failure.as_ref().map(|f| format!("{:?} stage: {}", f.stage, f.message).to_lowercase());
                record.manifest = Some(manifest);
            }
            Err(e) => {
                record.state = RunState::Failed;
                record.error = Some(e);
            }
        }
        let mut runs = write(&self.0.runs);
        if let Err(e) = self.0.run_log.append(&record) {
            log::error!("run {}: could not record completion: {e}", record.run_id);
        }
        if let Some(d) = data {
            runs.put_data(&record.run_id, d);
        }
        log::info!("run {} finished: {:?}", record.run_id, record.state);
        runs.put(record);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/runs", post(start_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/drugs", get(list_drugs))
        .route("/drugs/{name}/summary", get(drug_summary))
        .route("/annotation/tasks", post(create_tasks))
        .route("/annotation/next", get(next_task))
        .route("/annotation/{task}", get(get_task))
        .route("/annotation/{task}/labels", post(submit_labels))
        .route("/ratings", post(submit_rating))
        .route("/ratings/sample", get(rating_sample))
        .route("/stats/agreement", get(agreement))
        .route("/stats/clinical", get(clinical))
        .with_state(state)
}

/// Serve until interrupted.
pub async fn serve(state: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

// Runs

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunRequest {
    /// Posts file, relative to the working directory; the configured
    /// corpus when absent.
    pub posts: Option<PathBuf>,
    pub subset: Subset,
    /// Replaces the service configuration for this run.
    pub config: Option<RunConfig>,
}

async fn start_run(
    State(state): State<AppState>,
    Caller(who): Caller,
    ApiJson(req): ApiJson<RunRequest>,
) -> Result<impl IntoResponse, ApiError> {
    who.require(Role::Admin)?;
    let config = req.config.unwrap_or_else(|| state.0.config.clone());
    config.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", e.to_string()))?;
    let posts = RunConfig::resolve(&state.0.workdir, req.posts.as_deref().unwrap_or(&config.paths.posts));
    if !posts.exists() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_input", format!("{} not found", posts.display()))
            .with("path", posts.display().to_string()));
    }

    let setup = {
        let (posts, config, workdir) = (posts.clone(), config.clone(), state.0.workdir.clone());
        tokio::task::spawn_blocking(move || -> Result<(Corpus, Backends), String> {
            let corpus = ingest_posts(&posts, PostFormat::from_path(&posts)).map_err(|e| e.to_string())?;
            let corpus = req.subset.select(corpus, config.split.ratios, config.split.seed).map_err(|e| e.to_string())?;
            let backends = Backends::from_config(&config, &workdir).map_err(|e| e.to_string())?;
            Ok((corpus, backends))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    };
    let (corpus, backends) = setup.map_err(ApiError::bad_request)?;

    let record = {
        let mut runs = write(&state.0.runs);
        let record = RunRecord {
            run_id: runs.next_id(),
            state: RunState::Running,
            posts: posts.display().to_string(),
            subset: req.subset,
            manifest: None,
            error: None,
        };
        state.0.run_log.append(&record)?;
        runs.put(record.clone());
        record
    };

    let (bg, pending) = (state.clone(), record.clone());
    tokio::task::spawn_blocking(move || {
        let out_dir = bg.0.runs_dir.join(&pending.run_id);
        let outcome = run_pipeline(&corpus, &config, &backends, &out_dir).map_err(|e| e.to_string());
        bg.finish_run(pending, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn list_runs(State(state): State<AppState>, Caller(_): Caller) -> Json<Vec<RunRecord>> {
    Json(read(&state.0.runs).all().cloned().collect())
}

async fn get_run(
    State(state): State<AppState>,
    Caller(_): Caller,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<RunRecord>, ApiError> {
    read(&state.0.runs)
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("unknown_run", format!("no run `{id}`")))
}

// Drugs

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunQuery {
    pub run: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DrugEntry {
    pub name: String,
    pub clusters: usize,
    pub mentions: usize,
    pub severities: Vec<String>,
}

async fn list_drugs(
    State(state): State<AppState>,
    Caller(_): Caller,
    Query(q): Query<RunQuery>,
) -> Result<impl IntoResponse, ApiError> {
    let (run_id, data) = state.run_data(q.run.as_deref())?;
    let drugs: Vec<DrugEntry> = data
        .grid
        .entries
        .iter()
        .map(|(name, buckets)| DrugEntry {
            name: name.clone(),
            clusters: buckets.0.values().map(Vec::len).sum(),
            mentions: buckets.0.values().flatten().map(|c| c.members.len()).sum(),
            severities: buckets.iter_descending().map(|(s, _)| s.to_string()).collect(),
        })
        .collect();
    Ok(Json(json!({ "run_id": run_id, "drugs": drugs })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryView {
    pub run_id: String,
    pub summary_id: String,
    pub summary: DrugSummary,
    pub groups: SeverityBuckets,
}

pub fn summary_id(run_id: &str, drug: &str) -> String {
    format!("{run_id}/{drug}")
}

async fn drug_summary(
    State(state): State<AppState>,
    Caller(_): Caller,
    UrlPath(name): UrlPath<String>,
    Query(q): Query<RunQuery>,
) -> Result<Json<SummaryView>, ApiError> {
    let (run_id, data) = state.run_data(q.run.as_deref())?;
    let drug = normalize_term(&name);
    let summary = data
        .summaries
        .get(&drug)
        .cloned()
        .ok_or_else(|| ApiError::not_found("unknown_drug", format!("run {run_id} has no summary for `{drug}`")))?;
    let groups = data.grid.get(&drug).cloned().unwrap_or_default();
    Ok(Json(SummaryView { summary_id: summary_id(&run_id, &drug), run_id, summary, groups }))
}

// Annotation

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateTasks {
    pub post_ids: Vec<String>,
}

async fn create_tasks(
    State(state): State<AppState>,
    Caller(who): Caller,
    ApiJson(req): ApiJson<CreateTasks>,
) -> Result<impl IntoResponse, ApiError> {
    who.require(Role::Admin)?;
    let corpus = state
        .0
        .corpus
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_corpus", "the service has no corpus loaded"))?;
    if let Some(missing) = req.post_ids.iter().find(|id| !corpus.contains(id)) {
        return Err(ApiError::bad_request(format!("unknown post `{missing}`")));
    }
    let mut book = write(&state.0.tasks);
    let mut created = Vec::new();
    let mut skipped = Vec::new();
    for id in &req.post_ids {
        if book.task_for_post(id).is_some() {
            skipped.push(id.clone());
            continue;
        }
        let task = book.draft(id);
        state.0.task_log.append(&task)?;
        book.store(task.clone());
        created.push(task);
    }
    Ok((StatusCode::CREATED, Json(json!({ "created": created, "skipped": skipped }))))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NextQuery {
    pub rater: Option<String>,
    pub queue: Option<Queue>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskView {
    pub task: AnnotationTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<Post>,
}

impl AppState {
    fn view(&self, task: AnnotationTask) -> TaskView {
        let post = self.0.corpus.as_ref().and_then(|c| c.get(&task.post_id)).cloned();
        TaskView { task, post }
    }
}

async fn next_task(
    State(state): State<AppState>,
    Caller(who): Caller,
    Query(q): Query<NextQuery>,
) -> Result<Json<TaskView>, ApiError> {
    let rater = q.rater.unwrap_or_else(|| who.rater_id.clone());
    who.require_self(&rater)?;
    let queue = q.queue.unwrap_or(Queue::Annotation);
    who.require(match queue {
        Queue::Annotation => Role::Annotator,
        Queue::Adjudication => Role::Adjudicator,
    })?;
    let task = {
        let mut book = write(&state.0.tasks);
        let (task, changed) = book
            .next_for(&rater, queue, state.0.config.service.raters_per_task)
            .ok_or_else(|| ApiError::not_found("no_tasks", format!("no task available for `{rater}`")))?;
        if changed {
            state.0.task_log.append(&task)?;
            book.store(task.clone());
        }
        task
    };
    Ok(Json(state.view(task)))
}

async fn get_task(
    State(state): State<AppState>,
    Caller(_): Caller,
    UrlPath(task_id): UrlPath<String>,
) -> Result<Json<TaskView>, ApiError> {
    let task = read(&state.0.tasks)
        .get(&task_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("unknown_task", format!("no task `{task_id}`")))?;
    Ok(Json(state.view(task)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsSubmission {
    pub expected_version: u64,
    pub record: AnnotationRecord,
}

async fn submit_labels(
    State(state): State<AppState>,
    Caller(who): Caller,
    UrlPath(task_id): UrlPath<String>,
    ApiJson(req): ApiJson<LabelsSubmission>,
) -> Result<Json<AnnotationTask>, ApiError> {
    let mut book = write(&state.0.tasks);
    let task = book.get(&task_id).ok_or_else(|| ApiError::not_found("unknown_task", format!("no task `{task_id}`")))?;
    let next = tasks::submit_labels(task, req.record, req.expected_version, &who, state.0.config.service.raters_per_task)?;
    state.0.task_log.append(&next)?;
    book.store(next.clone());
    Ok(Json(next))
}

// Ratings

async fn submit_rating(
    State(state): State<AppState>,
    Caller(who): Caller,
    ApiJson(req): ApiJson<RatingSubmission>,
) -> Result<impl IntoResponse, ApiError> {
    who.require(Role::Clinician)?;
    who.require_self(&req.rater_id)?;
    req.scores.validate()?;
    let (run_id, drug) = req
        .summary_id
        .split_once('/')
        .ok_or_else(|| ApiError::bad_request(format!("summary id `{}` is not `run/drug`", req.summary_id)))?;
    let (_, data) = state.run_data(Some(run_id))?;
    if !data.summaries.contains_key(drug) {
        return Err(ApiError::not_found("unknown_summary", format!("no summary `{}`", req.summary_id)));
    }

    let mut book = write(&state.0.ratings);
    if let Some(existing) = book.existing(&req.summary_id, &req.rater_id) {
        return Err(ApiError::conflict(
            "duplicate_rating",
            format!("`{}` already rated `{}`", req.rater_id, req.summary_id),
        )
        .with("existing_id", existing.rating_id.clone()));
    }
    let record = RatingRecord {
        rating_id: book.next_id(),
        summary_id: req.summary_id,
        rater_id: req.rater_id,
        scores: req.scores,
        submitted_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    state.0.rating_log.append(&record)?;
    book.push(record.clone());
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampledSummary {
    pub summary_id: String,
    pub drug: String,
    pub text: String,
}

/// Seeded sample of a completed run's summaries for clinical rating.
async fn rating_sample(
    State(state): State<AppState>,
    Caller(who): Caller,
    Query(q): Query<RunQuery>,
) -> Result<impl IntoResponse, ApiError> {
    who.require(Role::Clinician)?;
    let (run_id, data) = state.run_data(q.run.as_deref())?;
    let fraction = state.0.config.service.sample_fraction;
    let seed = state.0.config.split.seed;
    let total = data.summaries.len();
    let k = ((fraction * total as f64).ceil() as usize).min(total);
    let mut picked = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), total, k).into_vec();
    picked.sort_unstable();
    let all: Vec<&DrugSummary> = data.summaries.values().collect();
    let summaries: Vec<SampledSummary> = picked
        .into_iter()
        .map(|i| SampledSummary { summary_id: summary_id(&run_id, &all[i].drug), drug: all[i].drug.clone(), text: all[i].text.clone() })
        .collect();
    Ok(Json(json!({ "run_id": run_id, "fraction": fraction, "seed": seed, "total": total, "summaries": summaries })))
}

// Statistics

async fn agreement(State(state): State<AppState>, Caller(_): Caller) -> Json<stats::AgreementStats> {
    Json(stats::agreement_stats(&read(&state.0.tasks)))
}

async fn clinical(State(state): State<AppState>, Caller(_): Caller) -> Json<stats::ClinicalStats> {
    Json(stats::clinical_stats(read(&state.0.ratings).records()))
}
