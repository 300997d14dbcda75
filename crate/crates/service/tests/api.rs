use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use adesum_core::corpus::{cohens_kappa, write_posts, Corpus, Severity};
use adesum_core::fixtures;
use adesum_core::pipeline::RunConfig;
use adesum_service::auth::{Role, TokenEntry, TokenTable};
use adesum_service::{router, AppState};

const ADMIN: &str = "t-admin";
const LEAD: &str = "t-lead";
const DOC: &str = "t-doc";
const DOC2: &str = "t-doc2";

fn annotator_token(id: &str) -> String {
    format!("t-{id}")
}

fn tokens() -> TokenTable {
    let mut entries = vec![
        TokenEntry { token: ADMIN.into(), rater_id: "admin".into(), roles: [Role::Admin].into() },
        TokenEntry { token: LEAD.into(), rater_id: "lead".into(), roles: [Role::Adjudicator].into() },
        TokenEntry { token: DOC.into(), rater_id: "doc".into(), roles: [Role::Clinician].into() },
        TokenEntry { token: DOC2.into(), rater_id: "doc2".into(), roles: [Role::Clinician].into() },
    ];
    for id in ["a", "b", "c", "d"] {
        entries.push(TokenEntry { token: annotator_token(id), rater_id: id.into(), roles: [Role::Annotator].into() });
    }
    TokenTable::new(entries).unwrap()
}

struct Env {
    dir: tempfile::TempDir,
    config: RunConfig,
    app: Router,
}

impl Env {
    fn new(posts: usize, raters_per_task: usize) -> Env {
        let dir = tempfile::tempdir().unwrap();
        write_posts(&dir.path().join("posts.jsonl"), &fixtures::forum_posts(posts, 5)).unwrap();
        let mut config = RunConfig::default();
        config.service.raters_per_task = raters_per_task;
        let app = router(AppState::open(dir.path(), config.clone(), tokens()).unwrap());
        Env { dir, config, app }
    }

    fn reopen(&mut self) {
        self.app = router(AppState::open(self.dir.path(), self.config.clone(), tokens()).unwrap());
    }

    async fn call(&self, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        call(&self.app, method, uri, token, body).await
    }

    async fn get(&self, uri: &str, token: &str) -> (StatusCode, Value) {
        self.call("GET", uri, Some(token), None).await
    }

    async fn post(&self, uri: &str, token: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(token), Some(body)).await
    }

    async fn run_to_end(&self, body: Value) -> Value {
        let (status, run) = self.post("/runs", ADMIN, body).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{run}");
        let id = run["run_id"].as_str().unwrap().to_string();
        for _ in 0..500 {
            let (_, r) = self.get(&format!("/runs/{id}"), ADMIN).await;
            if r["state"] != "running" {
                return r;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("run {id} did not finish");
    }
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn labels(post: &str, rater: &str, items: &[(&str, &str, Severity)]) -> Value {
    let mut drugs: Vec<Value> = Vec::new();
    for (drug, ade, severity) in items {
        drugs.push(json!({
            "name": drug,
            "ades": [{ "text": ade, "severity": severity.as_str(), "adversity": false, "evidence_terms": [] }]
        }));
    }
    json!({ "post_id": post, "annotator_id": rater, "drugs": drugs })
}

async fn claim(env: &Env, rater: &str) -> Value {
    let (status, view) = env.get(&format!("/annotation/next?rater={rater}"), &annotator_token(rater)).await;
    assert_eq!(status, StatusCode::OK, "{view}");
    view
}

async fn submit(env: &Env, rater: &str, task: &Value, items: &[(&str, &str, Severity)]) -> (StatusCode, Value) {
    let id = task["task_id"].as_str().unwrap();
    let body = json!({
        "expected_version": task["version"],
        "record": labels(task["post_id"].as_str().unwrap(), rater, items),
    });
    env.post(&format!("/annotation/{id}/labels"), &annotator_token(rater), body).await
}

async fn create_tasks(env: &Env, posts: std::ops::Range<usize>) {
    let ids: Vec<String> = posts.map(|i| format!("post-{i:04}")).collect();
    let (status, body) = env.post("/annotation/tasks", ADMIN, json!({ "post_ids": ids })).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
}

#[tokio::test]
async fn requests_need_a_known_bearer_token() {
    let env = Env::new(5, 3);
    assert_eq!(env.call("GET", "/health", None, None).await.0, StatusCode::OK);
    let (status, body) = env.call("GET", "/drugs", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["code"], "unauthorized");
    assert!(body["message"].is_string());
    assert_eq!(env.get("/drugs", "nope").await.0, StatusCode::UNAUTHORIZED);
    let (status, body) = env.post("/runs", &annotator_token("a"), json!({})).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::FORBIDDEN, Some("forbidden")));
}

#[tokio::test]
async fn runs_produce_browsable_grids_and_summaries() {
    let env = Env::new(60, 3);
    assert_eq!(env.get("/drugs", ADMIN).await.1["code"], "no_completed_run");

    let first = env.run_to_end(json!({})).await;
    assert_eq!(first["state"], "completed", "{first}");
    let second = env.run_to_end(json!({})).await;
    assert_eq!(first["manifest"], second["manifest"]);
    assert_ne!(first["run_id"], second["run_id"]);

    let (status, drugs) = env.get("/drugs", DOC).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(drugs["run_id"], second["run_id"]);
    let list = drugs["drugs"].as_array().unwrap();
    assert_eq!(list.len() as u64, first["manifest"]["counts"]["drugs"].as_u64().unwrap());
    let name = list[0]["name"].as_str().unwrap();

    let run = first["run_id"].as_str().unwrap();
    let (status, view) = env.get(&format!("/drugs/{}/summary?run={run}", name.to_uppercase()), DOC).await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["summary"]["drug"], name);
    assert_eq!(view["summary_id"], format!("{run}/{name}"));
    assert!(view["summary"].get("violations").is_none());
    assert!(view["groups"].is_object());

    let (status, body) = env.get("/drugs/not-a-drug/summary", DOC).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_drug")));
    assert_eq!(env.get("/runs/run-9999", ADMIN).await.1["code"], "unknown_run");
}

#[tokio::test]
async fn empty_corpus_run_completes_with_an_empty_grid() {
    let env = Env::new(3, 3);
    write_posts(&env.dir.path().join("empty.jsonl"), &Corpus::new("")).unwrap();
    let run = env.run_to_end(json!({ "posts": "empty.jsonl" })).await;
    assert_eq!(run["state"], "completed", "{run}");
    assert_eq!(env.get("/drugs", ADMIN).await.1["drugs"], json!([]));
}

#[tokio::test]
async fn run_on_the_test_split_covers_its_posts_only() {
    let env = Env::new(100, 3);
    let run = env.run_to_end(json!({ "subset": "test" })).await;
    assert_eq!(run["manifest"]["counts"]["posts"], 15);
}

#[tokio::test]
async fn bad_run_requests_are_rejected() {
    let env = Env::new(3, 3);
    let (status, body) = env.post("/runs", ADMIN, json!({ "posts": "missing.jsonl" })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("missing_input")));
    assert!(body["path"].as_str().unwrap().ends_with("missing.jsonl"));
    let (status, body) = env.post("/runs", ADMIN, json!({ "config": { "grouping": { "threshold": 5.0 } } })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_config")));
    let (status, body) = env.post("/runs", ADMIN, json!({ "bogus": 1 })).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_request")));
}

#[tokio::test]
async fn agreeing_raters_finalize_and_ties_go_to_adjudication() {
    let env = Env::new(10, 3);
    create_tasks(&env, 0..1).await;
    let item = |s| [("tamoxifen", "hot flashes", s)];

    for r in ["a", "b", "c"] {
        assert_eq!(claim(&env, r).await["task"]["task_id"], "task-00001");
    }
    let view = claim(&env, "a").await;
    assert_eq!(view["task"]["task_id"], "task-00001", "unfinished task is handed back first");
    assert!(view["post"]["text"].is_string());
    assert_eq!(env.get("/annotation/next?rater=d", &annotator_token("d")).await.0, StatusCode::NOT_FOUND);

    let mut task = view["task"].clone();
    for r in ["a", "b", "c"] {
        let (status, next) = submit(&env, r, &task, &item(Severity::High)).await;
        assert_eq!(status, StatusCode::OK, "{next}");
        task = next;
    }
    assert_eq!(task["status"], "final");
    assert_eq!(task["history"], json!(["open", "in_progress", "submitted", "final"]));
    assert_eq!(task["final"]["drugs"][0]["ades"][0]["severity"], "high");

    create_tasks(&env, 1..2).await;
    let mut task = Value::Null;
    for r in ["a", "b", "c"] {
        task = claim(&env, r).await["task"].clone();
    }
    assert_eq!(task["task_id"], "task-00002");
    for (r, s) in [("a", Severity::High), ("b", Severity::Mild), ("c", Severity::NotApplicable)] {
        task = submit(&env, r, &task, &item(s)).await.1;
    }
    assert_eq!(task["status"], "adjudication");
    assert_eq!(task["unresolved"][0]["field"], "severity");

    let (status, _) = env.get("/annotation/next?rater=d", &annotator_token("d")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, queued) = env.get("/annotation/next?queue=adjudication", LEAD).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(queued["task"]["task_id"], "task-00002");
    let body = json!({
        "expected_version": queued["task"]["version"],
        "record": labels("post-0001", "lead", &item(Severity::Moderate)),
    });
    let (status, done) = env.post("/annotation/task-00002/labels", LEAD, body).await;
    assert_eq!(status, StatusCode::OK, "{done}");
    assert_eq!(done["status"], "final");
    assert_eq!(done["adjudicator"], "lead");
    assert_eq!(env.get("/annotation/next?queue=adjudication", LEAD).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn open_tasks_go_to_the_least_annotated_first() {
    let env = Env::new(10, 2);
    create_tasks(&env, 0..3).await;
    let mut got = Vec::new();
    for r in ["a", "b", "c", "d"] {
        got.push(claim(&env, r).await["task"]["task_id"].as_str().unwrap().to_string());
    }
    assert_eq!(got, ["task-00001", "task-00002", "task-00003", "task-00001"]);
    let (status, body) = env.post("/annotation/tasks", ADMIN, json!({ "post_ids": ["post-0000"] })).await;
    assert_eq!((status, body["skipped"].clone()), (StatusCode::CREATED, json!(["post-0000"])));
    let (status, body) = env.post("/annotation/tasks", ADMIN, json!({ "post_ids": ["no-such-post"] })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
}

#[tokio::test]
async fn concurrent_submits_with_one_version_let_exactly_one_through() {
    let env = Env::new(10, 3);
    create_tasks(&env, 0..1).await;
    let mut task = Value::Null;
    for r in ["a", "b", "c"] {
        task = claim(&env, r).await["task"].clone();
    }
    let version = task["version"].as_u64().unwrap();
    let record_of = |r: &str| labels("post-0000", r, &[("letrozole", "joint pain", Severity::Mild)]);
    let handles: Vec<_> = ["a", "b", "c", "a", "b", "c", "a", "b"]
        .into_iter()
        .map(|r| {
            let app = env.app.clone();
            let body = json!({ "expected_version": version, "record": record_of(r) });
            let token = annotator_token(r);
            tokio::spawn(async move { call(&app, "POST", "/annotation/task-00001/labels", Some(&token), Some(body)).await })
        })
        .collect();
    let mut results = Vec::new();
    for h in handles {
        results.push(h.await.unwrap());
    }
    let ok: Vec<&Value> = results.iter().filter(|(s, _)| *s == StatusCode::OK).map(|(_, b)| b).collect();
    assert_eq!(ok.len(), 1, "{results:?}");
    assert_eq!(ok[0]["version"].as_u64().unwrap(), version + 1);
    for (status, body) in results.iter().filter(|(s, _)| *s != StatusCode::OK) {
        assert_eq!(*status, StatusCode::CONFLICT);
        assert_eq!(body["code"], "version_conflict");
        assert_eq!(body["current_version"].as_u64().unwrap(), version + 1);
    }
    let (_, stored) = env.get("/annotation/task-00001", ADMIN).await;
    assert_eq!(stored["task"]["version"].as_u64().unwrap(), version + 1);
    assert_eq!(stored["task"]["submissions"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn ratings_are_unique_per_rater_and_summary() {
    let env = Env::new(60, 3);
    let run = env.run_to_end(json!({})).await;
    let (status, sample) = env.get("/ratings/sample", DOC).await;
    assert_eq!(status, StatusCode::OK, "{sample}");
    let total = sample["total"].as_u64().unwrap() as usize;
    let picked = sample["summaries"].as_array().unwrap();
    assert_eq!(picked.len(), (total as f64 * 0.2).ceil() as usize);
    assert_eq!(env.get("/ratings/sample", DOC).await.1, sample);
    assert_eq!(env.get("/ratings/sample", ADMIN).await.1, sample);

    let summary_id = picked[0]["summary_id"].as_str().unwrap();
    assert!(summary_id.starts_with(run["run_id"].as_str().unwrap()));
    let scores = json!({ "relevance": 4, "consistency": 4, "fluency": 5, "coherence": 4, "hallucination": 3 });
    let rating = |rater: &str, scores: &Value| json!({ "summary_id": summary_id, "rater_id": rater, "scores": scores });

    assert_eq!(env.get("/stats/clinical", DOC).await.1["status"], "insufficient_data");
    let (status, first) = env.post("/ratings", DOC, rating("doc", &scores)).await;
    assert_eq!(status, StatusCode::CREATED, "{first}");
    assert!(first["submitted_at"].as_str().unwrap().ends_with('Z'));
    let (status, dup) = env.post("/ratings", DOC, rating("doc", &scores)).await;
    assert_eq!((status, dup["code"].as_str()), (StatusCode::CONFLICT, Some("duplicate_rating")));
    assert_eq!(dup["existing_id"], first["rating_id"]);

    let low = json!({ "relevance": 2, "consistency": 2, "fluency": 3, "coherence": 2, "hallucination": 1 });
    assert_eq!(env.post("/ratings", DOC2, rating("doc2", &low)).await.0, StatusCode::CREATED);
    let (_, stats) = env.get("/stats/clinical", ADMIN).await;
    assert_eq!(stats["status"], "ok");
    assert_eq!(stats["records"], 2);
    assert_eq!(stats["count"], 10);
    assert_eq!(stats["raters"], 2);
    assert!((stats["overall"].as_f64().unwrap() - 30.0 / 10.0).abs() < 1e-12);
    assert_eq!(stats["per_axis"]["fluency"]["mean"], 4.0);

    for bad in [
        json!({ "relevance": 6, "consistency": 4, "fluency": 5, "coherence": 4, "hallucination": 3 }),
        json!({ "relevance": 0, "consistency": 4, "fluency": 5, "coherence": 4, "hallucination": 3 }),
        json!({ "relevance": 3.5, "consistency": 4, "fluency": 5, "coherence": 4, "hallucination": 3 }),
        json!({ "relevance": 3, "consistency": 4, "fluency": 5, "coherence": 4 }),
    ] {
        let (status, body) = env.post("/ratings", DOC, json!({ "summary_id": picked[1]["summary_id"], "rater_id": "doc", "scores": bad })).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    }
    assert_eq!(env.post("/ratings", DOC, rating("doc2", &scores)).await.0, StatusCode::FORBIDDEN);
    let unknown = json!({ "summary_id": format!("{}/nope", run["run_id"].as_str().unwrap()), "rater_id": "doc", "scores": scores });
    assert_eq!(env.post("/ratings", DOC, unknown).await.1["code"], "unknown_summary");
}

#[tokio::test]
async fn agreement_matches_the_library_kappa() {
    let env = Env::new(40, 2);
    assert_eq!(env.get("/stats/agreement", ADMIN).await.1["status"], "insufficient_data");
    let sev = |i: usize| Severity::DESCENDING[i % 4];
    let a_labels: Vec<Severity> = (0..20).map(sev).collect();
    let b_labels: Vec<Severity> = (0..20).map(|i| if i % 5 == 0 { sev(i + 1) } else { sev(i) }).collect();
    for i in 0..20 {
        create_tasks(&env, i..i + 1).await;
        let ta = claim(&env, "a").await["task"].clone();
        let tb = claim(&env, "b").await["task"].clone();
        assert_eq!(ta["task_id"], tb["task_id"]);
        let (status, ta) = submit(&env, "a", &tb, &[("tamoxifen", "nausea", a_labels[i])]).await;
        assert_eq!(status, StatusCode::OK, "{ta}");
        let (status, body) = submit(&env, "b", &ta, &[("tamoxifen", "nausea", b_labels[i])]).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, stats) = env.get("/stats/agreement", DOC).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["status"], "ok", "{stats}");
    let expected = cohens_kappa(&a_labels, &b_labels).unwrap();
    assert!((stats["mean_kappa"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert_eq!(stats["raters"], json!(["a", "b"]));
    assert_eq!(stats["matrix"][0][0], 1.0);
    assert_eq!(stats["pairs"][0]["items"], 20);
}

#[tokio::test]
async fn identical_labels_give_kappa_one_and_a_single_rater_is_insufficient() {
    let env = Env::new(40, 2);
    for i in 0..20 {
        create_tasks(&env, i..i + 1).await;
        let s = Severity::DESCENDING[i % 4];
        claim(&env, "a").await;
        let tb = claim(&env, "b").await["task"].clone();
        let ta = submit(&env, "a", &tb, &[("letrozole", "fatigue", s)]).await.1;
        submit(&env, "b", &ta, &[("letrozole", "fatigue", s)]).await;
    }
    let stats = env.get("/stats/agreement", ADMIN).await.1;
    assert_eq!(stats["mean_kappa"], 1.0);

    let solo = Env::new(5, 2);
    create_tasks(&solo, 0..1).await;
    let t = claim(&solo, "a").await["task"].clone();
    submit(&solo, "a", &t, &[("letrozole", "fatigue", Severity::Mild)]).await;
    let stats = solo.get("/stats/agreement", ADMIN).await.1;
    assert_eq!(stats["status"], "insufficient_data");
    assert!(stats.get("mean_kappa").is_none());
}

#[tokio::test]
async fn state_survives_a_restart() {
    let mut env = Env::new(30, 2);
    let run = env.run_to_end(json!({})).await;
    create_tasks(&env, 0..3).await;
    let t = claim(&env, "a").await["task"].clone();
    let t = submit(&env, "a", &t, &[("letrozole", "fatigue", Severity::Mild)]).await.1;
    let (_, sample) = env.get("/ratings/sample", DOC).await;
    let summary_id = sample["summaries"][0]["summary_id"].clone();
    let scores = json!({ "relevance": 5, "consistency": 5, "fluency": 5, "coherence": 5, "hallucination": 5 });
    env.post("/ratings", DOC, json!({ "summary_id": summary_id, "rater_id": "doc", "scores": scores })).await;

    let runs_log = env.dir.path().join("service").join(adesum_service::RUNS_LOG);
    let mut interrupted = run.clone();
    interrupted["run_id"] = json!("run-0002");
    interrupted["state"] = json!("running");
    interrupted.as_object_mut().unwrap().remove("manifest");
    append_line(&runs_log, &interrupted);

    env.reopen();
    let (_, stored) = env.get("/annotation/task-00001", ADMIN).await;
    assert_eq!(stored["task"], t);
    assert_eq!(env.get(&format!("/runs/{}", run["run_id"].as_str().unwrap()), ADMIN).await.1, run);
    assert_eq!(env.get("/runs/run-0002", ADMIN).await.1["state"], "failed");
    assert_eq!(env.get("/drugs", ADMIN).await.1["run_id"], run["run_id"]);
    let (status, dup) = env.post("/ratings", DOC, json!({ "summary_id": summary_id, "rater_id": "doc", "scores": scores })).await;
    assert_eq!((status, dup["existing_id"].as_str()), (StatusCode::CONFLICT, Some("rating-000001")));
    assert_eq!(env.get("/stats/clinical", ADMIN).await.1["overall"], 5.0);
}

fn append_line(path: &Path, value: &Value) {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(path).unwrap();
    writeln!(f, "{value}").unwrap();
}
