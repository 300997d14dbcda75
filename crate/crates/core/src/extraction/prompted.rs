use std::collections::HashMap;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::schema::{parse_model_output, schema_description, SCHEMA_V1};
use super::{ExtractionBackend, ExtractionError, ExtractionRecord, Result};
use crate::corpus::Post;
use crate::http::{field, EndpointConfig, JsonClient, TransportError};

const POST_SLOT: &str = "{post}";
const SCHEMA_SLOT: &str = "{schema}";

const DEFAULT_TEMPLATE: &str = "You are annotating a cancer patient forum post for adverse drug events.\n\
List every (drug, adverse event, severity) triplet the author reports. Severity is \
high for hospitalization, life-threatening events, disability or congenital anomaly; \
moderate, mild or na otherwise. Set adversity when the author describes the event \
as bad, worse, unbearable, irrecoverable or permanent.\n\n\
{schema}\n\nPost:\n{post}\n";

/// Extraction prompt with exactly one `{post}` and one `{schema}` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
    pub schema_version: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for slot in [POST_SLOT, SCHEMA_SLOT] {
            let n = text.matches(slot).count();
            if n != 1 {
                return Err(ExtractionError::Template(format!(
                    "expected exactly one {slot} placeholder, found {n}"
                )));
            }
        }
        Ok(PromptTemplate { text, schema_version: SCHEMA_V1.to_string() })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Single-pass substitution: braces inside `post` are never re-expanded.
    pub fn render(&self, post: &str, schema: &str) -> String {
        let p = self.text.find(POST_SLOT).expect("validated");
        let s = self.text.find(SCHEMA_SLOT).expect("validated");
        let (first, first_len, first_val, second, second_len, second_val) = if p < s {
            (p, POST_SLOT.len(), post, s, SCHEMA_SLOT.len(), schema)
        } else {
            (s, SCHEMA_SLOT.len(), schema, p, POST_SLOT.len(), post)
        };
        let mut out = String::with_capacity(self.text.len() + post.len() + schema.len());
        out.push_str(&self.text[..first]);
        out.push_str(first_val);
        out.push_str(&self.text[first + first_len..second]);
        out.push_str(second_val);
        out.push_str(&self.text[second + second_len..]);
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_TEMPLATE).expect("built-in template is valid")
    }
}

pub fn render_prompt(post: &Post, template: &PromptTemplate) -> Result<String> {
    post.validate().map_err(|e| ExtractionError::InvalidPost(e.to_string()))?;
    Ok(template.render(&post.text, &schema_description()))
}

/// Text completion from a served model.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> std::result::Result<String, TransportError>;
}

/// `POST {"prompt": ..}` → `{"text": ..}`.
#[derive(Debug, Clone)]
pub struct HttpCompletionClient {
    client: JsonClient,
}

impl HttpCompletionClient {
    pub fn new(config: EndpointConfig) -> Self {
        HttpCompletionClient { client: JsonClient::new(config) }
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, prompt: &str) -> std::result::Result<String, TransportError> {
        let response = self.client.post(&json!({ "prompt": prompt }))?;
        field(&response, "text")?.as_str().map(String::from).ok_or_else(|| TransportError {
            message: "`text` is not a string".into(),
            retryable: false,
        })
    }
}

/// Canned completions keyed by prompt digest. Used for tests and offline
/// replays of recorded model runs.
#[derive(Debug, Clone, Default)]
pub struct ReplayCompletionClient {
    responses: HashMap<String, String>,
    fallback: Option<String>,
}

impl ReplayCompletionClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Answer every unknown prompt with `text`.
    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    pub fn insert(&mut self, prompt: &str, text: impl Into<String>) {
        self.responses.insert(digest(prompt), text.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

fn digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

impl CompletionClient for ReplayCompletionClient {
    fn complete(&self, prompt: &str) -> std::result::Result<String, TransportError> {
        self.responses
            .get(&digest(prompt))
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| TransportError {
                message: "no recorded completion for prompt".into(),
                retryable: false,
            })
    }
}

/// Prompt a served model and decode its JSON answer.
pub struct PromptedBackend {
    id: String,
    template: PromptTemplate,
    client: Box<dyn CompletionClient>,
}

impl PromptedBackend {
    pub fn new(id: impl Into<String>, template: PromptTemplate, client: Box<dyn CompletionClient>) -> Self {
        PromptedBackend { id: id.into(), template, client }
    }
}

impl ExtractionBackend for PromptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn extract(&self, post: &Post) -> Result<ExtractionRecord> {
        let raw = self.client.complete(&render_prompt(post, &self.template)?)?;
        let parsed = parse_model_output(&raw)?;
        Ok(ExtractionRecord {
            post_id: post.id.clone(),
            items: parsed.items,
            backend_id: self.id.clone(),
            raw_model_output: Some(raw),
            warnings: parsed.warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Forum, Severity};

    fn post(text: &str) -> Post {
        Post {
            id: "p9".into(),
            forum: Forum::Csn,
            thread_title: "t".into(),
            cancer_type: None,
            timestamp: "2020-01-01".into(),
            text: text.into(),
        }
    }

    #[test]
    fn template_slots_validated() {
        assert!(PromptTemplate::new("{post}").is_err());
        assert!(PromptTemplate::new("{post}{schema}{post}").is_err());
        assert!(PromptTemplate::new("{schema} then {post}").is_ok());
    }

    #[test]
    fn render_is_single_pass() {
        let t = PromptTemplate::new("S={schema} P={post}.").unwrap();
        assert_eq!(t.render("{schema} and {post}", "X"), "S=X P={schema} and {post}.");
        let t = PromptTemplate::new("P={post} S={schema}").unwrap();
        assert_eq!(t.render("a", "{post}"), "P=a S={post}");
    }

    #[test]
    fn empty_post_rejected() {
        assert!(render_prompt(&post("  "), &PromptTemplate::default()).is_err());
        let t = PromptTemplate::new("{schema}\n{post}").unwrap();
        let out = render_prompt(&post("hello"), &t).unwrap();
        assert_eq!(out, format!("{}\nhello", schema_description()));
    }

    #[test]
    fn replay_backend_decodes() {
        let p = post("Tamoxifen hot flashes");
        let template = PromptTemplate::default();
        let mut client = ReplayCompletionClient::new();
        client.insert(
            &render_prompt(&p, &template).unwrap(),
            r#"[{"drug":"tamoxifen","ade":"hot flashes","severity":"mild","adversity":false}]"#,
        );
        let backend = PromptedBackend::new("replay", template, Box::new(client));
        let r = backend.extract(&p).unwrap();
        assert_eq!(backend.extract(&p).unwrap(), r);
        assert_eq!(r.items[0].severity, Severity::Mild);
        assert_eq!(r.backend_id, "replay");
        assert!(r.raw_model_output.is_some());
    }

    #[test]
    fn replay_miss_and_garbage() {
        let backend = PromptedBackend::new("r", PromptTemplate::default(), Box::new(ReplayCompletionClient::new()));
        let err = backend.extract(&post("x")).unwrap_err();
        assert!(matches!(err, ExtractionError::Transport(_)));
        assert!(!err.is_retryable());

        let client = ReplayCompletionClient::new().with_fallback("I cannot help with that.");
        let backend = PromptedBackend::new("r", PromptTemplate::default(), Box::new(client));
        match backend.extract(&post("x")) {
            Err(ExtractionError::Unparseable { raw_model_output, .. }) => {
                assert_eq!(raw_model_output, "I cannot help with that.")
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
