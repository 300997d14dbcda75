use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::alignment::{
    DegraderProvider, HttpLogprobScorer, HttpRejectedProvider, LogprobScorer, Mutation, RejectedProvider,
};
use crate::extraction::{ExtractionBackend, HttpCompletionClient, Lexicon, LexiconBackend, PromptTemplate, PromptedBackend};
use crate::grouping::{EmbeddingProvider, HashingProvider, HttpEmbeddingProvider, Linkage, DEFAULT_THRESHOLD};
use crate::http::EndpointConfig;
use crate::metrics::EvalOptions;
use crate::summarization::{HttpSummaryBackend, ModelSummarizer, Summarizer, TemplateSummarizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Ingested corpus, JSONL.
    pub posts: PathBuf,
    /// Lexicon JSON for the lexicon extractor; the built-in oncology
    /// lexicon when absent.
    pub lexicon: Option<PathBuf>,
    /// Prompt template for the prompted extractor; the built-in template
    /// when absent.
    pub prompt_template: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { posts: PathBuf::from("posts.jsonl"), lexicon: None, prompt_template: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    #[default]
    Lexicon,
    Prompted,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub backend: ExtractorKind,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hashing,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingConfig {
    pub provider: EmbedderKind,
    pub dim: usize,
    pub endpoint: Option<EndpointConfig>,
    pub batch_size: usize,
    pub linkage: Linkage,
    pub threshold: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            provider: EmbedderKind::Hashing,
            dim: HashingProvider::DEFAULT_DIM,
            endpoint: None,
            batch_size: 128,
            linkage: Linkage::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarizerKind {
    #[default]
    Template,
    Model,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizationConfig {
    pub backend: SummarizerKind,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectedKind {
    #[default]
    Degrader,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub beta: f64,
    pub rejected: RejectedKind,
    pub mutations: Vec<Mutation>,
    pub reject_endpoint: Option<EndpointConfig>,
    pub policy_endpoint: Option<EndpointConfig>,
    pub reference_endpoint: Option<EndpointConfig>,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            beta: 0.1,
            rejected: RejectedKind::Degrader,
            mutations: Mutation::ALL.to_vec(),
            reject_endpoint: None,
            policy_endpoint: None,
            reference_endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: [0.80, 0.05, 0.15], seed: 42 }
    }
}

/// Settings for `serve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Event logs and run artifacts.
    pub data_dir: PathBuf,
    /// Submissions collected before a task is aggregated.
    pub raters_per_task: usize,
    /// Share of summaries drawn for clinical rating.
    pub sample_fraction: f64,
    /// JSON list of `{token, rater_id, roles}` entries.
    pub tokens_file: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("service"),
            raters_per_task: 3,
            sample_fraction: 0.2,
            tokens_file: PathBuf::from("tokens.json"),
        }
    }
}

/// Every setting a pipeline run depends on. Relative paths resolve against
/// the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub extraction: ExtractionConfig,
    pub grouping: GroupingConfig,
    pub summarization: SummarizationConfig,
    pub alignment: AlignmentConfig,
    pub split: SplitConfig,
    pub eval: EvalOptions,
    pub service: ServiceConfig,
}

fn check_endpoint(name: &str, endpoint: &Option<EndpointConfig>, required: bool) -> Result<()> {
    match endpoint {
        None if required => Err(PipelineError::Config(format!("{name} requires an endpoint"))),
        Some(e) if !(e.url.starts_with("http://") || e.url.starts_with("https://")) => {
            Err(PipelineError::Config(format!("{name} endpoint `{}` is not an http(s) URL", e.url)))
        }
        _ => Ok(()),
    }
}

/// `(variable, endpoint slot)` pairs consulted by [`RunConfig::apply_env`].
const ENV_ENDPOINTS: [&str; 6] = ["EXTRACT", "EMBED", "SUMMARIZE", "REJECT", "SCORE", "REFERENCE_SCORE"];

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Check every setting; nothing runs on a config that fails here.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PipelineError::Config(m));
        let g = &self.grouping;
        if !(0.0..=2.0).contains(&g.threshold) {
            return fail(format!("grouping threshold {} outside [0, 2]", g.threshold));
        }
        if g.provider == EmbedderKind::Hashing && g.dim < 8 {
            return fail(format!("hashing dimension {} below 8", g.dim));
        }
        if g.batch_size == 0 {
            return fail("embedding batch size must be positive".into());
        }
        let a = &self.alignment;
        if !(a.beta.is_finite() && a.beta > 0.0) {
            return fail(format!("beta must be positive, got {}", a.beta));
        }
        if a.mutations.is_empty() {
            return fail("select at least one mutation".into());
        }
        let r = self.split.ratios;
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return fail(format!("split ratios {r:?} must be non-negative and sum to 1"));
        }
        if self.eval.metrics.is_empty() {
            return fail("no metrics selected".into());
        }
        if self.eval.bleu_max_n == 0 {
            return fail("BLEU order must be at least 1".into());
        }
        let sv = &self.service;
        if sv.raters_per_task < 2 {
            return fail(format!("raters_per_task must be at least 2, got {}", sv.raters_per_task));
        }
        if !(sv.sample_fraction > 0.0 && sv.sample_fraction <= 1.0) {
            return fail(format!("sample_fraction {} outside (0, 1]", sv.sample_fraction));
        }
        check_endpoint("prompted extraction", &self.extraction.endpoint, self.extraction.backend == ExtractorKind::Prompted)?;
        check_endpoint("http embedding", &g.endpoint, g.provider == EmbedderKind::Http)?;
        check_endpoint("model summarization", &self.summarization.endpoint, self.summarization.backend == SummarizerKind::Model)?;
        check_endpoint("http rejected provider", &a.reject_endpoint, a.rejected == RejectedKind::Http)?;
        check_endpoint("policy scoring", &a.policy_endpoint, false)?;
        check_endpoint("reference scoring", &a.reference_endpoint, false)?;
        Ok(())
    }

    fn endpoint_slot(&mut self, name: &str) -> &mut Option<EndpointConfig> {
        match name {
            "EXTRACT" => &mut self.extraction.endpoint,
            "EMBED" => &mut self.grouping.endpoint,
            "SUMMARIZE" => &mut self.summarization.endpoint,
            "REJECT" => &mut self.alignment.reject_endpoint,
            "SCORE" => &mut self.alignment.policy_endpoint,
            _ => &mut self.alignment.reference_endpoint,
        }
    }

    /// Override endpoint URLs and tokens from `ADESUM_<SLOT>_URL` and
    /// `ADESUM_<SLOT>_TOKEN`, looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        for name in ENV_ENDPOINTS {
            let url = var(&format!("ADESUM_{name}_URL")).filter(|v| !v.trim().is_empty());
            let token = var(&format!("ADESUM_{name}_TOKEN")).filter(|v| !v.trim().is_empty());
            let slot = self.endpoint_slot(name);
            if let Some(url) = url {
                match slot {
                    Some(e) => e.url = url,
                    None => *slot = Some(EndpointConfig::new(url)),
                }
            }
            if let (Some(token), Some(e)) = (token, slot.as_mut()) {
                e.token = Some(token);
            }
        }
    }

    /// Copy with tokens removed, for storing next to run artifacts.
    pub fn redacted(&self) -> RunConfig {
        let mut c = self.clone();
        for name in ENV_ENDPOINTS {
            if let Some(e) = c.endpoint_slot(name) {
                e.token = e.token.as_ref().map(|_| "<redacted>".to_string());
            }
        }
        c
    }

    pub fn resolve(workdir: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            workdir.join(p)
        }
    }

    pub fn posts_path(&self, workdir: &Path) -> PathBuf {
        Self::resolve(workdir, &self.paths.posts)
    }

    pub fn extraction_backend(&self, workdir: &Path) -> Result<Box<dyn ExtractionBackend>> {
        match self.extraction.backend {
            ExtractorKind::Lexicon => {
                let lexicon = match &self.paths.lexicon {
                    Some(p) => Lexicon::from_json_file(&Self::resolve(workdir, p))?,
                    None => Lexicon::default_oncology(),
                };
                Ok(Box::new(LexiconBackend::new(lexicon)))
            }
            ExtractorKind::Prompted => {
                let template = match &self.paths.prompt_template {
                    Some(p) => PromptTemplate::new(fs::read_to_string(Self::resolve(workdir, p))?)?,
                    None => PromptTemplate::default(),
                };
                let endpoint = self.required(&self.extraction.endpoint, "prompted extraction")?;
                let client = HttpCompletionClient::new(endpoint.clone());
                Ok(Box::new(PromptedBackend::new(format!("prompted:{}", endpoint.url), template, Box::new(client))))
            }
        }
    }

    pub fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let g = &self.grouping;
        match g.provider {
            EmbedderKind::Hashing => Ok(Box::new(HashingProvider::new(g.dim)?)),
            EmbedderKind::Http => {
                let endpoint = self.required(&g.endpoint, "http embedding")?;
                Ok(Box::new(
                    HttpEmbeddingProvider::new(format!("http:{}", endpoint.url), endpoint.clone())
                        .with_batch_size(g.batch_size),
                ))
            }
        }
    }

    pub fn summarizer(&self) -> Result<Box<dyn Summarizer>> {
        match self.summarization.backend {
            SummarizerKind::Template => Ok(Box::new(TemplateSummarizer)),
            SummarizerKind::Model => Ok(Box::new(ModelSummarizer::new(Box::new(self.summary_backend()?)))),
        }
    }

    /// The model summarizer's HTTP backend, also used for summaries
    /// straight from posts.
    pub fn summary_backend(&self) -> Result<HttpSummaryBackend> {
        let endpoint = self.required(&self.summarization.endpoint, "model summarization")?;
        Ok(HttpSummaryBackend::new(format!("model:{}", endpoint.url), endpoint.clone()))
    }

    pub fn rejected_provider(&self) -> Result<Box<dyn RejectedProvider>> {
        let a = &self.alignment;
        match a.rejected {
            RejectedKind::Degrader => Ok(Box::new(DegraderProvider::new(a.mutations.clone())?)),
            RejectedKind::Http => {
                Ok(Box::new(HttpRejectedProvider::new(self.required(&a.reject_endpoint, "http rejected provider")?.clone())))
            }
        }
    }

    /// Policy and reference scorers for sequence log-probabilities.
    pub fn scorers(&self) -> Result<(Box<dyn LogprobScorer>, Box<dyn LogprobScorer>)> {
        let a = &self.alignment;
        let policy = self.required(&a.policy_endpoint, "policy scoring")?;
        let reference = self.required(&a.reference_endpoint, "reference scoring")?;
        Ok((Box::new(HttpLogprobScorer::new(policy.clone())), Box::new(HttpLogprobScorer::new(reference.clone()))))
    }

    fn required<'a>(&self, endpoint: &'a Option<EndpointConfig>, name: &str) -> Result<&'a EndpointConfig> {
        endpoint.as_ref().ok_or_else(|| PipelineError::Config(format!("{name} requires an endpoint")))
    }
}
