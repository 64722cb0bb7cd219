//! TOML run configuration.
//!
//! ```toml
//! run_dir = "run"
//! seed = 42
//!
//! [chat]
//! mock_script = "script.json"   # scripted replies instead of HTTP
//! base_url = "http://localhost:8000/v1"
//! model = "mistral"
//! api_key_env = "OPENAI_API_KEY"
//! audit = true
//!
//! [embedding]
//! backend = "mock"              # or "http"
//! dimension = 384
//!
//! [pipeline]
//! target_words = 800
//! eta = 0.95
//! prune_threshold = 10          # 0 keeps every component
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use kgraph_core::iso::{IsoConstraints, MatchMode, SearchScope};
use kgraph_core::paths::{DEFAULT_EXPANSION_HOPS, DEFAULT_PATH_K, DEFAULT_SIMILARITY_FLOOR, MAX_EXPANSION_HOPS};
use kgraph_core::embedding::{DEFAULT_MAX_INPUT_TOKENS, DEFAULT_MERGE_ETA};
use kgraph_core::{EmbedOptions, EmbeddingProvider, HashEmbedder, PathQuery};
use kgraph_llm::duet::DEFAULT_TURNS;
use kgraph_llm::pipeline::{DEFAULT_PRUNE_THRESHOLD, DEFAULT_TARGET_WORDS, MIN_TARGET_WORDS};
use kgraph_llm::prompts::DEFAULT_DUET_QUESTION;
use kgraph_llm::{
    AugmentOptions, ChatClient, CorpusOptions, EmbeddingConfig, HttpChatClient, HttpEmbeddingProvider,
    ProviderConfig, ScriptedChatClient,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EMBEDDING_DIMENSION: usize = 384;
pub const MAX_PATH_K: usize = 10;
pub const MAX_DUET_TURNS: usize = 100;
pub const AUDIT_LOG: &str = "chat_audit.jsonl";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Range { field: &'static str, message: String },
    #[error("chat provider: {0}")]
    Provider(String),
}

fn range(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range { field, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatSettings {
    /// JSON array of replies; selects the scripted client when set.
    pub mock_script: Option<PathBuf>,
    /// Append every request and response to the run directory.
    pub audit: bool,
    #[serde(flatten)]
    pub provider: ProviderConfig,
}

impl Default for ChatSettings {
    fn default() -> Self {
        Self { mock_script: None, audit: true, provider: ProviderConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackend {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    pub backend: EmbeddingBackend,
    pub dimension: usize,
    pub max_input_tokens: usize,
    pub batch_size: usize,
    pub parallelism: usize,
    #[serde(flatten)]
    pub provider: ProviderConfig,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        let embed = EmbedOptions::default();
        Self {
            backend: EmbeddingBackend::Mock,
            dimension: DEFAULT_EMBEDDING_DIMENSION,
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
            batch_size: embed.batch_size,
            parallelism: embed.parallelism,
            provider: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub target_words: usize,
    pub parallelism: usize,
    pub retry: bool,
    pub eta: f64,
    pub prune_threshold: usize,
    pub giant_only: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            target_words: DEFAULT_TARGET_WORDS,
            parallelism: 1,
            retry: true,
            eta: DEFAULT_MERGE_ETA,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            giant_only: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub k: usize,
    pub expansion_hops: usize,
    pub similarity_floor: f64,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self { k: DEFAULT_PATH_K, expansion_hops: DEFAULT_EXPANSION_HOPS, similarity_floor: DEFAULT_SIMILARITY_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsoSettings {
    pub min_nodes: usize,
    pub min_avg_degree: f64,
    pub max_mappings: usize,
    pub pair_timeout_secs: f64,
    /// Search whole graphs rather than their giant components.
    pub full_scope: bool,
    pub exact_labels: bool,
}

impl Default for IsoSettings {
    fn default() -> Self {
        let c = IsoConstraints::default();
        Self {
            min_nodes: c.min_nodes,
            min_avg_degree: c.min_avg_degree,
            max_mappings: c.max_mappings,
            pair_timeout_secs: c.pair_timeout.as_secs_f64(),
            full_scope: false,
            exact_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuetSettings {
    pub turns: usize,
    pub question: String,
    pub summarize: bool,
}

impl Default for DuetSettings {
    fn default() -> Self {
        Self { turns: DEFAULT_TURNS, question: DEFAULT_DUET_QUESTION.into(), summarize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    pub seed: u64,
    pub chat: ChatSettings,
    pub embedding: EmbeddingSettings,
    pub pipeline: PipelineSettings,
    pub paths: PathSettings,
    pub iso: IsoSettings,
    pub duet: DuetSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("run"),
            seed: 42,
            chat: ChatSettings::default(),
            embedding: EmbeddingSettings::default(),
            pipeline: PipelineSettings::default(),
            paths: PathSettings::default(),
            iso: IsoSettings::default(),
            duet: DuetSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        if p.target_words < MIN_TARGET_WORDS {
            return Err(range("pipeline.target_words", format!("must be at least {MIN_TARGET_WORDS}")));
        }
        if p.parallelism == 0 {
            return Err(range("pipeline.parallelism", "must be at least 1"));
        }
        if !(p.eta > 0.0 && p.eta <= 1.0) {
            return Err(range("pipeline.eta", "must lie in (0, 1]"));
        }
        let q = &self.paths;
        if q.k == 0 || q.k > MAX_PATH_K {
            return Err(range("paths.k", format!("must lie in 1..={MAX_PATH_K}")));
        }
        if q.expansion_hops > MAX_EXPANSION_HOPS {
            return Err(range("paths.expansion_hops", format!("must be at most {MAX_EXPANSION_HOPS}")));
        }
        if !(-1.0..=1.0).contains(&q.similarity_floor) {
            return Err(range("paths.similarity_floor", "must lie in [-1, 1]"));
        }
        let i = &self.iso;
        if !(i.pair_timeout_secs.is_finite() && i.pair_timeout_secs > 0.0) {
            return Err(range("iso.pair_timeout_secs", "must be positive"));
        }
        if i.max_mappings == 0 {
            return Err(range("iso.max_mappings", "must be at least 1"));
        }
        self.iso_constraints().validate().map_err(|e| range("iso", e.to_string()))?;
        if self.duet.turns > MAX_DUET_TURNS {
            return Err(range("duet.turns", format!("must be at most {MAX_DUET_TURNS}")));
        }
        if self.duet.question.trim().is_empty() {
            return Err(range("duet.question", "must not be empty"));
        }
        let e = &self.embedding;
        if e.dimension == 0 || e.batch_size == 0 || e.parallelism == 0 || e.max_input_tokens == 0 {
            return Err(range("embedding", "dimension, batch_size, parallelism and max_input_tokens must be positive"));
        }
        for (field, provider) in [("chat", &self.chat.provider), ("embedding", &e.provider)] {
            if provider.max_concurrent == 0 {
                return Err(range(field, "max_concurrent must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn corpus_options(&self) -> CorpusOptions {
        CorpusOptions {
            target_words: self.pipeline.target_words,
            parallelism: self.pipeline.parallelism,
            retry: self.pipeline.retry,
        }
    }

    pub fn embed_options(&self) -> EmbedOptions {
        EmbedOptions { batch_size: self.embedding.batch_size, parallelism: self.embedding.parallelism }
    }

    pub fn augment_options(&self) -> AugmentOptions {
        AugmentOptions {
            eta: self.pipeline.eta,
            prune_threshold: (self.pipeline.prune_threshold > 0).then_some(self.pipeline.prune_threshold),
            giant_only: self.pipeline.giant_only,
            embed: self.embed_options(),
        }
    }

    pub fn path_query(&self, term_a: &str, term_b: &str) -> PathQuery {
        PathQuery {
            k: self.paths.k,
            expansion_hops: self.paths.expansion_hops,
            similarity_floor: self.paths.similarity_floor,
            ..PathQuery::new(term_a, term_b)
        }
    }

    pub fn iso_constraints(&self) -> IsoConstraints {
        let i = &self.iso;
        IsoConstraints {
            min_nodes: i.min_nodes,
            min_avg_degree: i.min_avg_degree,
            scope: if i.full_scope { SearchScope::Full } else { SearchScope::GiantComponentsOnly },
            max_mappings: i.max_mappings,
            pair_timeout: Duration::from_secs_f64(i.pair_timeout_secs),
            mode: if i.exact_labels { MatchMode::ExactLabels } else { MatchMode::Structure },
        }
    }

    /// Scripted client when `chat.mock_script` is set, HTTP otherwise.
    pub fn chat_client(&self) -> Result<Box<dyn ChatClient>, ConfigError> {
        if let Some(path) = &self.chat.mock_script {
            let text = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Read { path: path.clone(), source })?;
            let client = ScriptedChatClient::from_json(&text).map_err(|e| ConfigError::Provider(e.to_string()))?;
            return Ok(Box::new(client));
        }
        let mut provider = self.chat.provider.clone();
        if self.chat.audit && provider.audit_log.is_none() {
            provider.audit_log = Some(self.run_dir.join(AUDIT_LOG));
        }
        let client = HttpChatClient::new(provider).map_err(|e| ConfigError::Provider(e.to_string()))?;
        Ok(Box::new(client))
    }

    pub fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        let e = &self.embedding;
        match e.backend {
            EmbeddingBackend::Mock => {
                Ok(Box::new(HashEmbedder::new(e.dimension, self.seed).with_max_tokens(e.max_input_tokens)))
            }
            EmbeddingBackend::Http => {
                let config = EmbeddingConfig {
                    provider: e.provider.clone(),
                    dimension: e.dimension,
                    max_input_tokens: e.max_input_tokens,
                };
                let p = HttpEmbeddingProvider::new(config).map_err(|e| ConfigError::Provider(e.to_string()))?;
                Ok(Box::new(p))
            }
        }
    }
}
