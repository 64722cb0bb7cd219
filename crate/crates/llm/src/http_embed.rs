//! Embedding provider backed by an OpenAI-compatible `/embeddings` endpoint.

use std::time::Duration;

use kgraph_core::embedding::{EmbeddingProvider, ProviderError, DEFAULT_MAX_INPUT_TOKENS};
use serde::{Deserialize, Serialize};

use crate::gateway::{post_with_retries, ChatError, ProviderConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    #[serde(flatten)]
    pub provider: ProviderConfig,
    pub dimension: usize,
    #[serde(default = "default_tokens")]
    pub max_input_tokens: usize,
}

fn default_tokens() -> usize {
    DEFAULT_MAX_INPUT_TOKENS
}

pub struct HttpEmbeddingProvider {
    config: EmbeddingConfig,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireEmbedding {
    index: Option<usize>,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct WireResponse {
    data: Vec<WireEmbedding>,
}

impl HttpEmbeddingProvider {
    pub fn new(config: EmbeddingConfig) -> Result<Self, ChatError> {
        if config.dimension == 0 {
            return Err(ChatError::Config("embedding dimension must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.provider.timeout_secs))
            .build()
            .map_err(|e| ChatError::Config(e.to_string()))?;
        Ok(Self { config, http })
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn max_input_tokens(&self) -> usize {
        self.config.max_input_tokens
    }

    fn fingerprint(&self) -> String {
        format!("http:{}:{}:d{}", self.config.provider.base_url, self.config.provider.model, self.config.dimension)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = serde_json::json!({ "model": self.config.provider.model, "input": texts });
        let url = self.config.provider.endpoint("embeddings");
        let value = post_with_retries(&self.http, &self.config.provider, &url, &body)
            .map_err(|e| ProviderError(e.to_string()))?;
        let parsed: WireResponse = serde_json::from_value(value).map_err(|e| ProviderError(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(ProviderError(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let mut data = parsed.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
        }
        data.into_iter()
            .map(|d| {
                if d.embedding.len() == self.config.dimension {
                    Ok(d.embedding)
                } else {
                    Err(ProviderError(format!(
                        "expected dimension {}, got {}",
                        self.config.dimension,
                        d.embedding.len()
                    )))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dimension_is_rejected() {
        let config = EmbeddingConfig {
            provider: ProviderConfig::default(),
            dimension: 0,
            max_input_tokens: 512,
        };
        assert!(HttpEmbeddingProvider::new(config).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_a_provider_error() {
        let config = EmbeddingConfig {
            provider: ProviderConfig {
                base_url: "http://127.0.0.1:9".into(),
                max_retries: 0,
                timeout_secs: 2,
                ..Default::default()
            },
            dimension: 8,
            max_input_tokens: 512,
        };
        let p = HttpEmbeddingProvider::new(config).unwrap();
        assert!(p.embed_batch(&["x".to_string()]).is_err());
        assert!(p.fingerprint().starts_with("http:"));
    }
}
