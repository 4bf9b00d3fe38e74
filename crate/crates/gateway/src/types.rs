use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};

/// Which chat backend a request is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Llm,
    Mllm,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Llm => "llm",
            BackendKind::Mllm => "mllm",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub backend: BackendKind,
    pub model_id: String,
    pub prompt: String,
    /// Resolved path of the image sent alongside the prompt (mllm only).
    pub image: Option<PathBuf>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Free-form routing tag, `stage:post_id[:relation]`. Not part of the cache key.
    pub request_tag: String,
    /// Version of the template the prompt was rendered from.
    pub template_version: Option<String>,
}

impl ChatRequest {
    pub fn new(backend: BackendKind, model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            backend,
            model_id: model_id.into(),
            prompt: prompt.into(),
            image: None,
            temperature: 0.0,
            max_tokens: 512,
            request_tag: String::new(),
            template_version: None,
        }
    }

    pub fn with_image(mut self, image: impl Into<PathBuf>) -> Self {
        self.image = Some(image.into());
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.request_tag = tag.into();
        self
    }

    pub fn with_template_version(mut self, version: impl Into<String>) -> Self {
        self.template_version = Some(version.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        if self.image.is_some() && self.backend != BackendKind::Mllm {
            return Err(GatewayError::InvalidRequest(
                "images can only be sent to the mllm backend".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Assistant message content only.
    pub text: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub cached: bool,
    pub raw_finish_reason: String,
}

/// What a backend hands back before the gateway stamps latency and cache state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub model_id: String,
    pub finish_reason: String,
}

/// Per-token vectors for one input text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbeddings {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

impl TokenEmbeddings {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.tokens.is_empty() {
            return Err("no tokens".into());
        }
        if self.tokens.len() != self.vectors.len() {
            return Err(format!(
                "{} tokens but {} vectors",
                self.tokens.len(),
                self.vectors.len()
            ));
        }
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != self.dim {
                return Err(format!("vector {i} has length {} (dim {})", v.len(), self.dim));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(format!("vector {i} has non-finite entries"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
