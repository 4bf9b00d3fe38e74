//! OpenAI-compatible chat-completions and per-token embedding clients.

use std::fs;
use std::path::Path;
use std::time::Duration;

use base64::Engine;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::backend::{ChatBackend, EmbedBackend};
use crate::error::{GatewayError, Result};
use crate::types::{ChatRequest, Completion, TokenEmbeddings};

#[derive(Debug, Clone)]
pub struct HttpProfile {
    pub name: String,
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpProfile {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key.filter(|k| !k.is_empty());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Reads `MIKO_<PREFIX>_BASE_URL` and `MIKO_<PREFIX>_API_KEY`.
    pub fn from_env(name: &str, prefix: &str) -> Option<Self> {
        let base = std::env::var(format!("MIKO_{prefix}_BASE_URL")).ok()?;
        let key = std::env::var(format!("MIKO_{prefix}_API_KEY")).ok();
        Some(Self::new(name, base).with_api_key(key))
    }

    fn client(&self) -> Result<Client> {
        Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(format!("http client: {e}")))
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    }
}

/// Encodes an image file as a `data:` URL for the message content.
pub fn image_data_url(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{};base64,{b64}", mime_for(path)))
}

/// Request body for `POST {base}/chat/completions`.
pub fn chat_body(req: &ChatRequest) -> Result<Value> {
    let content = match &req.image {
        None => json!(req.prompt),
        Some(path) => json!([
            { "type": "text", "text": req.prompt },
            { "type": "image_url", "image_url": { "url": image_data_url(path)? } }
        ]),
    };
    Ok(json!({
        "model": req.model_id,
        "messages": [{ "role": "user", "content": content }],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "stream": false,
    }))
}

fn map_send_error(backend: &str, err: reqwest::Error) -> GatewayError {
    if err.is_timeout() {
        GatewayError::Timeout {
            backend: backend.to_string(),
        }
    } else {
        GatewayError::Backend {
            backend: backend.to_string(),
            status: 0,
            message: err.to_string(),
        }
    }
}

fn check_status(backend: &str, resp: Response) -> Result<Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let retry_after = resp
        .headers()
        .get(reqwest::header::RETRY_AFTER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<f64>().ok())
        .map(Duration::from_secs_f64);
    let message = resp.text().unwrap_or_default();
    let backend = backend.to_string();
    Err(match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => GatewayError::Auth { backend, message },
        StatusCode::TOO_MANY_REQUESTS => GatewayError::RateLimited {
            backend,
            retry_after,
        },
        _ => GatewayError::Backend {
            backend,
            status: status.as_u16(),
            message,
        },
    })
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    model: Option<String>,
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

pub struct OpenAiChatBackend {
    profile: HttpProfile,
    client: Client,
}

impl OpenAiChatBackend {
    pub fn new(profile: HttpProfile) -> Result<Self> {
        let client = profile.client()?;
        Ok(Self { profile, client })
    }
}

impl ChatBackend for OpenAiChatBackend {
    fn name(&self) -> &str {
        &self.profile.name
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion> {
        let name = &self.profile.name;
        let mut builder = self
            .client
            .post(format!("{}/chat/completions", self.profile.base_url))
            .json(&chat_body(req)?);
        if let Some(key) = &self.profile.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| map_send_error(name, e))?;
        let resp = check_status(name, resp)?;
        let parsed: ChatCompletionResponse = resp.json().map_err(|e| GatewayError::MalformedResponse {
            backend: name.clone(),
            message: e.to_string(),
        })?;
        let choice = parsed.choices.into_iter().next().ok_or_else(|| GatewayError::MalformedResponse {
            backend: name.clone(),
            message: "no choices".into(),
        })?;
        Ok(Completion {
            text: choice.message.content.unwrap_or_default(),
            model_id: parsed.model.unwrap_or_else(|| req.model_id.clone()),
            finish_reason: choice.finish_reason.unwrap_or_default(),
        })
    }
}

/// Client for `POST {base}/token-embeddings {"text": ...}`.
pub struct HttpEmbedBackend {
    profile: HttpProfile,
    model_id: String,
    client: Client,
}

impl HttpEmbedBackend {
    pub fn new(profile: HttpProfile, model_id: impl Into<String>) -> Result<Self> {
        let client = profile.client()?;
        Ok(Self {
            profile,
            model_id: model_id.into(),
            client,
        })
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<TokenEmbeddings> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let name = &self.profile.name;
        let mut builder = self
            .client
            .post(format!("{}/token-embeddings", self.profile.base_url))
            .json(&json!({ "text": text }));
        if let Some(key) = &self.profile.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| map_send_error(name, e))?;
        let resp = check_status(name, resp)?;
        let out: TokenEmbeddings = resp.json().map_err(|e| GatewayError::MalformedResponse {
            backend: name.clone(),
            message: e.to_string(),
        })?;
        out.validate().map_err(|message| GatewayError::MalformedResponse {
            backend: name.clone(),
            message,
        })?;
        Ok(out)
    }
}
