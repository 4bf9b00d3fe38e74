use std::fs;
use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::types::ChatRequest;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of an image reference: content digest when the file is readable,
/// otherwise a digest of the path itself.
pub fn image_digest(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => format!("sha256:{}", sha256_hex(&bytes)),
        Err(_) => format!("path:{}", sha256_hex(path.to_string_lossy().as_bytes())),
    }
}

/// Content-addressed key for a chat request. The request tag is excluded.
pub fn cache_key(req: &ChatRequest) -> String {
    let canonical = json!({
        "backend": req.backend.as_str(),
        "model_id": req.model_id,
        "prompt": req.prompt,
        "image": req.image.as_deref().map(image_digest),
        "temperature": format!("{:.6}", req.temperature),
        "max_tokens": req.max_tokens,
        "template_version": req.template_version,
    });
    sha256_hex(canonical.to_string().as_bytes())
}

/// Key for a token-embedding lookup.
pub fn embed_key(model_id: &str, text: &str) -> String {
    let canonical = json!({ "kind": "embed", "model_id": model_id, "text": text });
    sha256_hex(canonical.to_string().as_bytes())
}
