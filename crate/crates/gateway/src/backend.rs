use crate::error::Result;
use crate::types::{ChatRequest, Completion, TokenEmbeddings};

/// A chat-completion backend (text or multimodal).
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<Completion>;
}

/// A per-token embedding backend.
pub trait EmbedBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<TokenEmbeddings>;
}
