//! Uniform client for chat, multimodal chat and token-embedding backends.
//!
//! Requests go through a content-addressed disk cache, per-backend token
//! bucket pacing, a global in-flight cap and exponential-backoff retries.
//! [`MockBackend`] and [`HashEmbedder`] provide deterministic offline
//! backends.

pub mod backend;
pub mod cache;
pub mod error;
pub mod gateway;
pub mod http;
pub mod key;
pub mod limit;
pub mod mock;
pub mod types;

pub use backend::{ChatBackend, EmbedBackend};
pub use cache::ResponseCache;
pub use error::{GatewayError, Result};
pub use gateway::{Gateway, GatewayBuilder, GatewayStats, DEFAULT_MAX_IN_FLIGHT, DEFAULT_RATE_PER_SEC};
pub use http::{HttpEmbedBackend, HttpProfile, OpenAiChatBackend};
pub use key::cache_key;
pub use limit::{RetryPolicy, RateLimiter};
pub use mock::{HashEmbedder, MockBackend, MockMode};
pub use types::{BackendKind, ChatRequest, ChatResponse, Completion, TokenEmbeddings};
