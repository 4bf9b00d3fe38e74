//! Deterministic in-process backends for tests and offline runs.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::backend::{ChatBackend, EmbedBackend};
use crate::error::{GatewayError, Result};
use crate::key::cache_key;
use crate::types::{ChatRequest, Completion, TokenEmbeddings};

type Script = Box<dyn Fn(&ChatRequest) -> Result<String> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Replies `ECHO:<prompt>`.
    Echo,
    /// Produces stage-shaped output (caption, key information block, intention
    /// sentence) chosen by the request tag, seeded by `seed` and the request content.
    Synthetic { seed: u64 },
}

/// Chat backend that never touches the network.
pub struct MockBackend {
    name: String,
    model_id: String,
    mode: MockMode,
    fixtures: HashMap<String, String>,
    script: Option<Script>,
    calls: AtomicUsize,
}

#[derive(Deserialize)]
struct FixtureLine {
    id: String,
    text: String,
}

const SCENES: &[&str] = &[
    "a crowded street",
    "an airport terminal",
    "a sunny beach",
    "a football stadium",
    "a kitchen table",
    "a city skyline at night",
    "a mountain trail",
    "a concert stage",
];
const THINGS: &[&str] = &[
    "people", "a sign", "a car", "a dog", "food", "a phone", "flowers", "a crowd", "a banner",
    "luggage", "a trophy", "a coffee cup",
];
const CONCEPTS: &[&str] = &["travel", "sports", "food", "news", "humor", "music", "family", "work"];
const ACTIONS: &[&str] = &["sharing", "visiting", "celebrating", "complaining", "announcing", "watching"];
const EMOTIONS: &[&str] = &["excitement", "joy", "frustration", "sadness", "pride", "surprise"];
const KEYWORDS: &[&str] = &[
    "weekend", "friends", "city", "game", "holiday", "team", "delay", "sunset", "party", "breakfast",
    "victory", "news", "photo", "trip", "fans",
];
const PHRASES: &[&str] = &[
    "share the moment with their followers",
    "express how they feel about the event",
    "let others know what happened",
    "start a conversation about the topic",
    "show support for the people involved",
    "entertain their audience",
    "warn others about the situation",
    "celebrate a personal achievement",
];

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        Self {
            name: "mock".into(),
            model_id: "mock-model".into(),
            mode,
            fixtures: HashMap::new(),
            script: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn echo() -> Self {
        Self::new(MockMode::Echo)
    }

    pub fn synthetic(seed: u64) -> Self {
        Self::new(MockMode::Synthetic { seed })
    }

    /// Backend whose reply is computed by `f`; useful for failure injection.
    pub fn scripted(f: impl Fn(&ChatRequest) -> Result<String> + Send + Sync + 'static) -> Self {
        let mut m = Self::echo();
        m.script = Some(Box::new(f));
        m
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Recorded replies keyed by request tag; a matching fixture wins over the mode.
    pub fn with_fixture(mut self, id: impl Into<String>, text: impl Into<String>) -> Self {
        self.fixtures.insert(id.into(), text.into());
        self
    }

    /// Loads recorded replies from a jsonl file of `{"id": ..., "text": ...}` lines.
    pub fn with_fixture_file(mut self, path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)?;
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: FixtureLine = serde_json::from_str(line).map_err(|e| {
                GatewayError::InvalidRequest(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            self.fixtures.insert(f.id, f.text);
        }
        Ok(self)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn reply(&self, req: &ChatRequest) -> Result<String> {
        if let Some(text) = self.fixtures.get(&req.request_tag) {
            return Ok(text.clone());
        }
        if let Some(script) = &self.script {
            return script(req);
        }
        match self.mode {
            MockMode::Echo => Ok(format!("ECHO:{}", req.prompt)),
            MockMode::Synthetic { seed } => Ok(synthesize(seed, req)),
        }
    }
}

fn content_rng(seed: u64, req: &ChatRequest) -> ChaCha8Rng {
    let key = cache_key(req);
    let mut bytes = [0u8; 8];
    hex::decode_to_slice(&key[..16], &mut bytes).expect("cache key is hex");
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes))
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap_or_default()
}

/// Finds the sentence opener the prompt asks the answer to begin with.
fn requested_opener(prompt: &str) -> Option<&str> {
    let marker = "begins with \"";
    let start = prompt.find(marker)? + marker.len();
    let end = prompt[start..].find('"')?;
    Some(&prompt[start..start + end])
}

fn synthesize(seed: u64, req: &ChatRequest) -> String {
    let mut rng = content_rng(seed, req);
    let stage = req.request_tag.split(':').next().unwrap_or_default();
    match stage {
        "caption" => format!(
            "The image shows {} with {} and {} in the foreground.",
            pick(&mut rng, SCENES),
            pick(&mut rng, THINGS),
            pick(&mut rng, THINGS)
        ),
        "keyinfo" => {
            let n = rng.random_range(3..=5);
            let keywords: Vec<&str> = KEYWORDS.choose_multiple(&mut rng, n).copied().collect();
            format!(
                "Concept: {}\nAction: {}\nObject: {}\nEmotion: {}\nKeywords: {}",
                pick(&mut rng, CONCEPTS),
                pick(&mut rng, ACTIONS),
                pick(&mut rng, THINGS),
                pick(&mut rng, EMOTIONS),
                keywords.join(", ")
            )
        }
        "intention" => {
            let phrase = pick(&mut rng, PHRASES);
            match requested_opener(&req.prompt) {
                Some(opener) => format!("{opener} {phrase}."),
                None => format!("{phrase}."),
            }
        }
        _ => format!("ECHO:{}", req.prompt),
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.reply(req)?;
        Ok(Completion {
            text,
            model_id: self.model_id.clone(),
            finish_reason: "stop".into(),
        })
    }
}

/// Whitespace tokenizer with a seeded hash embedding per token.
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
    model_id: String,
    calls: AtomicUsize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 16;

    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, Self::DEFAULT_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            model_id: format!("hash-embed-{dim}"),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

impl EmbedBackend for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<TokenEmbeddings> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let vectors = tokens.iter().map(|t| self.token_vector(t)).collect();
        Ok(TokenEmbeddings {
            tokens,
            vectors,
            dim: self.dim,
        })
    }
}
