//! Reproducible selection of the posts put in front of annotators.

use std::fs;
use std::path::Path;

use miko_core::{KnowledgeBase, Relation};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{AnnotationError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub seed: Option<u64>,
    pub post_ids: Vec<String>,
}

impl Pool {
    pub fn new(post_ids: Vec<String>) -> Self {
        Self { seed: None, post_ids }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| AnnotationError::CorruptLog {
            line: 1,
            message: format!("{}: {e}", path.display()),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Draws `n` posts with all ten intentions from the knowledge base.
///
/// The same store and seed always give the same pool. Asking for more posts
/// than exist returns all of them.
pub fn sample_pool(kb: &KnowledgeBase, n: usize, seed: u64) -> Result<Pool> {
    let mut candidates: Vec<String> = kb
        .post_ids()
        .into_iter()
        .filter(|id| kb.relations_present(id).len() == Relation::ALL.len())
        .collect();
    if candidates.is_empty() {
        return Err(AnnotationError::EmptyPool);
    }
    if n > candidates.len() {
        warn!(requested = n, available = candidates.len(), "pool larger than the knowledge base");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(n);
    Ok(Pool {
        seed: Some(seed),
        post_ids: candidates,
    })
}
