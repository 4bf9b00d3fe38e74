//! Artifacts produced by the distillation stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::relation::Relation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDescription {
    pub post_id: String,
    pub text: String,
    pub model_id: String,
    pub template_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// An image description fed the prompt; implies the post has an image.
    pub caption_used: bool,
    pub keyinfo_digest: String,
    pub template_versions: BTreeMap<String, String>,
    pub model_id: String,
    pub temperature: f64,
}

/// One generated intention for one post under one relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionRecord {
    pub post_id: String,
    pub relation: Relation,
    /// Full sentence as generated, opener included.
    pub text: String,
    /// `text` with the relation opener removed.
    pub stripped_text: String,
    pub provenance: Provenance,
}
