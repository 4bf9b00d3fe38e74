use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Post;
use crate::kb::KnowledgeBase;
use crate::relation::Relation;

pub const DEFAULT_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "Text")]
    Text,
    #[serde(rename = "Text+IMGDES")]
    TextImgdes,
    #[serde(rename = "Text+INTE")]
    TextInte,
    #[serde(rename = "Text+IMGDES+INTE")]
    TextImgdesInte,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Text, Variant::TextImgdes, Variant::TextInte, Variant::TextImgdesInte];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Text => "Text",
            Variant::TextImgdes => "Text+IMGDES",
            Variant::TextInte => "Text+INTE",
            Variant::TextImgdesInte => "Text+IMGDES+INTE",
        }
    }

    pub fn uses_description(self) -> bool {
        matches!(self, Variant::TextImgdes | Variant::TextImgdesInte)
    }

    pub fn uses_intentions(self) -> bool {
        matches!(self, Variant::TextInte | Variant::TextImgdesInte)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(' ', "");
        let norm = norm.replace("INT+", "INTE+");
        let norm = if norm.ends_with("+INT") { format!("{norm}E") } else { norm };
        Variant::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_uppercase() == norm)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedPost {
    pub post_id: String,
    pub text: String,
    pub label: Option<i64>,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Leave out posts that lack an artifact the variant needs.
    #[default]
    Skip,
    Error,
}

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub separator: String,
    pub on_missing: MissingPolicy,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            separator: DEFAULT_SEPARATOR.into(),
            on_missing: MissingPolicy::Skip,
        }
    }
}

/// Recorded next to an augmented dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentManifest {
    pub variant: Variant,
    pub separator: String,
    pub intention_joiner: String,
    pub count: usize,
    pub skipped: Vec<String>,
}

const INTENTION_JOINER: &str = " ";

/// Stripped intentions in taxonomy order, each ending in a period.
fn joined_intentions(kb: &KnowledgeBase, post_id: &str) -> Result<Option<String>, EvalError> {
    let records = kb.intentions_for(post_id)?;
    if records.len() != Relation::ALL.len() {
        return Ok(None);
    }
    let parts: Vec<String> = records
        .iter()
        .map(|r| {
            let t = r.stripped_text.trim();
            if t.ends_with(['.', '!', '?']) {
                t.to_string()
            } else {
                format!("{t}.")
            }
        })
        .collect();
    Ok(Some(parts.join(INTENTION_JOINER)))
}

/// Appends image descriptions and/or intentions to post text.
pub fn augment(
    posts: &[Post],
    kb: &KnowledgeBase,
    variant: Variant,
    opts: &AugmentOptions,
) -> Result<(Vec<AugmentedPost>, AugmentManifest), EvalError> {
    let mut out = Vec::with_capacity(posts.len());
    let mut skipped = Vec::new();
    for post in posts {
        let mut sections = vec![post.text.clone()];
        let mut missing = None;
        if variant.uses_description() {
            match kb.description(&post.id)? {
                Some(d) => sections.push(d.text),
                None => missing = Some("image description"),
            }
        }
        if variant.uses_intentions() && missing.is_none() {
            match joined_intentions(kb, &post.id)? {
                Some(s) => sections.push(s),
                None => missing = Some("intentions"),
            }
        }
        if let Some(kind) = missing {
            if opts.on_missing == MissingPolicy::Error {
                return Err(EvalError::MissingArtifact {
                    post_id: post.id.clone(),
                    kind: kind.into(),
                });
            }
            skipped.push(post.id.clone());
            continue;
        }
        out.push(AugmentedPost {
            post_id: post.id.clone(),
            text: sections.join(&opts.separator),
            label: post.label,
            variant,
        });
    }
    let manifest = AugmentManifest {
        variant,
        separator: opts.separator.clone(),
        intention_joiner: INTENTION_JOINER.into(),
        count: out.len(),
        skipped,
    };
    Ok((out, manifest))
}
