//! Sentence openers per relation and their removal before scoring.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::relation::Relation;

const DEFAULT_TABLE: &str = include_str!("../templates/prefixes.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationPrefixes {
    /// The opener the intention prompt asks the model to start with.
    pub opener: String,
    /// Further phrasings removed by [`PrefixTable::strip`].
    #[serde(default)]
    pub variants: Vec<String>,
}

/// Per-relation openers and the variants stripped before scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixTable {
    pub version: String,
    pub relations: BTreeMap<Relation, RelationPrefixes>,
}

impl Default for PrefixTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled prefix table is valid")
    }
}

impl PrefixTable {
    pub fn from_json(s: &str) -> Result<Self, String> {
        let table: PrefixTable = serde_json::from_str(s).map_err(|e| e.to_string())?;
        for r in Relation::ALL {
            let entry = table
                .relations
                .get(&r)
                .ok_or_else(|| format!("prefix table has no entry for {r}"))?;
            if entry.opener.trim().is_empty() {
                return Err(format!("empty opener for {r}"));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let s = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&s)
    }

    pub fn opener(&self, relation: Relation) -> &str {
        &self.relations[&relation].opener
    }

    /// All known openers for a relation, longest first.
    fn candidates(&self, relation: Relation) -> Vec<&str> {
        let entry = &self.relations[&relation];
        let mut all: Vec<&str> = std::iter::once(entry.opener.as_str())
            .chain(entry.variants.iter().map(String::as_str))
            .collect();
        all.sort_by_key(|p| std::cmp::Reverse(p.len()));
        all
    }

    fn strip_once<'a>(&self, text: &'a str, relation: Relation) -> Option<&'a str> {
        let trimmed = text.trim_start();
        for prefix in self.candidates(relation) {
            let Some(head) = trimmed.get(..prefix.len()) else {
                continue;
            };
            if !head.eq_ignore_ascii_case(prefix) {
                continue;
            }
            let rest = &trimmed[prefix.len()..];
            // Only strip at a word boundary.
            if rest.chars().next().is_some_and(|c| c.is_alphanumeric()) {
                continue;
            }
            let rest = rest.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ':' | '-'));
            let rest = rest.trim_end();
            if rest.is_empty() {
                return None;
            }
            return Some(rest);
        }
        None
    }

    /// Removes the relation's opener (case-insensitive). Text without a known
    /// opener, or consisting only of one, is returned unchanged apart from
    /// surrounding whitespace.
    pub fn strip(&self, text: &str, relation: Relation) -> String {
        let mut current = text.trim();
        while let Some(rest) = self.strip_once(current, relation) {
            current = rest;
        }
        current.to_string()
    }
}

pub fn strip_prefix(text: &str, relation: Relation) -> String {
    PrefixTable::default().strip(text, relation)
}
