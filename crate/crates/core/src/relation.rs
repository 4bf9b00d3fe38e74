//! The ten-relation intention taxonomy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "xNeed")]
    XNeed,
    #[serde(rename = "xIntent")]
    XIntent,
    #[serde(rename = "xAttr")]
    XAttr,
    #[serde(rename = "xEffect")]
    XEffect,
    #[serde(rename = "xReact")]
    XReact,
    #[serde(rename = "xWant")]
    XWant,
    #[serde(rename = "oEffect")]
    OEffect,
    #[serde(rename = "oReact")]
    OReact,
    #[serde(rename = "oWant")]
    OWant,
    #[serde(rename = "Open")]
    Open,
}

/// Whose point of view a relation describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    /// The posting user.
    Agent,
    /// People who view the post.
    Other,
    Open,
}

impl Relation {
    /// Taxonomy order; every export and report iterates in this order.
    pub const ALL: [Relation; 10] = [
        Relation::XNeed,
        Relation::XIntent,
        Relation::XAttr,
        Relation::XEffect,
        Relation::XReact,
        Relation::XWant,
        Relation::OEffect,
        Relation::OReact,
        Relation::OWant,
        Relation::Open,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Relation::XNeed => "xNeed",
            Relation::XIntent => "xIntent",
            Relation::XAttr => "xAttr",
            Relation::XEffect => "xEffect",
            Relation::XReact => "xReact",
            Relation::XWant => "xWant",
            Relation::OEffect => "oEffect",
            Relation::OReact => "oReact",
            Relation::OWant => "oWant",
            Relation::Open => "Open",
        }
    }

    pub fn gloss(self) -> &'static str {
        match self {
            Relation::XNeed => "user's need",
            Relation::XIntent => "user's intention",
            Relation::XAttr => "user's attribute",
            Relation::XEffect => "effect of user's action",
            Relation::XReact => "user's reaction",
            Relation::XWant => "user's desire",
            Relation::OEffect => "impact on others",
            Relation::OReact => "others' reaction",
            Relation::OWant => "others' desire",
            Relation::Open => "open-domain motive for publishing",
        }
    }

    pub fn perspective(self) -> Perspective {
        match self {
            Relation::Open => Perspective::Open,
            r if r.code().starts_with('x') => Perspective::Agent,
            _ => Perspective::Other,
        }
    }

    pub fn index(self) -> usize {
        Relation::ALL.iter().position(|r| *r == self).expect("relation in taxonomy")
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relation `{0}`")]
pub struct UnknownRelation(pub String);

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

/// Per-relation counts with the table-style total and rounded average.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub per_relation: BTreeMap<Relation, u64>,
    pub total: u64,
    pub average: u64,
}

impl RelationCounts {
    pub fn from_counts(counts: impl IntoIterator<Item = (Relation, u64)>) -> Self {
        let mut per_relation: BTreeMap<Relation, u64> = Relation::ALL.iter().map(|r| (*r, 0)).collect();
        for (r, n) in counts {
            *per_relation.entry(r).or_default() += n;
        }
        let total = per_relation.values().sum();
        Self {
            per_relation,
            total,
            average: rounded_average(total, Relation::ALL.len() as u64),
        }
    }

    pub fn tally<'a>(relations: impl IntoIterator<Item = &'a Relation>) -> Self {
        Self::from_counts(relations.into_iter().map(|r| (*r, 1)))
    }

    pub fn get(&self, r: Relation) -> u64 {
        self.per_relation.get(&r).copied().unwrap_or(0)
    }
}

/// Nearest-integer average, halves rounded up.
pub fn rounded_average(total: u64, n: u64) -> u64 {
    if n == 0 {
        0
    } else {
        (2 * total + n) / (2 * n)
    }
}
