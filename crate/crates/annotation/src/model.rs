use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use miko_core::{IntentionRecord, Post, Relation};
use serde::{Deserialize, Serialize};

use crate::error::{AnnotationError, Result};

/// One annotator's typicality judgment: 1 high, 0 low, -1 implausible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationScore {
    pub post_id: String,
    pub relation: Relation,
    pub annotator_id: String,
    pub value: i8,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: u64,
}

pub fn check_value(value: i64) -> Result<i8> {
    match value {
        -1..=1 => Ok(value as i8),
        _ => Err(AnnotationError::InvalidValue(value)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Admitted,
    Rejected,
    NotEligible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Admit,
    Reject,
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "admit" => Ok(Decision::Admit),
            "reject" => Ok(Decision::Reject),
            other => Err(format!("unknown decision `{other}`")),
        }
    }
}

/// How scores from several annotators are combined per relation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreement {
    #[default]
    Mean,
    /// Most frequent value; ties go to the lower value.
    Majority,
}

impl FromStr for Agreement {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Agreement::Mean),
            "majority" => Ok(Agreement::Majority),
            other => Err(format!("unknown agreement mode `{other}`")),
        }
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Agreement::Mean => "mean",
            Agreement::Majority => "majority",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostAggregate {
    pub post_id: String,
    /// Combined score per scored relation.
    pub per_relation_score: BTreeMap<Relation, f64>,
    pub total: f64,
    pub eligible: bool,
    pub review_status: ReviewStatus,
    /// Annotators who scored all ten relations.
    pub complete_annotators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub post_id: String,
    pub decision: Decision,
    pub reviewer_id: String,
    #[serde(default)]
    pub excluded_relations: Vec<Relation>,
    #[serde(default)]
    pub timestamp: u64,
}

/// What an annotator is shown for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub post: Post,
    /// URL path of the post image under `/images`, when the post has one.
    pub image_ref: Option<String>,
    pub intentions: Vec<IntentionRecord>,
    /// Values this annotator already gave for the post.
    pub scored: BTreeMap<Relation, i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextTask {
    Task(Box<Task>),
    Done,
}

/// Exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };

    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let sign = if den < 0 { -1 } else { 1 };
        Ratio {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn gt_int(self, n: i128) -> bool {
        self.num > n * self.den
    }

    pub fn lt_int(self, n: i128) -> bool {
        self.num < n * self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::ops::Add for Ratio {
    type Output = Ratio;

    fn add(self, other: Ratio) -> Ratio {
        Ratio::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }
}

/// Combines one relation's annotator values.
pub fn combine(values: &[i8], agreement: Agreement) -> Ratio {
    if values.is_empty() {
        return Ratio::ZERO;
    }
    match agreement {
        Agreement::Mean => Ratio::new(values.iter().map(|v| *v as i128).sum(), values.len() as i128),
        Agreement::Majority => {
            let mut counts = [0usize; 3];
            for v in values {
                counts[(*v + 1) as usize] += 1;
            }
            let best = (0..3).max_by_key(|i| (counts[*i], std::cmp::Reverse(*i))).unwrap_or(1);
            Ratio::new(best as i128 - 1, 1)
        }
    }
}
