use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use miko_gateway::Gateway;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{bertscore, round2, BenchmarkEntry, EvalError};
use crate::prefix::PrefixTable;
use crate::relation::Relation;

/// Column order of the per-relation score report.
pub const REPORT_COLUMN_ORDER: [Relation; 10] = [
    Relation::XWant,
    Relation::OEffect,
    Relation::XAttr,
    Relation::XIntent,
    Relation::XReact,
    Relation::OReact,
    Relation::OWant,
    Relation::XEffect,
    Relation::XNeed,
    Relation::Open,
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    pub model_name: String,
    pub items: BTreeMap<(String, Relation), String>,
}

impl CandidateSet {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            items: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, post_id: impl Into<String>, relation: Relation, text: impl Into<String>) {
        self.items.insert((post_id.into(), relation), text.into());
    }
}

#[derive(Deserialize)]
struct CandidateRow {
    post_id: String,
    relation: Relation,
    text: String,
    #[serde(default)]
    model_name: Option<String>,
}

/// Reads a candidate jsonl file of `{post_id, relation, text, model_name}` rows.
pub fn load_candidates(path: &Path) -> Result<CandidateSet, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut set = CandidateSet::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::InvalidInput { line: i + 1, reason };
        let row: CandidateRow = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if row.text.trim().is_empty() {
            return Err(bad("empty candidate text".into()));
        }
        if let Some(name) = row.model_name {
            if set.model_name.is_empty() {
                set.model_name = name;
            } else if set.model_name != name {
                return Err(bad(format!("model_name `{name}` differs from `{}`", set.model_name)));
            }
        }
        set.items.insert((row.post_id, row.relation), row.text);
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingCandidates {
    /// Benchmark pairs without a candidate are left out of the means.
    #[default]
    Skip,
    /// Benchmark pairs without a candidate score zero.
    Zero,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub missing: MissingCandidates,
    /// Average over scored pairs instead of over relations.
    pub micro: bool,
    pub prefixes: PrefixTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    /// Mean F1 x 100 per relation, two decimals.
    pub per_relation_f1: BTreeMap<Relation, f64>,
    pub average: f64,
    pub n_scored: usize,
    pub n_missing: usize,
    /// Candidate keys with no benchmark entry; ignored.
    pub n_unmatched: usize,
    pub aggregation: String,
    pub missing_policy: MissingCandidates,
    pub embed_model: Option<String>,
}

impl EvalReport {
    /// One header row and one data row in report column order.
    pub fn write_csv(&self, out: impl Write) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["model".to_string()];
        header.extend(REPORT_COLUMN_ORDER.iter().map(|r| r.code().to_string()));
        header.push("Average".into());
        w.write_record(&header).map_err(std::io::Error::other)?;
        let mut row = vec![self.model_name.clone()];
        for r in REPORT_COLUMN_ORDER {
            row.push(self.per_relation_f1.get(&r).map(|v| format!("{v:.2}")).unwrap_or_default());
        }
        row.push(format!("{:.2}", self.average));
        w.write_record(&row).map_err(std::io::Error::other)?;
        w.flush()?;
        Ok(())
    }
}

/// Scores candidates against gold intentions with BERTScore F1.
///
/// Both sides have their relation openers stripped first. Per-relation values
/// are mean F1 x 100; the average is taken over relations (or over pairs when
/// `micro` is set).
pub fn evaluate(
    candidates: &CandidateSet,
    benchmark: &[BenchmarkEntry],
    gw: &Gateway,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let gold: BTreeMap<(&str, Relation), &BenchmarkEntry> = benchmark
        .iter()
        .map(|e| ((e.post_id.as_str(), e.relation), e))
        .collect();
    let n_unmatched = candidates
        .items
        .keys()
        .filter(|(p, r)| !gold.contains_key(&(p.as_str(), *r)))
        .count();
    if n_unmatched > 0 {
        warn!(n_unmatched, "candidates without a benchmark entry are ignored");
    }

    let mut scores: BTreeMap<Relation, Vec<f64>> = BTreeMap::new();
    let (mut n_scored, mut n_missing) = (0, 0);
    for (&(post_id, relation), entry) in &gold {
        match candidates.items.get(&(post_id.to_string(), relation)) {
            Some(text) => {
                let cand = opts.prefixes.strip(text, relation);
                let reference = opts.prefixes.strip(&entry.gold_text, relation);
                let prf = bertscore(&cand, &reference, gw)?;
                scores.entry(relation).or_default().push(prf.f1);
                n_scored += 1;
            }
            None => {
                n_missing += 1;
                if opts.missing == MissingCandidates::Zero {
                    scores.entry(relation).or_default().push(0.0);
                }
            }
        }
    }
    if n_scored == 0 {
        return Err(EvalError::NoOverlap);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let per_relation: BTreeMap<Relation, f64> = scores.iter().map(|(r, v)| (*r, mean(v) * 100.0)).collect();
    let average = if opts.micro {
        let all: Vec<f64> = scores.values().flatten().copied().collect();
        mean(&all) * 100.0
    } else {
        per_relation.values().sum::<f64>() / per_relation.len() as f64
    };
    Ok(EvalReport {
        model_name: candidates.model_name.clone(),
        per_relation_f1: per_relation.into_iter().map(|(r, v)| (r, round2(v))).collect(),
        average: round2(average),
        n_scored,
        n_missing,
        n_unmatched,
        aggregation: if opts.micro { "micro" } else { "macro" }.into(),
        missing_policy: opts.missing,
        embed_model: gw.embed_model_id().map(str::to_string),
    })
}
