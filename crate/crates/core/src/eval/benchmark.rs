use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::records::Provenance;
use crate::relation::{Relation, RelationCounts};

/// One admitted gold intention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub post_id: String,
    pub relation: Relation,
    /// Intention with its relation opener removed.
    pub gold_text: String,
    pub source_provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub per_relation_counts: std::collections::BTreeMap<Relation, u64>,
    pub total: u64,
    pub average: u64,
    pub posts: usize,
}

impl BenchmarkManifest {
    pub fn from_entries(entries: &[BenchmarkEntry]) -> Self {
        let counts = RelationCounts::tally(entries.iter().map(|e| &e.relation));
        let posts = entries
            .iter()
            .map(|e| e.post_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        Self {
            per_relation_counts: counts.per_relation,
            total: counts.total,
            average: counts.average,
            posts,
        }
    }
}

pub fn write_benchmark(entries: &[BenchmarkEntry], mut out: impl Write) -> Result<BenchmarkManifest, EvalError> {
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(BenchmarkManifest::from_entries(entries))
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkEntry>, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: BenchmarkEntry = serde_json::from_str(&line).map_err(|e| EvalError::InvalidInput {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if entry.gold_text.trim().is_empty() {
            return Err(EvalError::InvalidInput {
                line: i + 1,
                reason: "empty gold_text".into(),
            });
        }
        out.push(entry);
    }
    Ok(out)
}
