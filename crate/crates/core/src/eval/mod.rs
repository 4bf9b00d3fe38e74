//! Scoring, instruction export, dataset augmentation and classification metrics.

mod augment;
mod benchmark;
mod bertscore;
mod evaluate;
mod export;
mod metrics;

use std::io;

use miko_gateway::GatewayError;
use thiserror::Error;

use crate::kb::KbError;
use crate::prompt::PromptError;

pub use augment::{augment, AugmentManifest, AugmentOptions, AugmentedPost, MissingPolicy, Variant, DEFAULT_SEPARATOR};
pub use benchmark::{load_benchmark, write_benchmark, BenchmarkEntry, BenchmarkManifest};
pub use bertscore::{bertscore, cosine, greedy_match, Prf};
pub use evaluate::{evaluate, load_candidates, CandidateSet, EvalOptions, EvalReport, MissingCandidates, REPORT_COLUMN_ORDER};
pub use export::{export_instructions, instruction_pair, InstructionPair, Turn};
pub use metrics::{classification_metrics, ClassificationMetrics};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty text")]
    EmptyText,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no candidate matches a benchmark entry")]
    NoOverlap,
    #[error("post {post_id} is incomplete, missing: {}", missing.join(", "))]
    IncompletePost { post_id: String, missing: Vec<String> },
    #[error("post {post_id} lacks {kind}")]
    MissingArtifact { post_id: String, kind: String },
    #[error("golds has {golds} labels but preds has {preds}")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(i64),
    #[error("no labels")]
    EmptyInput,
    #[error("line {line}: {reason}")]
    InvalidInput { line: usize, reason: String },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Rounds to two decimals, the precision reports are printed at.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
