use std::io;

use miko_core::kb::KbError;
use miko_core::Relation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("score value {0} is not -1, 0 or 1")]
    InvalidValue(i64),
    #[error("post {post_id} relation {relation} is not in the annotation pool")]
    UnknownTask { post_id: String, relation: Relation },
    #[error("post {0} is not in the annotation pool")]
    UnknownPost(String),
    #[error("annotator `{0}` is not on the allowlist")]
    UnknownAnnotator(String),
    #[error("post {post_id} is not eligible for review (total {total})")]
    NotEligible { post_id: String, total: f64 },
    #[error("post {0} was already reviewed")]
    AlreadyReviewed(String),
    #[error("relation {relation} of post {post_id} cannot be excluded: mean score {mean} is not below 1")]
    InvalidExclusion {
        post_id: String,
        relation: Relation,
        mean: f64,
    },
    #[error("no admitted posts")]
    EmptyBenchmark,
    #[error("annotation pool is empty")]
    EmptyPool,
    #[error("event log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl AnnotationError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::InvalidValue(_) => "invalid_value",
            AnnotationError::UnknownTask { .. } => "unknown_task",
            AnnotationError::UnknownPost(_) => "unknown_post",
            AnnotationError::UnknownAnnotator(_) => "unknown_annotator",
            AnnotationError::NotEligible { .. } => "not_eligible",
            AnnotationError::AlreadyReviewed(_) => "already_reviewed",
            AnnotationError::InvalidExclusion { .. } => "invalid_exclusion",
            AnnotationError::EmptyBenchmark => "empty_benchmark",
            AnnotationError::EmptyPool => "empty_pool",
            AnnotationError::CorruptLog { .. } => "corrupt_log",
            AnnotationError::Kb(_) => "storage",
            AnnotationError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, AnnotationError>;
