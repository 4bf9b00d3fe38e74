//! Corpus handling, prompt rendering, distillation pipeline, knowledge base and evaluation.

pub mod corpus;
pub mod distiller;
pub mod eval;
pub mod kb;
pub mod keyinfo;
pub mod prefix;
pub mod prompt;
pub mod records;
pub mod relation;

pub use distiller::{DistillError, DistillOptions, Distiller, KeyInfoMode, PartialResult, PipelineReport, PostFailure, RelationFailure};
pub use corpus::{CorpusError, CorpusManifest, Dataset, IngestOptions, Post, SourceFormat, Split};
pub use kb::{KbError, KbMeta, KbRecord, KnowledgeBase, Query};
pub use keyinfo::{parse_keyinfo, KeyInfo, KeyInfoFields, KeyInfoSource, ParseFailure};
pub use prefix::{strip_prefix, PrefixTable};
pub use prompt::{PromptError, PromptKit, PromptTemplate, SourceKind, Stage};
pub use records::{ImageDescription, IntentionRecord, Provenance};
pub use relation::{Perspective, Relation, RelationCounts};
