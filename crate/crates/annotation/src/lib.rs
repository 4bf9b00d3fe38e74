//! Typicality annotation over distilled intentions: task serving, score
//! aggregation, review gating and benchmark export, with an HTTP API.

pub mod error;
pub mod http;
pub mod log;
pub mod model;
pub mod pool;
pub mod service;

pub use error::{AnnotationError, Result};
pub use http::{router, serve, HttpConfig};
pub use log::{Event, EventLog};
pub use model::{Agreement, AnnotationScore, Decision, NextTask, PostAggregate, ReviewRecord, ReviewStatus, Task};
pub use pool::{sample_pool, Pool};
pub use service::{AnnotationService, ServiceConfig};
