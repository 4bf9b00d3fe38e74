#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use miko_core::corpus::{ingest, IngestOptions, SourceFormat};
use miko_core::distiller::{DistillOptions, Distiller};
use miko_core::kb::KnowledgeBase;
use miko_core::{Dataset, Post, PromptKit};
use miko_gateway::{Gateway, MockBackend, RetryPolicy};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus() -> Vec<Post> {
    ingest(
        &fixtures().join("corpus7.jsonl"),
        Dataset::Generic,
        SourceFormat::Jsonl,
        IngestOptions::default(),
    )
    .unwrap()
    .0
}

/// Gateway over seeded synthetic mocks that replay the recorded airport responses.
pub fn recorded_gateway() -> Gateway {
    let file = fixtures().join("dubai_responses.jsonl");
    Gateway::builder()
        .llm(Arc::new(MockBackend::synthetic(7).with_fixture_file(&file).unwrap()))
        .mllm(Arc::new(MockBackend::synthetic(7).with_fixture_file(&file).unwrap()))
        .rate_per_sec(0.0)
        .retry(RetryPolicy::no_delay(1))
        .build()
        .unwrap()
}

/// Runs the mock pipeline over the 7-post fixture into `dir`.
pub fn mock_kb(dir: &Path) -> KnowledgeBase {
    let gw = recorded_gateway();
    let kit = PromptKit::bundled();
    let kb = KnowledgeBase::open(dir).unwrap();
    let opts = DistillOptions {
        image_root: fixtures().join("images"),
        ..Default::default()
    };
    Distiller::new(&gw, &kit, opts).run_pipeline(&corpus(), &kb).unwrap();
    kb
}
