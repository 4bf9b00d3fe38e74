#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use miko_annotation::{AnnotationService, Pool, ServiceConfig};
use miko_core::records::{IntentionRecord, Provenance};
use miko_core::{KnowledgeBase, Post, Relation};

/// A knowledge base with `n` posts (`p0`..), each with all ten intentions.
pub fn kb(dir: &Path, n: usize) -> Arc<KnowledgeBase> {
    let kb = KnowledgeBase::open(dir).unwrap();
    for i in 0..n {
        let id = format!("p{i}");
        let mut post = Post::text_only(&id, format!("post number {i}"));
        if i % 2 == 0 {
            post = post.with_image(format!("{id}.jpg"));
        }
        kb.append_post(&post).unwrap();
        for r in Relation::ALL {
            kb.append_intention(&IntentionRecord {
                post_id: id.clone(),
                relation: r,
                text: format!("{} {r} intention of {id}", "The user posted this Tweet in order to"),
                stripped_text: format!("{r} intention of {id}"),
                provenance: Provenance {
                    caption_used: false,
                    keyinfo_digest: "d".into(),
                    template_versions: BTreeMap::new(),
                    model_id: "mock".into(),
                    temperature: 0.7,
                },
            })
            .unwrap();
        }
    }
    Arc::new(kb)
}

pub fn service(dir: &Path, posts: usize, cfg: ServiceConfig) -> AnnotationService {
    let kb = kb(&dir.join("kb"), posts);
    let pool = Pool::new((0..posts).map(|i| format!("p{i}")).collect());
    AnnotationService::create(&dir.join("session"), kb, &pool, cfg).unwrap()
}

/// Scores every relation of `post` with `value`, except those in `overrides`.
pub fn score_all(svc: &AnnotationService, post: &str, annotator: &str, value: i64, overrides: &[(Relation, i64)]) {
    for r in Relation::ALL {
        let v = overrides.iter().find(|(o, _)| *o == r).map(|(_, v)| *v).unwrap_or(value);
        svc.submit_score(post, r, annotator, v).unwrap();
    }
}
