//! Three-stage pipeline: image caption, key information, intentions per relation.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use miko_gateway::{BackendKind, ChatRequest, Gateway, GatewayError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use crate::corpus::Post;
use crate::kb::{KbError, KnowledgeBase};
use crate::keyinfo::{parse_keyinfo, split_keywords, KeyInfo, KeyInfoFields, KeyInfoSource, ParseFailure};
use crate::prompt::{merged_source, PromptError, PromptKit, SourceKind};
use crate::records::{ImageDescription, IntentionRecord, Provenance};
use crate::relation::Relation;

const FORMAT_REMINDER: &str = "\n\nFormat reminder: reply with exactly five lines labeled \
Concept:, Action:, Object:, Emotion: and Keywords:. List three to five keywords separated by commas.";

#[derive(Debug, Error)]
pub enum DistillError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("post {post_id}: image {} does not resolve", path.display())]
    MissingImageFile { post_id: String, path: PathBuf },
    #[error("post {post_id}: {failure}")]
    Parse { post_id: String, failure: ParseFailure },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("post {post_id}: relation {relation} failed: {message}")]
    RelationFailed {
        post_id: String,
        relation: Relation,
        message: String,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// How key information is extracted when an image description exists.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyInfoMode {
    /// One extraction over post text and description under labeled headers.
    #[default]
    Merged,
    /// Separate extractions over the post text and the description, then merged.
    PerSource,
}

#[derive(Debug, Clone)]
pub struct DistillOptions {
    pub llm_model: String,
    pub mllm_model: String,
    /// Directory image references are resolved against.
    pub image_root: PathBuf,
    pub parallel: usize,
    pub strict: bool,
    pub keyinfo_mode: KeyInfoMode,
    pub caption_temperature: f64,
    pub keyinfo_temperature: f64,
    pub intention_temperature: f64,
    pub max_tokens: u32,
    /// Fail the run when more than this fraction of posts fail.
    pub max_failure_rate: Option<f64>,
}

impl Default for DistillOptions {
    fn default() -> Self {
        Self {
            llm_model: "gpt-3.5-turbo".into(),
            mllm_model: "llava-v1.5-13b".into(),
            image_root: PathBuf::from("."),
            parallel: 4,
            strict: false,
            keyinfo_mode: KeyInfoMode::Merged,
            caption_temperature: 0.7,
            keyinfo_temperature: 0.0,
            intention_temperature: 0.7,
            max_tokens: 256,
            max_failure_rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFailure {
    pub relation: Relation,
    pub message: String,
}

/// Intention stage output: the records that succeeded and the relations that did not.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialResult {
    pub records: Vec<IntentionRecord>,
    pub failures: Vec<RelationFailure>,
}

impl PartialResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostFailure {
    pub post_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub posts_total: usize,
    pub posts_completed: usize,
    /// Posts already complete in the knowledge base before this run.
    pub posts_resumed: usize,
    pub posts_failed: usize,
    /// Posts whose image could not be read and were processed as text-only.
    pub posts_downgraded: usize,
    pub descriptions_written: usize,
    pub keyinfo_written: usize,
    pub intentions_written: usize,
    pub llm_calls: u64,
    pub mllm_calls: u64,
    pub cache_hits: u64,
    pub retries: u64,
    pub failures: Vec<PostFailure>,
    pub failure_rate: f64,
}

impl PipelineReport {
    /// Whether the run should exit nonzero.
    pub fn is_failure(&self, strict: bool, max_failure_rate: Option<f64>) -> bool {
        (strict && !self.failures.is_empty()) || max_failure_rate.is_some_and(|t| self.failure_rate > t)
    }
}

pub struct Distiller<'a> {
    gw: &'a Gateway,
    kit: &'a PromptKit,
    opts: DistillOptions,
}

/// First nonblank line with surrounding quotes removed.
fn clean_sentence(raw: &str) -> String {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
    line.trim_matches(|c: char| matches!(c, '"' | '“' | '”' | '\'' | '`')).trim().to_string()
}

impl<'a> Distiller<'a> {
    pub fn new(gw: &'a Gateway, kit: &'a PromptKit, opts: DistillOptions) -> Self {
        Self { gw, kit, opts }
    }

    pub fn options(&self) -> &DistillOptions {
        &self.opts
    }

    pub fn resolve_image(&self, image: &str) -> PathBuf {
        let p = Path::new(image);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.opts.image_root.join(p)
        }
    }

    /// Describes the post's image; text-only posts return `None` without a backend call.
    pub fn caption_stage(&self, post: &Post) -> Result<Option<ImageDescription>, DistillError> {
        let Some(image) = &post.image else {
            return Ok(None);
        };
        let path = self.resolve_image(image);
        if File::open(&path).and_then(|f| f.metadata()).map(|m| !m.is_file()).unwrap_or(true) {
            return Err(DistillError::MissingImageFile {
                post_id: post.id.clone(),
                path,
            });
        }
        let prompt = self.kit.render_caption_prompt(&post.text)?;
        let req = ChatRequest::new(BackendKind::Mllm, &self.opts.mllm_model, prompt)
            .with_image(path)
            .with_temperature(self.opts.caption_temperature)
            .with_max_tokens(self.opts.max_tokens)
            .with_tag(format!("caption:{}", post.id))
            .with_template_version(self.kit.caption_version());
        let resp = self.gw.chat(&req)?;
        let text = resp.text.trim().to_string();
        if text.is_empty() {
            return Err(GatewayError::MalformedResponse {
                backend: BackendKind::Mllm.to_string(),
                message: "empty image description".into(),
            }
            .into());
        }
        Ok(Some(ImageDescription {
            post_id: post.id.clone(),
            text,
            model_id: resp.model_id,
            template_version: self.kit.caption_version().to_string(),
        }))
    }

    fn extract(&self, post_id: &str, source: &str, kind: SourceKind, tag_suffix: &str) -> Result<KeyInfoFields, DistillError> {
        let prompt = self.kit.render_keyinfo_prompt(source, kind)?;
        let version = self.kit.keyinfo_version();
        let base_tag = format!("keyinfo:{post_id}{tag_suffix}");
        let req = ChatRequest::new(BackendKind::Llm, &self.opts.llm_model, prompt.clone())
            .with_temperature(self.opts.keyinfo_temperature)
            .with_max_tokens(self.opts.max_tokens)
            .with_tag(&base_tag)
            .with_template_version(version);
        let first = self.gw.chat(&req)?;
        match parse_keyinfo(&first.text) {
            Ok(fields) => Ok(fields),
            Err(failure) => {
                debug!(post_id, problems = ?failure.problems, "key information unparsable, reprompting");
                let retry = ChatRequest::new(BackendKind::Llm, &self.opts.llm_model, prompt + FORMAT_REMINDER)
                    .with_temperature(self.opts.keyinfo_temperature)
                    .with_max_tokens(self.opts.max_tokens)
                    .with_tag(format!("{base_tag}:retry1"))
                    .with_template_version(format!("{version}#retry1"));
                let second = self.gw.chat(&retry)?;
                parse_keyinfo(&second.text).map_err(|failure| DistillError::Parse {
                    post_id: post_id.to_string(),
                    failure,
                })
            }
        }
    }

    /// Extracts key information from the post text, merged with the description when present.
    pub fn keyinfo_stage(&self, post: &Post, desc: Option<&ImageDescription>) -> Result<KeyInfo, DistillError> {
        if post.text.trim().is_empty() {
            return Err(PromptError::EmptyText.into());
        }
        let (source, fields) = match desc {
            None => (
                KeyInfoSource::PostText,
                self.extract(&post.id, &post.text, SourceKind::Post, "")?,
            ),
            Some(d) => match self.opts.keyinfo_mode {
                KeyInfoMode::Merged => (
                    KeyInfoSource::Merged,
                    self.extract(&post.id, &merged_source(&post.text, &d.text), SourceKind::Merged, "")?,
                ),
                KeyInfoMode::PerSource => {
                    let from_text = self.extract(&post.id, &post.text, SourceKind::Post, ":text")?;
                    let from_image = self.extract(&post.id, &d.text, SourceKind::ImageDescription, ":image")?;
                    let joined = from_text
                        .keywords
                        .iter()
                        .chain(&from_image.keywords)
                        .cloned()
                        .collect::<Vec<_>>()
                        .join(", ");
                    let mut keywords = split_keywords(&joined);
                    keywords.truncate(5);
                    (KeyInfoSource::Merged, KeyInfoFields { keywords, ..from_text })
                }
            },
        };
        Ok(KeyInfo::new(&post.id, source, fields))
    }

    fn one_intention(
        &self,
        post: &Post,
        desc: Option<&ImageDescription>,
        ki: &KeyInfo,
        relation: Relation,
    ) -> Result<IntentionRecord, DistillError> {
        let prompt = self
            .kit
            .render_intention_prompt(&post.text, desc.map(|d| d.text.as_str()), ki, relation)?;
        let version = self.kit.intention_version(relation);
        let req = ChatRequest::new(BackendKind::Llm, &self.opts.llm_model, prompt)
            .with_temperature(self.opts.intention_temperature)
            .with_max_tokens(self.opts.max_tokens)
            .with_tag(format!("intention:{}:{}", post.id, relation.code()))
            .with_template_version(&version);
        let resp = self.gw.chat(&req)?;
        let text = clean_sentence(&resp.text);
        let stripped_text = self.kit.prefixes().strip(&text, relation);
        if stripped_text.trim().is_empty() {
            return Err(DistillError::RelationFailed {
                post_id: post.id.clone(),
                relation,
                message: "empty intention".into(),
            });
        }
        let mut template_versions = BTreeMap::new();
        if let Some(d) = desc {
            template_versions.insert("caption".to_string(), d.template_version.clone());
        }
        template_versions.insert("keyinfo".into(), self.kit.keyinfo_version().to_string());
        template_versions.insert("intention".into(), version);
        template_versions.insert("prefixes".into(), self.kit.prefixes().version.clone());
        Ok(IntentionRecord {
            post_id: post.id.clone(),
            relation,
            text,
            stripped_text,
            provenance: Provenance {
                caption_used: desc.is_some(),
                keyinfo_digest: ki.digest(),
                template_versions,
                model_id: resp.model_id,
                temperature: self.opts.intention_temperature,
            },
        })
    }

    /// One record per relation in `relations`; failures are collected unless strict.
    pub fn intention_stage_for(
        &self,
        post: &Post,
        desc: Option<&ImageDescription>,
        ki: &KeyInfo,
        relations: &[Relation],
    ) -> Result<PartialResult, DistillError> {
        ki.validate().map_err(PromptError::InvalidKeyInfo)?;
        let mut out = PartialResult {
            records: Vec::with_capacity(relations.len()),
            failures: Vec::new(),
        };
        for &relation in relations {
            match self.one_intention(post, desc, ki, relation) {
                Ok(rec) => out.records.push(rec),
                Err(err) if self.opts.strict => {
                    return Err(match err {
                        e @ DistillError::RelationFailed { .. } => e,
                        other => DistillError::RelationFailed {
                            post_id: post.id.clone(),
                            relation,
                            message: other.to_string(),
                        },
                    })
                }
                Err(err) => {
                    warn!(post_id = %post.id, %relation, %err, "intention failed");
                    out.failures.push(RelationFailure {
                        relation,
                        message: err.to_string(),
                    });
                }
            }
        }
        Ok(out)
    }

    /// Intentions across all ten relations.
    pub fn intention_stage(&self, post: &Post, desc: Option<&ImageDescription>, ki: &KeyInfo) -> Result<PartialResult, DistillError> {
        self.intention_stage_for(post, desc, ki, &Relation::ALL)
    }

    /// Runs all stages for one post, reusing artifacts already in `kb`.
    fn process(&self, post: &Post, kb: &KnowledgeBase) -> PostOutcome {
        let mut out = PostOutcome {
            write_post: kb.post(&post.id).ok().flatten().is_none(),
            ..Default::default()
        };
        let existing_desc = kb.description(&post.id).ok().flatten();
        let desc = match existing_desc {
            Some(d) => Some(d),
            None => match self.caption_stage(post) {
                Ok(d) => {
                    out.description = d.clone();
                    d
                }
                Err(DistillError::MissingImageFile { path, .. }) if !self.opts.strict => {
                    warn!(post_id = %post.id, path = %path.display(), "image unreadable, treating post as text-only");
                    out.downgraded = true;
                    None
                }
                Err(err) => {
                    out.failure = Some(failure(post, "caption", &err));
                    return out;
                }
            },
        };
        let ki = match kb.keyinfo(&post.id).ok().flatten() {
            Some(k) => k,
            None => match self.keyinfo_stage(post, desc.as_ref()) {
                Ok(k) => {
                    out.keyinfo = Some(k.clone());
                    k
                }
                Err(err) => {
                    out.failure = Some(failure(post, "keyinfo", &err));
                    return out;
                }
            },
        };
        let present = kb.relations_present(&post.id);
        let missing: Vec<Relation> = Relation::ALL.into_iter().filter(|r| !present.contains(r)).collect();
        match self.intention_stage_for(post, desc.as_ref(), &ki, &missing) {
            Ok(partial) => {
                if !partial.is_complete() {
                    let names: Vec<&str> = partial.failures.iter().map(|f| f.relation.code()).collect();
                    out.failure = Some(PostFailure {
                        post_id: post.id.clone(),
                        stage: "intention".into(),
                        message: format!("relations failed: {}", names.join(", ")),
                    });
                }
                out.intentions = partial.records;
            }
            Err(err) => out.failure = Some(failure(post, "intention", &err)),
        }
        out
    }

    /// Runs the pipeline over `posts`, writing every artifact to `kb` in corpus order.
    ///
    /// Posts already complete in `kb` are skipped; partially processed posts
    /// resume from their stored artifacts.
    pub fn run_pipeline(&self, posts: &[Post], kb: &KnowledgeBase) -> Result<PipelineReport, DistillError> {
        if posts.is_empty() {
            return Err(DistillError::EmptyCorpus);
        }
        kb.record_template_versions(&self.kit.versions())?;
        let before = self.gw.stats();
        let mut report = PipelineReport {
            posts_total: posts.len(),
            ..Default::default()
        };
        let pending: Vec<usize> = (0..posts.len())
            .filter(|&i| {
                let done = kb.post(&posts[i].id).ok().flatten().is_some()
                    && kb.relations_present(&posts[i].id).len() == Relation::ALL.len();
                if done {
                    report.posts_resumed += 1;
                }
                !done
            })
            .collect();

        let workers = self.opts.parallel.max(1).min(pending.len().max(1));
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, PostOutcome)>();
        let write_result = thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, pending) = (&next, &pending);
                scope.spawn(move || loop {
                    let slot = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&i) = pending.get(slot) else { break };
                    let outcome = self.process(&posts[i], kb);
                    if tx.send((slot, outcome)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // Single writer: buffer out-of-order results and commit in corpus order.
            let mut buffered: HashMap<usize, PostOutcome> = HashMap::new();
            let mut cursor = 0;
            for (slot, outcome) in rx {
                buffered.insert(slot, outcome);
                while let Some(outcome) = buffered.remove(&cursor) {
                    self.commit(&posts[pending[cursor]], outcome, kb, &mut report)?;
                    cursor += 1;
                }
            }
            Ok::<(), DistillError>(())
        });
        write_result?;
        kb.sync()?;

        let after = self.gw.stats();
        report.llm_calls = after.llm_calls - before.llm_calls;
        report.mllm_calls = after.mllm_calls - before.mllm_calls;
        report.cache_hits = after.cache_hits - before.cache_hits;
        report.retries = after.retries - before.retries;
        report.posts_failed = report.failures.len();
        let attempted = pending.len();
        report.failure_rate = if attempted == 0 {
            0.0
        } else {
            report.posts_failed as f64 / attempted as f64
        };
        info!(
            completed = report.posts_completed,
            failed = report.posts_failed,
            intentions = report.intentions_written,
            "pipeline finished"
        );
        Ok(report)
    }

    fn commit(&self, post: &Post, outcome: PostOutcome, kb: &KnowledgeBase, report: &mut PipelineReport) -> Result<(), DistillError> {
        if outcome.write_post {
            let mut stored = post.clone();
            if outcome.downgraded {
                stored.image = None;
            }
            kb.append_post(&stored)?;
        }
        if let Some(d) = &outcome.description {
            kb.append_description(d)?;
            report.descriptions_written += 1;
        }
        if let Some(k) = &outcome.keyinfo {
            kb.append_keyinfo(k)?;
            report.keyinfo_written += 1;
        }
        let mut records = outcome.intentions;
        records.sort_by_key(|r| r.relation.index());
        for r in &records {
            kb.append_intention(r)?;
        }
        report.intentions_written += records.len();
        if outcome.downgraded {
            report.posts_downgraded += 1;
        }
        match outcome.failure {
            Some(f) => report.failures.push(f),
            None => report.posts_completed += 1,
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct PostOutcome {
    write_post: bool,
    downgraded: bool,
    description: Option<ImageDescription>,
    keyinfo: Option<KeyInfo>,
    intentions: Vec<IntentionRecord>,
    failure: Option<PostFailure>,
}

fn failure(post: &Post, stage: &str, err: &DistillError) -> PostFailure {
    PostFailure {
        post_id: post.id.clone(),
        stage: stage.into(),
        message: err.to_string(),
    }
}
