//! Session state: scoring, aggregation, review and benchmark export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use miko_core::eval::{write_benchmark, BenchmarkEntry, BenchmarkManifest};
use miko_core::{KnowledgeBase, Relation};
use tracing::{info, warn};

use crate::error::{AnnotationError, Result};
use crate::log::{Event, EventLog};
use crate::model::{
    check_value, combine, Agreement, AnnotationScore, Decision, NextTask, PostAggregate, Ratio, ReviewRecord,
    ReviewStatus, Task,
};
use crate::pool::Pool;

pub const POOL_FILE: &str = "pool.json";
pub const EVENTS_FILE: &str = "events.jsonl";
/// Posts whose combined total exceeds this go to manual review.
pub const ELIGIBILITY_THRESHOLD: i128 = 5;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// When set, only these annotator ids may fetch tasks or submit scores.
    pub allowlist: Option<BTreeSet<String>>,
    pub lease_ttl: Duration,
    pub agreement: Agreement,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            allowlist: None,
            lease_ttl: Duration::from_secs(15 * 60),
            agreement: Agreement::Mean,
        }
    }
}

type Scores = BTreeMap<Relation, BTreeMap<String, i8>>;

#[derive(Default)]
struct State {
    /// post -> relation -> annotator -> value
    scores: HashMap<String, Scores>,
    reviews: HashMap<String, ReviewRecord>,
    /// annotator -> (post, lease expiry)
    leases: HashMap<String, (String, Instant)>,
}

impl State {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Score(s) => {
                self.scores
                    .entry(s.post_id)
                    .or_default()
                    .entry(s.relation)
                    .or_default()
                    .insert(s.annotator_id, s.value);
            }
            Event::Review(r) => {
                self.reviews.entry(r.post_id.clone()).or_insert(r);
            }
        }
    }

    fn scored_by(&self, post_id: &str, annotator: &str) -> BTreeMap<Relation, i8> {
        self.scores
            .get(post_id)
            .map(|rels| {
                rels.iter()
                    .filter_map(|(r, by)| by.get(annotator).map(|v| (*r, *v)))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn done_by(&self, post_id: &str, annotator: &str) -> bool {
        self.scored_by(post_id, annotator).len() == Relation::ALL.len()
    }

    fn complete_annotators(&self, post_id: &str) -> usize {
        let Some(rels) = self.scores.get(post_id) else { return 0 };
        let annotators: BTreeSet<&String> = rels.values().flat_map(|by| by.keys()).collect();
        annotators
            .into_iter()
            .filter(|a| Relation::ALL.iter().all(|r| rels.get(r).is_some_and(|by| by.contains_key(*a))))
            .count()
    }
}

struct Combined {
    per_relation: BTreeMap<Relation, Ratio>,
    total: Ratio,
}

pub struct AnnotationService {
    kb: Arc<KnowledgeBase>,
    pool: Vec<String>,
    pool_index: HashMap<String, usize>,
    cfg: ServiceConfig,
    log: EventLog,
    state: Mutex<State>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl AnnotationService {
    /// Starts a new session in `dir` with the given pool.
    pub fn create(dir: &Path, kb: Arc<KnowledgeBase>, pool: &Pool, cfg: ServiceConfig) -> Result<Self> {
        if pool.post_ids.is_empty() {
            return Err(AnnotationError::EmptyPool);
        }
        fs::create_dir_all(dir)?;
        pool.save(&dir.join(POOL_FILE))?;
        Self::open(dir, kb, cfg)
    }

    /// Reopens a session, replaying its event log.
    pub fn open(dir: &Path, kb: Arc<KnowledgeBase>, cfg: ServiceConfig) -> Result<Self> {
        let pool = Pool::load(&dir.join(POOL_FILE))?;
        if pool.post_ids.is_empty() {
            return Err(AnnotationError::EmptyPool);
        }
        let pool_index: HashMap<String, usize> =
            pool.post_ids.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let (log, events) = EventLog::open(dir.join(EVENTS_FILE))?;
        let mut state = State::default();
        let n = events.len();
        for event in events {
            let post = match &event {
                Event::Score(s) => &s.post_id,
                Event::Review(r) => &r.post_id,
            };
            if pool_index.contains_key(post) {
                state.apply(event);
            } else {
                warn!(post_id = %post, "event for a post outside the pool ignored");
            }
        }
        info!(events = n, posts = pool.post_ids.len(), "annotation session opened");
        Ok(Self {
            kb,
            pool: pool.post_ids,
            pool_index,
            cfg,
            log,
            state: Mutex::new(state),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().expect("annotation state poisoned")
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn log_path(&self) -> PathBuf {
        self.log.path().to_path_buf()
    }

    fn check_annotator(&self, annotator: &str) -> Result<()> {
        match &self.cfg.allowlist {
            Some(allowed) if !allowed.contains(annotator) => Err(AnnotationError::UnknownAnnotator(annotator.to_string())),
            _ => Ok(()),
        }
    }

    fn task_for(&self, post_id: &str, scored: BTreeMap<Relation, i8>) -> Result<Task> {
        let post = self
            .kb
            .post(post_id)?
            .ok_or_else(|| AnnotationError::UnknownPost(post_id.to_string()))?;
        let intentions = self.kb.intentions_for(post_id)?;
        Ok(Task {
            image_ref: post.image.as_ref().map(|i| format!("/images/{i}")),
            post,
            intentions,
            scored,
        })
    }

    /// The next post for `annotator`: the pool post with the fewest complete
    /// annotations that this annotator has not finished, preferring posts not
    /// leased to someone else. Re-fetching before finishing returns the same post.
    pub fn next_task(&self, annotator: &str) -> Result<NextTask> {
        self.check_annotator(annotator)?;
        let now = Instant::now();
        let chosen = {
            let mut st = self.lock();
            st.leases.retain(|_, (_, expiry)| *expiry > now);
            let held = st
                .leases
                .get(annotator)
                .map(|(p, _)| p.clone())
                .filter(|p| !st.done_by(p, annotator) && !st.reviews.contains_key(p));
            let chosen = held.or_else(|| {
                let leased_by_others: BTreeSet<&String> = st
                    .leases
                    .iter()
                    .filter(|(a, _)| a.as_str() != annotator)
                    .map(|(_, (p, _))| p)
                    .collect();
                self.pool
                    .iter()
                    .filter(|p| !st.done_by(p, annotator) && !st.reviews.contains_key(*p))
                    .min_by_key(|p| {
                        (
                            leased_by_others.contains(p),
                            st.complete_annotators(p),
                            self.pool_index[*p],
                        )
                    })
                    .cloned()
            });
            if let Some(p) = &chosen {
                st.leases.insert(annotator.to_string(), (p.clone(), now + self.cfg.lease_ttl));
            }
            chosen.map(|p| {
                let scored = st.scored_by(&p, annotator);
                (p, scored)
            })
        };
        match chosen {
            None => Ok(NextTask::Done),
            Some((post_id, scored)) => Ok(NextTask::Task(Box::new(self.task_for(&post_id, scored)?))),
        }
    }

    /// Records a score, replacing this annotator's earlier value for the same relation.
    pub fn submit_score(&self, post_id: &str, relation: Relation, annotator: &str, value: i64) -> Result<()> {
        let value = check_value(value)?;
        self.check_annotator(annotator)?;
        if !self.pool_index.contains_key(post_id) {
            return Err(AnnotationError::UnknownTask {
                post_id: post_id.to_string(),
                relation,
            });
        }
        let mut st = self.lock();
        if st.reviews.contains_key(post_id) {
            return Err(AnnotationError::AlreadyReviewed(post_id.to_string()));
        }
        let current = st
            .scores
            .get(post_id)
            .and_then(|rels| rels.get(&relation))
            .and_then(|by| by.get(annotator))
            .copied();
        if current == Some(value) {
            return Ok(());
        }
        let event = Event::Score(AnnotationScore {
            post_id: post_id.to_string(),
            relation,
            annotator_id: annotator.to_string(),
            value,
            timestamp: now_ms(),
        });
        self.log.append(&event)?;
        st.apply(event);
        if st.done_by(post_id, annotator) && st.leases.get(annotator).is_some_and(|(p, _)| p == post_id) {
            st.leases.remove(annotator);
        }
        Ok(())
    }

    fn combined(&self, scores: &Scores) -> Combined {
        let per_relation: BTreeMap<Relation, Ratio> = scores
            .iter()
            .filter(|(_, by)| !by.is_empty())
            .map(|(r, by)| {
                let values: Vec<i8> = by.values().copied().collect();
                (*r, combine(&values, self.cfg.agreement))
            })
            .collect();
        let total = per_relation.values().fold(Ratio::ZERO, |acc, v| acc + *v);
        Combined { per_relation, total }
    }

    fn aggregate_locked(&self, st: &State, post_id: &str) -> Option<(PostAggregate, Combined)> {
        let scores = st.scores.get(post_id)?;
        let c = self.combined(scores);
        let eligible = c.total.gt_int(ELIGIBILITY_THRESHOLD);
        let review_status = match st.reviews.get(post_id) {
            Some(r) => match r.decision {
                Decision::Admit => ReviewStatus::Admitted,
                Decision::Reject => ReviewStatus::Rejected,
            },
            None if eligible => ReviewStatus::Pending,
            None => ReviewStatus::NotEligible,
        };
        let agg = PostAggregate {
            post_id: post_id.to_string(),
            per_relation_score: c.per_relation.iter().map(|(r, v)| (*r, v.to_f64())).collect(),
            total: c.total.to_f64(),
            eligible,
            review_status,
            complete_annotators: st.complete_annotators(post_id),
        };
        Some((agg, c))
    }

    /// Aggregates for every pool post with at least one score, in pool order.
    pub fn aggregate(&self) -> Vec<PostAggregate> {
        let st = self.lock();
        self.pool
            .iter()
            .filter_map(|p| self.aggregate_locked(&st, p).map(|(a, _)| a))
            .collect()
    }

    pub fn aggregate_post(&self, post_id: &str) -> Option<PostAggregate> {
        let st = self.lock();
        self.aggregate_locked(&st, post_id).map(|(a, _)| a)
    }

    /// Eligible posts awaiting a decision.
    pub fn review_queue(&self) -> Vec<PostAggregate> {
        self.aggregate()
            .into_iter()
            .filter(|a| a.review_status == ReviewStatus::Pending)
            .collect()
    }

    /// Admits or rejects an eligible post. Relations whose combined score is
    /// below 1 may be excluded from an admission.
    pub fn review_decision(
        &self,
        post_id: &str,
        decision: Decision,
        reviewer_id: &str,
        excluded: &[Relation],
    ) -> Result<()> {
        if !self.pool_index.contains_key(post_id) {
            return Err(AnnotationError::UnknownPost(post_id.to_string()));
        }
        let mut st = self.lock();
        if st.reviews.contains_key(post_id) {
            return Err(AnnotationError::AlreadyReviewed(post_id.to_string()));
        }
        let Some((agg, combined)) = self.aggregate_locked(&st, post_id) else {
            return Err(AnnotationError::NotEligible {
                post_id: post_id.to_string(),
                total: 0.0,
            });
        };
        if !agg.eligible {
            return Err(AnnotationError::NotEligible {
                post_id: post_id.to_string(),
                total: agg.total,
            });
        }
        let excluded: BTreeSet<Relation> = excluded.iter().copied().collect();
        for r in &excluded {
            let mean = combined.per_relation.get(r).copied().unwrap_or(Ratio::ZERO);
            if !mean.lt_int(1) {
                return Err(AnnotationError::InvalidExclusion {
                    post_id: post_id.to_string(),
                    relation: *r,
                    mean: mean.to_f64(),
                });
            }
        }
        let event = Event::Review(ReviewRecord {
            post_id: post_id.to_string(),
            decision,
            reviewer_id: reviewer_id.to_string(),
            excluded_relations: excluded.into_iter().collect(),
            timestamp: now_ms(),
        });
        self.log.append(&event)?;
        st.apply(event);
        Ok(())
    }

    /// Gold entries from admitted posts, in pool then taxonomy order.
    pub fn benchmark_entries(&self) -> Result<Vec<BenchmarkEntry>> {
        let admitted: Vec<ReviewRecord> = {
            let st = self.lock();
            self.pool
                .iter()
                .filter_map(|p| st.reviews.get(p))
                .filter(|r| r.decision == Decision::Admit)
                .cloned()
                .collect()
        };
        let mut entries = Vec::new();
        for review in admitted {
            for rec in self.kb.intentions_for(&review.post_id)? {
                if review.excluded_relations.contains(&rec.relation) || rec.stripped_text.trim().is_empty() {
                    continue;
                }
                entries.push(BenchmarkEntry {
                    post_id: rec.post_id,
                    relation: rec.relation,
                    gold_text: rec.stripped_text,
                    source_provenance: rec.provenance,
                });
            }
        }
        Ok(entries)
    }

    pub fn benchmark_manifest(&self) -> Result<BenchmarkManifest> {
        let entries = self.benchmark_entries()?;
        if entries.is_empty() {
            return Err(AnnotationError::EmptyBenchmark);
        }
        Ok(BenchmarkManifest::from_entries(&entries))
    }

    /// Writes the benchmark jsonl to `out` and its manifest to `<out stem>.manifest.json`.
    pub fn export_benchmark(&self, out: &Path) -> Result<BenchmarkManifest> {
        let entries = self.benchmark_entries()?;
        if entries.is_empty() {
            return Err(AnnotationError::EmptyBenchmark);
        }
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(out)?);
        let manifest = write_benchmark(&entries, &mut w).map_err(|e| match e {
            miko_core::eval::EvalError::Io(io) => AnnotationError::Io(io),
            other => AnnotationError::Io(std::io::Error::other(other.to_string())),
        })?;
        w.flush()?;
        let manifest_path = manifest_path(out);
        fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?)?;
        Ok(manifest)
    }

    /// Every stored score as `post_id,relation,annotator_id,value` rows.
    pub fn write_typicality_csv(&self, out: impl Write) -> Result<usize> {
        let st = self.lock();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["post_id", "relation", "annotator_id", "value"])
            .map_err(std::io::Error::other)?;
        let mut rows = 0;
        for post in &self.pool {
            let Some(rels) = st.scores.get(post) else { continue };
            for (r, by) in rels {
                for (annotator, v) in by {
                    w.write_record([post.as_str(), r.code(), annotator.as_str(), &v.to_string()])
                        .map_err(std::io::Error::other)?;
                    rows += 1;
                }
            }
        }
        w.flush()?;
        Ok(rows)
    }

    /// Score counts per relation and value, for distribution plots.
    pub fn typicality_distribution(&self) -> BTreeMap<Relation, BTreeMap<i8, u64>> {
        let st = self.lock();
        let mut out: BTreeMap<Relation, BTreeMap<i8, u64>> = BTreeMap::new();
        for rels in st.scores.values() {
            for (r, by) in rels {
                for v in by.values() {
                    *out.entry(*r).or_default().entry(*v).or_default() += 1;
                }
            }
        }
        out
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("benchmark");
    out.with_file_name(format!("{stem}.manifest.json"))
}
