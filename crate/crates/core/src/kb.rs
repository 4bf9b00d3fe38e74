//! Append-only intention knowledge base: jsonl segments plus an in-memory index.
//!
//! Layout under the root directory:
//!
//! ```text
//! meta.json          schema and template versions
//! posts.jsonl        source posts
//! descriptions.jsonl image descriptions
//! keyinfo.jsonl      key information
//! intentions.jsonl   intention records
//! index.json         sidecar (post_id, relation) -> byte offset, rebuilt on open
//! ```
//!
//! A truncated or unparsable trailing line left by a crash is moved to
//! `<segment>.quarantine` on open; everything before it stays queryable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tracing::warn;

use crate::corpus::{Dataset, Post};
use crate::keyinfo::KeyInfo;
use crate::records::{ImageDescription, IntentionRecord};
use crate::relation::{Relation, RelationCounts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{segment} line {line}: {message}")]
    Corrupt {
        segment: String,
        line: u64,
        message: String,
    },
    #[error("knowledge base schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, KbError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbMeta {
    pub schema_version: u32,
    pub pipeline_version: String,
    pub template_versions: BTreeMap<String, String>,
    pub created_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Posts,
    Descriptions,
    Keyinfo,
    Intentions,
}

impl Kind {
    const ALL: [Kind; 4] = [Kind::Posts, Kind::Descriptions, Kind::Keyinfo, Kind::Intentions];

    fn file(self) -> &'static str {
        match self {
            Kind::Posts => "posts.jsonl",
            Kind::Descriptions => "descriptions.jsonl",
            Kind::Keyinfo => "keyinfo.jsonl",
            Kind::Intentions => "intentions.jsonl",
        }
    }
}

struct Segment {
    path: PathBuf,
    file: File,
    len: u64,
}

impl Segment {
    fn append_line(&mut self, line: &str) -> Result<u64> {
        let offset = self.len;
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        self.len += buf.len() as u64;
        Ok(offset)
    }
}

#[derive(Default)]
struct Index {
    posts: HashMap<String, u64>,
    post_order: Vec<String>,
    post_dataset: HashMap<String, Dataset>,
    descriptions: HashMap<String, u64>,
    keyinfo: HashMap<String, u64>,
    intentions: HashMap<(String, Relation), u64>,
    relation_counts: BTreeMap<Relation, u64>,
}

struct Inner {
    segments: Vec<Segment>,
    index: Index,
}

impl Inner {
    fn segment(&mut self, kind: Kind) -> &mut Segment {
        &mut self.segments[Kind::ALL.iter().position(|k| *k == kind).expect("known kind")]
    }
}

/// Any record kind the store accepts besides posts.
#[derive(Debug, Clone, PartialEq)]
pub enum KbRecord {
    Description(ImageDescription),
    KeyInfo(KeyInfo),
    Intention(IntentionRecord),
}

impl From<ImageDescription> for KbRecord {
    fn from(d: ImageDescription) -> Self {
        KbRecord::Description(d)
    }
}

impl From<KeyInfo> for KbRecord {
    fn from(k: KeyInfo) -> Self {
        KbRecord::KeyInfo(k)
    }
}

impl From<IntentionRecord> for KbRecord {
    fn from(r: IntentionRecord) -> Self {
        KbRecord::Intention(r)
    }
}

/// Filter for [`KnowledgeBase::query`]; unset fields match everything.
#[derive(Debug, Clone, Default)]
pub struct Query {
    pub post_ids: Option<BTreeSet<String>>,
    pub relations: Option<BTreeSet<Relation>>,
    pub dataset: Option<Dataset>,
}

impl Query {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn post_ids<I: IntoIterator<Item = S>, S: Into<String>>(mut self, ids: I) -> Self {
        self.post_ids = Some(ids.into_iter().map(Into::into).collect());
        self
    }

    pub fn relations(mut self, relations: impl IntoIterator<Item = Relation>) -> Self {
        self.relations = Some(relations.into_iter().collect());
        self
    }

    pub fn dataset(mut self, dataset: Dataset) -> Self {
        self.dataset = Some(dataset);
        self
    }
}

pub struct KnowledgeBase {
    root: PathBuf,
    inner: Mutex<Inner>,
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Scans a segment, quarantining a damaged trailing line. Returns `(offset, line)` pairs.
fn scan_segment(path: &Path) -> Result<Vec<(u64, String)>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut lines = Vec::new();
    let mut offset = 0usize;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    while offset < bytes.len() {
        let end = bytes[offset..].iter().position(|b| *b == b'\n').map(|i| offset + i);
        let (line_end, next) = match end {
            Some(e) => (e, e + 1),
            None => (bytes.len(), bytes.len()),
        };
        let text = std::str::from_utf8(&bytes[offset..line_end]).ok();
        let valid = end.is_some() && text.is_some_and(|t| serde_json::from_str::<serde_json::Value>(t).is_ok());
        if !valid {
            if next < bytes.len() {
                return Err(KbError::Corrupt {
                    segment: name,
                    line: lines.len() as u64 + 1,
                    message: "unparsable record before end of segment".into(),
                });
            }
            let quarantine = path.with_extension("jsonl.quarantine");
            let mut q = OpenOptions::new().create(true).append(true).open(&quarantine)?;
            q.write_all(&bytes[offset..])?;
            q.write_all(b"\n")?;
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(offset as u64)?;
            warn!(segment = %name, offset, "quarantined damaged trailing record");
            break;
        }
        lines.push((offset as u64, text.unwrap_or_default().to_string()));
        offset = next;
    }
    Ok(lines)
}

fn parse<T: DeserializeOwned>(kind: Kind, line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| KbError::Corrupt {
        segment: kind.file().to_string(),
        line: line_no as u64 + 1,
        message: e.to_string(),
    })
}

impl KnowledgeBase {
    /// Opens (creating if needed) the knowledge base at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let meta_path = root.join("meta.json");
        if meta_path.exists() {
            let meta: KbMeta = serde_json::from_slice(&fs::read(&meta_path)?).map_err(|e| KbError::Corrupt {
                segment: "meta.json".into(),
                line: 1,
                message: e.to_string(),
            })?;
            if meta.schema_version != SCHEMA_VERSION {
                return Err(KbError::SchemaVersion {
                    found: meta.schema_version,
                });
            }
        } else {
            let meta = KbMeta {
                schema_version: SCHEMA_VERSION,
                pipeline_version: env!("CARGO_PKG_VERSION").to_string(),
                template_versions: BTreeMap::new(),
                created_at: now_secs(),
            };
            fs::write(&meta_path, serde_json::to_vec_pretty(&meta).map_err(io::Error::other)?)?;
        }

        let mut index = Index::default();
        let mut segments = Vec::new();
        for kind in Kind::ALL {
            let path = root.join(kind.file());
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            let lines = scan_segment(&path)?;
            for (i, (offset, line)) in lines.iter().enumerate() {
                match kind {
                    Kind::Posts => {
                        let p: Post = parse(kind, i, line)?;
                        index.post_dataset.insert(p.id.clone(), p.dataset);
                        index.post_order.push(p.id.clone());
                        index.posts.insert(p.id, *offset);
                    }
                    Kind::Descriptions => {
                        let d: ImageDescription = parse(kind, i, line)?;
                        index.descriptions.insert(d.post_id, *offset);
                    }
                    Kind::Keyinfo => {
                        let k: KeyInfo = parse(kind, i, line)?;
                        index.keyinfo.insert(k.post_id, *offset);
                    }
                    Kind::Intentions => {
                        let r: IntentionRecord = parse(kind, i, line)?;
                        *index.relation_counts.entry(r.relation).or_default() += 1;
                        index.intentions.insert((r.post_id, r.relation), *offset);
                    }
                }
            }
            let len = file.metadata()?.len();
            segments.push(Segment { path, file, len });
        }
        let kb = Self {
            root,
            inner: Mutex::new(Inner { segments, index }),
        };
        kb.write_index()?;
        Ok(kb)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("knowledge base lock poisoned")
    }

    pub fn meta(&self) -> Result<KbMeta> {
        let bytes = fs::read(self.root.join("meta.json"))?;
        serde_json::from_slice(&bytes).map_err(|e| KbError::Corrupt {
            segment: "meta.json".into(),
            line: 1,
            message: e.to_string(),
        })
    }

    /// Merges template versions into `meta.json`.
    pub fn record_template_versions(&self, versions: &BTreeMap<String, String>) -> Result<()> {
        let _guard = self.lock();
        let mut meta = self.meta()?;
        meta.template_versions.extend(versions.iter().map(|(k, v)| (k.clone(), v.clone())));
        let path = self.root.join("meta.json");
        let tmp = self.root.join("meta.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&meta).map_err(io::Error::other)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn append(&self, record: impl Into<KbRecord>) -> Result<()> {
        match record.into() {
            KbRecord::Description(d) => self.append_description(&d),
            KbRecord::KeyInfo(k) => self.append_keyinfo(&k),
            KbRecord::Intention(r) => self.append_intention(&r),
        }
    }

    pub fn append_post(&self, post: &Post) -> Result<()> {
        let mut inner = self.lock();
        if inner.index.posts.contains_key(&post.id) {
            return Err(KbError::DuplicateKey(format!("post {}", post.id)));
        }
        let line = serde_json::to_string(post).map_err(io::Error::other)?;
        let offset = inner.segment(Kind::Posts).append_line(&line)?;
        inner.index.posts.insert(post.id.clone(), offset);
        inner.index.post_order.push(post.id.clone());
        inner.index.post_dataset.insert(post.id.clone(), post.dataset);
        Ok(())
    }

    pub fn append_description(&self, d: &ImageDescription) -> Result<()> {
        if d.text.trim().is_empty() {
            return Err(KbError::InvalidRecord(format!("empty description for {}", d.post_id)));
        }
        let mut inner = self.lock();
        if inner.index.descriptions.contains_key(&d.post_id) {
            return Err(KbError::DuplicateKey(format!("description {}", d.post_id)));
        }
        let line = serde_json::to_string(d).map_err(io::Error::other)?;
        let offset = inner.segment(Kind::Descriptions).append_line(&line)?;
        inner.index.descriptions.insert(d.post_id.clone(), offset);
        Ok(())
    }

    pub fn append_keyinfo(&self, k: &KeyInfo) -> Result<()> {
        k.validate().map_err(KbError::InvalidRecord)?;
        let mut inner = self.lock();
        if inner.index.keyinfo.contains_key(&k.post_id) {
            return Err(KbError::DuplicateKey(format!("keyinfo {}", k.post_id)));
        }
        let line = serde_json::to_string(k).map_err(io::Error::other)?;
        let offset = inner.segment(Kind::Keyinfo).append_line(&line)?;
        inner.index.keyinfo.insert(k.post_id.clone(), offset);
        Ok(())
    }

    pub fn append_intention(&self, r: &IntentionRecord) -> Result<()> {
        if r.stripped_text.trim().is_empty() {
            return Err(KbError::InvalidRecord(format!(
                "empty stripped text for ({}, {})",
                r.post_id, r.relation
            )));
        }
        let mut inner = self.lock();
        let key = (r.post_id.clone(), r.relation);
        if inner.index.intentions.contains_key(&key) {
            return Err(KbError::DuplicateKey(format!("intention ({}, {})", r.post_id, r.relation)));
        }
        let line = serde_json::to_string(r).map_err(io::Error::other)?;
        let offset = inner.segment(Kind::Intentions).append_line(&line)?;
        inner.index.intentions.insert(key, offset);
        *inner.index.relation_counts.entry(r.relation).or_default() += 1;
        Ok(())
    }

    fn read_at<T: DeserializeOwned>(&self, kind: Kind, offset: u64) -> Result<T> {
        let path = self.root.join(kind.file());
        let mut f = File::open(path)?;
        f.seek(SeekFrom::Start(offset))?;
        let mut line = String::new();
        BufReader::new(f).read_line(&mut line)?;
        parse(kind, 0, line.trim_end())
    }

    pub fn post(&self, post_id: &str) -> Result<Option<Post>> {
        let offset = self.lock().index.posts.get(post_id).copied();
        offset.map(|o| self.read_at(Kind::Posts, o)).transpose()
    }

    /// Post ids in append order.
    pub fn post_ids(&self) -> Vec<String> {
        self.lock().index.post_order.clone()
    }

    pub fn posts(&self) -> Result<Vec<Post>> {
        self.read_segment(Kind::Posts)
    }

    pub fn description(&self, post_id: &str) -> Result<Option<ImageDescription>> {
        let offset = self.lock().index.descriptions.get(post_id).copied();
        offset.map(|o| self.read_at(Kind::Descriptions, o)).transpose()
    }

    pub fn keyinfo(&self, post_id: &str) -> Result<Option<KeyInfo>> {
        let offset = self.lock().index.keyinfo.get(post_id).copied();
        offset.map(|o| self.read_at(Kind::Keyinfo, o)).transpose()
    }

    pub fn has_keyinfo_digest(&self, post_id: &str, digest: &str) -> Result<bool> {
        Ok(self.keyinfo(post_id)?.is_some_and(|k| k.digest() == digest))
    }

    pub fn intention(&self, post_id: &str, relation: Relation) -> Result<Option<IntentionRecord>> {
        let offset = self
            .lock()
            .index
            .intentions
            .get(&(post_id.to_string(), relation))
            .copied();
        offset.map(|o| self.read_at(Kind::Intentions, o)).transpose()
    }

    /// The post's intention records in taxonomy order.
    pub fn intentions_for(&self, post_id: &str) -> Result<Vec<IntentionRecord>> {
        let mut out = Vec::new();
        for r in Relation::ALL {
            if let Some(rec) = self.intention(post_id, r)? {
                out.push(rec);
            }
        }
        Ok(out)
    }

    pub fn relations_present(&self, post_id: &str) -> BTreeSet<Relation> {
        let inner = self.lock();
        Relation::ALL
            .into_iter()
            .filter(|r| inner.index.intentions.contains_key(&(post_id.to_string(), *r)))
            .collect()
    }

    fn committed_len(&self, kind: Kind) -> u64 {
        self.lock().segment(kind).len
    }

    fn read_segment<T: DeserializeOwned>(&self, kind: Kind) -> Result<Vec<T>> {
        let len = self.committed_len(kind);
        let f = File::open(self.root.join(kind.file()))?;
        let reader = BufReader::new(f.take(len));
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(parse(kind, i, &line)?);
            }
        }
        Ok(out)
    }

    /// Intention records matching every set predicate, in append order.
    pub fn query(&self, q: &Query) -> Result<Vec<IntentionRecord>> {
        let (offsets, len) = {
            let mut inner = self.lock();
            let len = inner.segment(Kind::Intentions).len;
            let idx = &inner.index;
            let mut offsets: Vec<u64> = idx
                .intentions
                .iter()
                .filter(|((post, rel), _)| {
                    q.post_ids.as_ref().is_none_or(|ids| ids.contains(post))
                        && q.relations.as_ref().is_none_or(|rs| rs.contains(rel))
                        && q.dataset.is_none_or(|d| idx.post_dataset.get(post) == Some(&d))
                })
                .map(|(_, off)| *off)
                .collect();
            offsets.sort_unstable();
            (offsets, len)
        };
        if offsets.is_empty() {
            return Ok(Vec::new());
        }
        let f = File::open(self.root.join(Kind::Intentions.file()))?;
        let mut reader = BufReader::new(f.take(len));
        let mut out = Vec::with_capacity(offsets.len());
        let mut pos = 0u64;
        let mut wanted = offsets.into_iter().peekable();
        let mut line = String::new();
        while let Some(&next) = wanted.peek() {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            if pos == next {
                out.push(parse(Kind::Intentions, 0, line.trim_end())?);
                wanted.next();
            }
            pos += n as u64;
        }
        Ok(out)
    }

    pub fn stats(&self) -> RelationCounts {
        let inner = self.lock();
        RelationCounts::from_counts(inner.index.relation_counts.iter().map(|(r, n)| (*r, *n)))
    }

    pub fn post_count(&self) -> usize {
        self.lock().index.posts.len()
    }

    /// Writes the sidecar index (sorted by segment and offset).
    pub fn write_index(&self) -> Result<()> {
        let inner = self.lock();
        let mut intentions: Vec<(&String, &Relation, &u64)> =
            inner.index.intentions.iter().map(|((p, r), o)| (p, r, o)).collect();
        intentions.sort_by_key(|(_, _, o)| **o);
        fn sorted(m: &HashMap<String, u64>) -> Vec<(&String, &u64)> {
            let mut v: Vec<(&String, &u64)> = m.iter().collect();
            v.sort_by_key(|(_, o)| **o);
            v
        }
        let doc = json!({
            "posts": sorted(&inner.index.posts),
            "descriptions": sorted(&inner.index.descriptions),
            "keyinfo": sorted(&inner.index.keyinfo),
            "intentions": intentions,
        });
        let tmp = self.root.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&doc).map_err(io::Error::other)?)?;
        fs::rename(tmp, self.root.join("index.json"))?;
        Ok(())
    }

    /// Flushes segment data to disk and refreshes the sidecar index.
    pub fn sync(&self) -> Result<()> {
        {
            let inner = self.lock();
            for seg in &inner.segments {
                seg.file.sync_data()?;
            }
        }
        self.write_index()
    }

    pub fn segment_paths(&self) -> Vec<PathBuf> {
        self.lock().segments.iter().map(|s| s.path.clone()).collect()
    }
}
