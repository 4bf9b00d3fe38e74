//! Corpus ingestion: per-dataset adapters, normalization and the missing-image cleaning rule.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataset {
    Twitter2015,
    Twitter2017,
    Twitter100k,
    TwitterSarcasm,
    Generic,
}

impl Dataset {
    pub const ALL: [Dataset; 5] = [
        Dataset::Twitter2015,
        Dataset::Twitter2017,
        Dataset::Twitter100k,
        Dataset::TwitterSarcasm,
        Dataset::Generic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Twitter2015 => "Twitter2015",
            Dataset::Twitter2017 => "Twitter2017",
            Dataset::Twitter100k => "Twitter100k",
            Dataset::TwitterSarcasm => "TwitterSarcasm",
            Dataset::Generic => "Generic",
        }
    }

    /// Only the sarcasm corpus and generic input carry task labels.
    pub fn carries_labels(self) -> bool {
        matches!(self, Dataset::TwitterSarcasm | Dataset::Generic)
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Dataset::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| format!("unknown dataset `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Unsplit,
}

impl Split {
    fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "dev" | "valid" | "validation" | "val" => Some(Split::Dev),
            "test" => Some(Split::Test),
            "" | "unsplit" => Some(Split::Unsplit),
            _ => None,
        }
    }

    fn as_json(self) -> Value {
        match self {
            Split::Train => json!("train"),
            Split::Dev => json!("dev"),
            Split::Test => json!("test"),
            Split::Unsplit => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Tsv,
    Jsonl,
    Csv,
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(SourceFormat::Tsv),
            "jsonl" => Ok(SourceFormat::Jsonl),
            "csv" => Ok(SourceFormat::Csv),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// One social-media item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub dataset: Dataset,
    /// Raw post text; hashtags, misspellings and abbreviations are kept.
    pub text: String,
    /// Image path relative to the corpus image root.
    pub image: Option<String>,
    pub label: Option<i64>,
    pub split: Split,
}

impl Post {
    pub fn text_only(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            dataset: Dataset::Generic,
            text: text.into(),
            image: None,
            label: None,
            split: Split::Unsplit,
        }
    }

    pub fn with_image(mut self, image: impl Into<String>) -> Self {
        self.image = Some(image.into());
        self
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn has_image(&self) -> bool {
        self.image.is_some()
    }

    /// The generic jsonl representation.
    pub fn to_generic_json(&self) -> Value {
        json!({
            "id": self.id,
            "text": self.text,
            "image": self.image,
            "label": self.label,
            "split": self.split.as_json(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub dataset: Dataset,
    /// Well-formed records with a unique id.
    pub total_raw: u64,
    pub total_kept: u64,
    pub dropped_missing_image: u64,
    pub skipped_malformed: u64,
    pub duplicate_ids: u64,
    pub source_uri: String,
    pub checksum: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {uri}: {source}")]
    UnreadableSource {
        uri: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed record at line {line_no}: {reason}")]
    MalformedRecord { line_no: u64, reason: String },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Drop posts without an image and count them in the manifest.
    pub require_image: bool,
    /// Fail on the first malformed or duplicate record instead of skipping it.
    pub strict: bool,
}

struct RawRecord {
    line_no: u64,
    id: Option<String>,
    text: Option<String>,
    image: Option<String>,
    label: Option<String>,
    split: Option<String>,
}

fn strip_bom(s: &str) -> &str {
    s.strip_prefix('\u{feff}').unwrap_or(s)
}

fn normalize_text(s: &str) -> String {
    strip_bom(s).trim_end().to_string()
}

fn nonempty(s: Option<String>) -> Option<String> {
    s.map(|v| strip_bom(&v).trim().to_string()).filter(|v| !v.is_empty())
}

fn build_post(dataset: Dataset, raw: RawRecord) -> Result<Post, String> {
    let id = nonempty(raw.id).ok_or("missing id")?;
    let text = raw.text.as_deref().map(normalize_text).unwrap_or_default();
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    let image_column_absent = raw.image.is_none();
    let image = nonempty(raw.image).or_else(|| {
        // The sarcasm release names images after tweet ids.
        (dataset == Dataset::TwitterSarcasm && image_column_absent).then(|| format!("{id}.jpg"))
    });
    let label = if dataset.carries_labels() {
        match nonempty(raw.label) {
            None => None,
            Some(l) => Some(l.parse::<i64>().map_err(|_| format!("label `{l}` is not an integer"))?),
        }
    } else {
        None
    };
    if dataset == Dataset::TwitterSarcasm && !matches!(label, None | Some(0) | Some(1)) {
        return Err(format!("sarcasm label {label:?} outside {{0, 1}}"));
    }
    let split = match raw.split {
        None => Split::Unsplit,
        Some(s) => Split::parse(&s).ok_or_else(|| format!("unknown split `{s}`"))?,
    };
    Ok(Post {
        id,
        dataset,
        text,
        image,
        label,
        split,
    })
}

fn json_field(v: &Value, key: &str) -> Result<Option<String>, String> {
    match v.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(Value::Bool(b)) => Ok(Some((*b as u8).to_string())),
        Some(other) => Err(format!("field `{key}` has unsupported value {other}")),
    }
}

/// A parsed row, or the line number and reason it was rejected.
type RawRow = Result<RawRecord, (u64, String)>;

fn read_jsonl(body: &str) -> Vec<RawRow> {
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let line_no = i as u64 + 1;
            let v: Value = serde_json::from_str(strip_bom(line)).map_err(|e| (line_no, e.to_string()))?;
            if !v.is_object() {
                return Err((line_no, "not a json object".into()));
            }
            let field = |k: &str| json_field(&v, k).map_err(|e| (line_no, e));
            Ok(RawRecord {
                line_no,
                id: field("id")?,
                text: field("text")?,
                image: field("image")?,
                label: field("label")?,
                split: field("split")?,
            })
        })
        .collect()
}

const ID_COLUMNS: &[&str] = &["id", "index", "tweet_id", "post_id"];
const TEXT_COLUMNS: &[&str] = &["text", "#3 string", "string", "tweet", "content"];
const IMAGE_COLUMNS: &[&str] = &["image", "#2 imageid", "imageid", "image_id", "img"];
const LABEL_COLUMNS: &[&str] = &["label", "sarcasm"];
const SPLIT_COLUMNS: &[&str] = &["split"];

fn find_column(headers: &[String], aliases: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| aliases.iter().any(|a| h.trim().eq_ignore_ascii_case(a)))
}

fn read_delimited(body: &str, delimiter: u8) -> Result<Vec<RawRow>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .quoting(delimiter != b'\t')
        .from_reader(body.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|h| strip_bom(h).to_string())
        .collect();
    let id_col = find_column(&headers, ID_COLUMNS).ok_or("no id column in header")?;
    let text_col = find_column(&headers, TEXT_COLUMNS).ok_or("no text column in header")?;
    let image_col = find_column(&headers, IMAGE_COLUMNS);
    let label_col = find_column(&headers, LABEL_COLUMNS);
    let split_col = find_column(&headers, SPLIT_COLUMNS);

    Ok(reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| (e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
            let line_no = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != headers.len() {
                return Err((line_no, format!("expected {} fields, found {}", headers.len(), rec.len())));
            }
            let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::to_string);
            Ok(RawRecord {
                line_no,
                id: get(Some(id_col)),
                text: get(Some(text_col)),
                image: image_col.map(|c| rec.get(c).unwrap_or_default().to_string()),
                label: get(label_col),
                split: get(split_col),
            })
        })
        .collect())
}

/// Digest of the kept posts in their generic jsonl form.
pub fn checksum(posts: &[Post]) -> String {
    let mut hasher = Sha256::new();
    for p in posts {
        hasher.update(p.to_generic_json().to_string().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Parses a corpus from a reader. `source_uri` is recorded in the manifest only.
pub fn ingest_reader(
    mut reader: impl Read,
    source_uri: &str,
    dataset: Dataset,
    format: SourceFormat,
    opts: IngestOptions,
) -> Result<(Vec<Post>, CorpusManifest), CorpusError> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|source| CorpusError::UnreadableSource {
            uri: source_uri.to_string(),
            source,
        })?;
    let body = String::from_utf8_lossy(&bytes);
    let records = match format {
        SourceFormat::Jsonl => read_jsonl(&body),
        SourceFormat::Tsv | SourceFormat::Csv if body.trim().is_empty() => Vec::new(),
        SourceFormat::Tsv => read_delimited(&body, b'\t').map_err(|reason| CorpusError::MalformedRecord { line_no: 1, reason })?,
        SourceFormat::Csv => read_delimited(&body, b',').map_err(|reason| CorpusError::MalformedRecord { line_no: 1, reason })?,
    };

    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let (mut total_raw, mut dropped, mut malformed, mut duplicates) = (0u64, 0u64, 0u64, 0u64);
    for rec in records {
        let post = rec.and_then(|raw| {
            let line_no = raw.line_no;
            build_post(dataset, raw).map_err(|reason| (line_no, reason))
        });
        let post = match post {
            Ok(p) => p,
            Err((line_no, reason)) => {
                if opts.strict {
                    return Err(CorpusError::MalformedRecord { line_no, reason });
                }
                warn!(line_no, %reason, "skipping malformed record");
                malformed += 1;
                continue;
            }
        };
        if !seen.insert(post.id.clone()) {
            if opts.strict {
                return Err(CorpusError::MalformedRecord {
                    line_no: 0,
                    reason: format!("duplicate id `{}`", post.id),
                });
            }
            duplicates += 1;
            continue;
        }
        total_raw += 1;
        if opts.require_image && !post.has_image() {
            dropped += 1;
            continue;
        }
        kept.push(post);
    }
    let manifest = CorpusManifest {
        dataset,
        total_raw,
        total_kept: kept.len() as u64,
        dropped_missing_image: dropped,
        skipped_malformed: malformed,
        duplicate_ids: duplicates,
        source_uri: source_uri.to_string(),
        checksum: checksum(&kept),
    };
    Ok((kept, manifest))
}

pub fn ingest(
    source: &Path,
    dataset: Dataset,
    format: SourceFormat,
    opts: IngestOptions,
) -> Result<(Vec<Post>, CorpusManifest), CorpusError> {
    let uri = source.display().to_string();
    let file = File::open(source).map_err(|source| CorpusError::UnreadableSource {
        uri: uri.clone(),
        source,
    })?;
    ingest_reader(BufReader::new(file), &uri, dataset, format, opts)
}

/// Posts that carry an image, in input order.
pub fn filter_multimodal(posts: &[Post]) -> Vec<Post> {
    posts.iter().filter(|p| p.has_image()).cloned().collect()
}

/// Writes posts in the generic jsonl schema.
pub fn write_jsonl(posts: &[Post], mut out: impl Write) -> io::Result<()> {
    for p in posts {
        writeln!(out, "{}", p.to_generic_json())?;
    }
    Ok(())
}
