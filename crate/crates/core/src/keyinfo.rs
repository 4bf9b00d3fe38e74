//! Key-information records and the parser for model-produced extraction blocks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MIN_KEYWORDS: usize = 3;
pub const MAX_KEYWORDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyInfoSource {
    PostText,
    ImageDescription,
    Merged,
}

/// The five extracted dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfoFields {
    pub concept: String,
    pub action: String,
    pub object: String,
    pub emotion: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub post_id: String,
    pub source: KeyInfoSource,
    pub concept: String,
    pub action: String,
    pub object: String,
    pub emotion: String,
    pub keywords: Vec<String>,
}

impl KeyInfo {
    pub fn new(post_id: impl Into<String>, source: KeyInfoSource, fields: KeyInfoFields) -> Self {
        Self {
            post_id: post_id.into(),
            source,
            concept: fields.concept,
            action: fields.action,
            object: fields.object,
            emotion: fields.emotion,
            keywords: fields.keywords,
        }
    }

    pub fn fields(&self) -> KeyInfoFields {
        KeyInfoFields {
            concept: self.concept.clone(),
            action: self.action.clone(),
            object: self.object.clone(),
            emotion: self.emotion.clone(),
            keywords: self.keywords.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        validate_fields(&self.fields()).map_err(|problems| problems.join("; "))
    }

    /// Stable digest referenced from intention provenance.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("key info serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// `Label: value` block embedded in intention prompts.
    pub fn to_block(&self) -> String {
        self.fields().to_block()
    }
}

impl KeyInfoFields {
    pub fn to_block(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Concept: {}", self.concept);
        let _ = writeln!(out, "Action: {}", self.action);
        let _ = writeln!(out, "Object: {}", self.object);
        let _ = writeln!(out, "Emotion: {}", self.emotion);
        let _ = write!(out, "Keywords: {}", self.keywords.join(", "));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not parse key information ({}): {raw:?}", .problems.join("; "))]
pub struct ParseFailure {
    /// Labels that were absent or empty.
    pub missing: Vec<&'static str>,
    /// Every problem found, including `missing`.
    pub problems: Vec<String>,
    pub raw: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Concept,
    Action,
    Object,
    Emotion,
    Keywords,
}

const LABELS: [(&str, Field); 5] = [
    ("concept", Field::Concept),
    ("action", Field::Action),
    ("object", Field::Object),
    ("emotion", Field::Emotion),
    ("keywords", Field::Keywords),
];

fn field_for(label: &str) -> Option<Field> {
    let label = label.trim().to_ascii_lowercase();
    let label = label.as_str();
    if label == "keyword" || label == "key words" {
        return Some(Field::Keywords);
    }
    LABELS.iter().find(|(l, _)| *l == label).map(|(_, f)| *f)
}

fn strip_decoration(s: &str) -> &str {
    let s = s.trim();
    let s = s.trim_start_matches(|c: char| matches!(c, '-' | '*' | '•' | '#') || c.is_whitespace());
    // Numbered list markers such as "1." or "2)".
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    let s = if digits > 0 && s[digits..].starts_with(['.', ')']) { &s[digits + 1..] } else { s };
    s.trim().trim_matches('*').trim()
}

fn clean_value(s: &str) -> String {
    let s = strip_decoration(s);
    let s = s.trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '“' | '”')).trim();
    s.to_string()
}

/// Splits on commas, semicolons and newlines; trims and drops duplicates keeping the first.
pub fn split_keywords(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in s.split([',', ';', '\n', '\r']) {
        let k = clean_value(part);
        if !k.is_empty() && !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

#[derive(Default)]
struct Partial {
    concept: Option<String>,
    action: Option<String>,
    object: Option<String>,
    emotion: Option<String>,
    keywords: Option<String>,
}

impl Partial {
    fn slot(&mut self, f: Field) -> &mut Option<String> {
        match f {
            Field::Concept => &mut self.concept,
            Field::Action => &mut self.action,
            Field::Object => &mut self.object,
            Field::Emotion => &mut self.emotion,
            Field::Keywords => &mut self.keywords,
        }
    }
}

fn json_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => Some(items.iter().filter_map(json_text).collect::<Vec<_>>().join("\n")),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_json(raw: &str) -> Option<Partial> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end <= start {
        return None;
    }
    let obj = match serde_json::from_str::<Value>(&raw[start..=end]).ok()? {
        Value::Object(m) => m,
        _ => return None,
    };
    let mut p = Partial::default();
    for (k, v) in obj {
        if let Some(f) = field_for(&k) {
            *p.slot(f) = json_text(&v);
        }
    }
    Some(p)
}

fn parse_lines(raw: &str) -> Partial {
    let mut p = Partial::default();
    let mut current: Option<Field> = None;
    for line in raw.lines() {
        let stripped = strip_decoration(line);
        if stripped.is_empty() {
            continue;
        }
        let labeled = stripped.split_once(':').and_then(|(label, value)| {
            let label = label.trim_matches(|c: char| c == '*' || c.is_whitespace());
            field_for(label).map(|f| (f, value))
        });
        match labeled {
            Some((f, value)) => {
                current = Some(f);
                let slot = p.slot(f);
                if slot.is_none() {
                    *slot = Some(value.to_string());
                } else {
                    // Repeated label: later blocks never override the first.
                    current = None;
                }
            }
            None if current == Some(Field::Keywords) => {
                if let Some(k) = p.keywords.as_mut() {
                    k.push('\n');
                    k.push_str(stripped);
                }
            }
            None => {}
        }
    }
    p
}

pub fn validate_fields(f: &KeyInfoFields) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    if !(MIN_KEYWORDS..=MAX_KEYWORDS).contains(&f.keywords.len()) {
        problems.push(format!(
            "expected {MIN_KEYWORDS} to {MAX_KEYWORDS} keywords, found {}",
            f.keywords.len()
        ));
    }
    if f.keywords.iter().any(|k| k.trim().is_empty()) {
        problems.push("empty keyword".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Extracts concept, action, object, emotion and keywords from a JSON object
/// or from `Label: value` lines. Labels are matched case-insensitively.
pub fn parse_keyinfo(raw: &str) -> Result<KeyInfoFields, ParseFailure> {
    let partial = parse_json(raw).unwrap_or_else(|| parse_lines(raw));
    let mut missing = Vec::new();
    let mut take = |name: &'static str, v: Option<String>| {
        let v = v.map(|s| clean_value(&s)).unwrap_or_default();
        if v.is_empty() {
            missing.push(name);
        }
        v
    };
    let concept = take("concept", partial.concept);
    let action = take("action", partial.action);
    let object = take("object", partial.object);
    let emotion = take("emotion", partial.emotion);
    let keywords = partial.keywords.as_deref().map(split_keywords).unwrap_or_default();
    if keywords.is_empty() {
        missing.push("keywords");
    }
    let fields = KeyInfoFields {
        concept,
        action,
        object,
        emotion,
        keywords,
    };
    let mut problems: Vec<String> = missing.iter().map(|m| format!("missing {m}")).collect();
    if !missing.contains(&"keywords") {
        if let Err(p) = validate_fields(&fields) {
            problems.extend(p);
        }
    }
    if problems.is_empty() {
        Ok(fields)
    } else {
        Err(ParseFailure {
            missing,
            problems,
            raw: raw.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_object() {
        let f = parse_keyinfo(r#"{"concept":"c","action":"a","object":"o","emotion":"e","keywords":["k1","k2","k3"]}"#).unwrap();
        assert_eq!(
            f,
            KeyInfoFields {
                concept: "c".into(),
                action: "a".into(),
                object: "o".into(),
                emotion: "e".into(),
                keywords: vec!["k1".into(), "k2".into(), "k3".into()],
            }
        );
    }

    #[test]
    fn labeled_lines() {
        let raw = "Concept: travel\nAction: visiting\nObject: Scotland\nEmotion: excitement\nKeywords: travel, Scotland, must-see";
        let f = parse_keyinfo(raw).unwrap();
        assert_eq!(f.concept, "travel");
        assert_eq!(f.object, "Scotland");
        assert_eq!(f.keywords, vec!["travel", "Scotland", "must-see"]);
    }

    #[test]
    fn keywords_are_deduplicated_in_order() {
        let raw = "concept: c\naction: a\nobject: o\nemotion: e\nKeywords: a, a, b, c";
        assert_eq!(parse_keyinfo(raw).unwrap().keywords, vec!["a", "b", "c"]);
    }

    #[test]
    fn markdown_and_bulleted_keywords() {
        let raw = "Here you go:\n**Concept:** news\n- **Action**: reporting\n- Object: airport\n- Emotion: concern\nKeywords:\n1. Dubai\n2. airport; delays\n3. \"incident\"";
        let f = parse_keyinfo(raw).unwrap();
        assert_eq!(f.concept, "news");
        assert_eq!(f.action, "reporting");
        assert_eq!(f.keywords, vec!["Dubai", "airport", "delays", "incident"]);
    }

    #[test]
    fn json_embedded_in_prose_with_uppercase_keys() {
        let raw = "Sure!\n```json\n{\"Concept\":\"c\",\"Action\":\"a\",\"Object\":\"o\",\"Emotion\":\"e\",\"Keywords\":\"x; y; z\"}\n```";
        assert_eq!(parse_keyinfo(raw).unwrap().keywords, vec!["x", "y", "z"]);
    }

    #[test]
    fn missing_fields_are_listed() {
        let err = parse_keyinfo("Concept: c\nKeywords: a, b, c").unwrap_err();
        assert_eq!(err.missing, vec!["action", "object", "emotion"]);
    }

    #[test]
    fn keyword_count_bounds() {
        let base = "Concept: c\nAction: a\nObject: o\nEmotion: e\nKeywords: ";
        assert!(parse_keyinfo(&format!("{base}a, b")).is_err());
        assert!(parse_keyinfo(&format!("{base}a, b, c, d, e")).is_ok());
        let err = parse_keyinfo(&format!("{base}a, b, c, d, e, f")).unwrap_err();
        assert!(err.missing.is_empty());
        assert!(err.problems[0].contains("found 6"));
    }

    #[test]
    fn block_round_trips() {
        let f = KeyInfoFields {
            concept: "sports".into(),
            action: "celebrating".into(),
            object: "trophy".into(),
            emotion: "pride".into(),
            keywords: vec!["final".into(), "team".into(), "win".into()],
        };
        assert_eq!(parse_keyinfo(&f.to_block()).unwrap(), f);
    }
}
