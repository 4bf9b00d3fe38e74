//! Versioned prompt templates for the three distillation stages.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyinfo::KeyInfo;
use crate::prefix::PrefixTable;
use crate::relation::Relation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Caption,
    Keyinfo,
    Intention,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("text is empty")]
    EmptyText,
    #[error("invalid relation `{0}`")]
    InvalidRelation(String),
    #[error("invalid key information: {0}")]
    InvalidKeyInfo(String),
    #[error("template `{template}` has no binding for `{placeholder}`")]
    MissingBinding { template: String, placeholder: String },
    #[error("template `{template}`: {message}")]
    BadTemplate { template: String, message: String },
    #[error("template manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot(String),
}

/// A template with `{name}` placeholders; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub stage: Stage,
    pub version: String,
    pub text: String,
    pieces: Vec<Piece>,
}

fn parse_pieces(name: &str, text: &str) -> Result<Vec<Piece>, PromptError> {
    let bad = |message: String| PromptError::BadTemplate {
        template: name.to_string(),
        message,
    };
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                literal.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                literal.push('}');
            }
            '{' => {
                let mut slot = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) if c.is_ascii_alphanumeric() || c == '_' => slot.push(c),
                        Some(c) => return Err(bad(format!("invalid character {c:?} in placeholder"))),
                        None => return Err(bad("unterminated placeholder".into())),
                    }
                }
                if slot.is_empty() {
                    return Err(bad("empty placeholder".into()));
                }
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(slot));
            }
            '}' => return Err(bad("unmatched `}`".into())),
            c => literal.push(c),
        }
    }
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    Ok(pieces)
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, stage: Stage, version: impl Into<String>, text: impl Into<String>) -> Result<Self, PromptError> {
        let name = name.into();
        let text = text.into();
        let pieces = parse_pieces(&name, &text)?;
        Ok(Self {
            name,
            stage,
            version: version.into(),
            text,
            pieces,
        })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.as_str()),
                Piece::Literal(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder; a missing binding is an error.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len() + 256);
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| PromptError::MissingBinding {
                            template: self.name.clone(),
                            placeholder: name.clone(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// What a key-information prompt is extracting from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Post,
    ImageDescription,
    /// Post text and image description under labeled headers.
    Merged,
}

impl SourceKind {
    pub fn tag(self) -> &'static str {
        match self {
            SourceKind::Post => "<Text information>",
            SourceKind::ImageDescription => "<Image description>",
            SourceKind::Merged => "<Text information> and <Image description>",
        }
    }
}

/// Builds the merged key-information source from post text and image description.
pub fn merged_source(post_text: &str, image_description: &str) -> String {
    format!("<Text information>\n{post_text}\n<Image description>\n{image_description}")
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    name: String,
    stage: Stage,
    file: String,
    version: String,
    placeholders: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    templates: Vec<ManifestEntry>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("manifest.json", include_str!("../templates/manifest.json")),
    ("caption.txt", include_str!("../templates/caption.txt")),
    ("keyinfo.txt", include_str!("../templates/keyinfo.txt")),
    ("intention.txt", include_str!("../templates/intention.txt")),
    ("image_section.txt", include_str!("../templates/image_section.txt")),
    ("intention/xNeed.txt", include_str!("../templates/intention/xNeed.txt")),
    ("intention/xIntent.txt", include_str!("../templates/intention/xIntent.txt")),
    ("intention/xAttr.txt", include_str!("../templates/intention/xAttr.txt")),
    ("intention/xEffect.txt", include_str!("../templates/intention/xEffect.txt")),
    ("intention/xReact.txt", include_str!("../templates/intention/xReact.txt")),
    ("intention/xWant.txt", include_str!("../templates/intention/xWant.txt")),
    ("intention/oEffect.txt", include_str!("../templates/intention/oEffect.txt")),
    ("intention/oReact.txt", include_str!("../templates/intention/oReact.txt")),
    ("intention/oWant.txt", include_str!("../templates/intention/oWant.txt")),
    ("intention/Open.txt", include_str!("../templates/intention/Open.txt")),
];

/// The complete template set plus the relation opener table.
#[derive(Debug, Clone)]
pub struct PromptKit {
    caption: PromptTemplate,
    keyinfo: PromptTemplate,
    intention: PromptTemplate,
    image_section: PromptTemplate,
    relation_blocks: BTreeMap<Relation, PromptTemplate>,
    prefixes: PrefixTable,
}

impl Default for PromptKit {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptKit {
    pub fn bundled() -> Self {
        Self::from_source(|file| {
            BUNDLED
                .iter()
                .find(|(f, _)| *f == file)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| format!("no bundled file {file}"))
        })
        .expect("bundled templates are valid")
    }

    /// Loads `manifest.json` and the files it lists from `dir`. A
    /// `prefixes.json` in the same directory replaces the bundled opener table.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut kit = Self::from_source(|file| {
            fs::read_to_string(dir.join(file)).map_err(|e| format!("{}: {e}", dir.join(file).display()))
        })?;
        let prefixes = dir.join("prefixes.json");
        if prefixes.exists() {
            kit.prefixes = PrefixTable::load(&prefixes).map_err(PromptError::Manifest)?;
        }
        Ok(kit)
    }

    fn from_source(read: impl Fn(&str) -> Result<String, String>) -> Result<Self, PromptError> {
        let manifest: Manifest = serde_json::from_str(&read("manifest.json").map_err(PromptError::Manifest)?)
            .map_err(|e| PromptError::Manifest(e.to_string()))?;
        let mut by_name = BTreeMap::new();
        for entry in manifest.templates {
            let text = read(&entry.file).map_err(PromptError::Manifest)?;
            let template = PromptTemplate::new(entry.name.clone(), entry.stage, entry.version, text)?;
            let used: BTreeSet<&str> = template.placeholders();
            let declared: BTreeSet<&str> = entry.placeholders.iter().map(String::as_str).collect();
            if used != declared {
                return Err(PromptError::BadTemplate {
                    template: entry.name,
                    message: format!("placeholders {used:?} do not match declared {declared:?}"),
                });
            }
            by_name.insert(entry.name, template);
        }
        let mut take = |name: &str| {
            by_name
                .remove(name)
                .ok_or_else(|| PromptError::Manifest(format!("manifest has no `{name}` template")))
        };
        let caption = take("caption")?;
        let keyinfo = take("keyinfo")?;
        let intention = take("intention")?;
        let image_section = take("image_section")?;
        let mut relation_blocks = BTreeMap::new();
        for r in Relation::ALL {
            relation_blocks.insert(r, take(&format!("intention/{}", r.code()))?);
        }
        Ok(Self {
            caption,
            keyinfo,
            intention,
            image_section,
            relation_blocks,
            prefixes: PrefixTable::default(),
        })
    }

    pub fn with_prefixes(mut self, prefixes: PrefixTable) -> Self {
        self.prefixes = prefixes;
        self
    }

    pub fn prefixes(&self) -> &PrefixTable {
        &self.prefixes
    }

    pub fn caption_version(&self) -> &str {
        &self.caption.version
    }

    pub fn keyinfo_version(&self) -> &str {
        &self.keyinfo.version
    }

    /// Version string for one relation's intention prompt (frame + block).
    pub fn intention_version(&self, relation: Relation) -> String {
        format!("{}+{}", self.intention.version, self.relation_blocks[&relation].version)
    }

    /// Every template version keyed by template name, plus the opener table.
    pub fn versions(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> = [&self.caption, &self.keyinfo, &self.intention, &self.image_section]
            .into_iter()
            .chain(self.relation_blocks.values())
            .map(|t| (t.name.clone(), t.version.clone()))
            .collect();
        out.insert("prefixes".into(), self.prefixes.version.clone());
        out
    }

    pub fn render_caption_prompt(&self, post_text: &str) -> Result<String, PromptError> {
        if post_text.trim().is_empty() {
            return Err(PromptError::EmptyText);
        }
        self.caption.render(&[("post_text", post_text)])
    }

    pub fn render_keyinfo_prompt(&self, source_text: &str, kind: SourceKind) -> Result<String, PromptError> {
        if source_text.trim().is_empty() {
            return Err(PromptError::EmptyText);
        }
        self.keyinfo
            .render(&[("source_tag", kind.tag()), ("source_text", source_text)])
    }

    pub fn render_intention_prompt(
        &self,
        post_text: &str,
        image_description: Option<&str>,
        keyinfo: &KeyInfo,
        relation: Relation,
    ) -> Result<String, PromptError> {
        if post_text.trim().is_empty() {
            return Err(PromptError::EmptyText);
        }
        keyinfo.validate().map_err(PromptError::InvalidKeyInfo)?;
        let image_section = match image_description.filter(|d| !d.trim().is_empty()) {
            Some(desc) => self.image_section.render(&[("image_description", desc)])? + "\n",
            None => String::new(),
        };
        let block = self.relation_blocks[&relation].render(&[("opener", self.prefixes.opener(relation))])?;
        let keyinfo_block = keyinfo.to_block();
        self.intention.render(&[
            ("post_text", post_text),
            ("image_section", &image_section),
            ("keyinfo", &keyinfo_block),
            ("relation_block", &block),
        ])
    }

    /// Same as [`render_intention_prompt`](Self::render_intention_prompt) for a relation code.
    pub fn render_intention_prompt_for(
        &self,
        post_text: &str,
        image_description: Option<&str>,
        keyinfo: &KeyInfo,
        relation_code: &str,
    ) -> Result<String, PromptError> {
        let relation = relation_code
            .parse::<Relation>()
            .map_err(|_| PromptError::InvalidRelation(relation_code.to_string()))?;
        self.render_intention_prompt(post_text, image_description, keyinfo, relation)
    }
}
