//! Bundled assets: vocabulary, knowledge table, prompt templates.
//!
//! Each asset ships inside the crate as a versioned plain-text file and can
//! be overridden by a file path at runtime. Parsers are strict: a malformed
//! asset is a configuration error, not a silent default.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

const BUNDLED_VOCABULARY: &str = include_str!("../assets/vocabulary.txt");
const BUNDLED_KNOWLEDGE: &str = include_str!("../assets/knowledge.txt");
const BUNDLED_CODE_GENERATION_PROMPT: &str = include_str!("../assets/prompts/code_generation.txt");
const BUNDLED_ANSWER_VERIFICATION_PROMPT: &str =
    include_str!("../assets/prompts/answer_verification.txt");
const BUNDLED_COT_CONVERSION_PROMPT: &str = include_str!("../assets/prompts/cot_conversion.txt");

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("failed to read asset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed asset ({0})")]
    Malformed(String),
    #[error("prompt template is missing required slot {{{0}}}")]
    MissingSlot(String),
}

// ── Vocabulary ────────────────────────────────────────────────────────

/// Category and attribute vocabulary for the synthetic world.
///
/// Attributes are grouped into classes (color, material, ...); an object
/// carries at most one attribute per class, which keeps questions like
/// "What color is the dog?" single-valued.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub version: u32,
    pub categories: Vec<String>,
    pub attribute_classes: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    /// The vocabulary bundled with the crate.
    pub fn bundled() -> Self {
        parse_vocabulary(BUNDLED_VOCABULARY).expect("bundled vocabulary parses")
    }

    /// Shared parsed copy of the bundled vocabulary.
    pub fn bundled_static() -> &'static Vocabulary {
        static VOCAB: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
        VOCAB.get_or_init(Vocabulary::bundled)
    }

    pub fn from_path(path: &Path) -> Result<Self, AssetError> {
        parse_vocabulary(&read(path)?)
    }

    pub fn all_attributes(&self) -> impl Iterator<Item = &str> {
        self.attribute_classes
            .values()
            .flat_map(|attrs| attrs.iter().map(String::as_str))
    }

    pub fn class_of(&self, attribute: &str) -> Option<&str> {
        self.attribute_classes
            .iter()
            .find(|(_, attrs)| attrs.iter().any(|a| a == attribute))
            .map(|(class, _)| class.as_str())
    }

    pub fn attributes_in_class(&self, class: &str) -> &[String] {
        self.attribute_classes
            .get(class)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains_category(&self, category: &str) -> bool {
        self.categories.iter().any(|c| c == category)
    }
}

fn parse_vocabulary(text: &str) -> Result<Vocabulary, AssetError> {
    let mut version = None;
    let mut categories = Vec::new();
    let mut attribute_classes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut section: Option<Section> = None;

    enum Section {
        Categories,
        Attributes(String),
    }

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("version ") {
            version = Some(rest.trim().parse::<u32>().map_err(|_| {
                AssetError::Malformed(format!("bad version line: {line:?}"))
            })?);
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(if name == "categories" {
                Section::Categories
            } else if let Some(class) = name.strip_prefix("attributes ") {
                Section::Attributes(class.trim().to_string())
            } else {
                return Err(AssetError::Malformed(format!("unknown section {name:?}")));
            });
            continue;
        }
        match &section {
            Some(Section::Categories) => categories.push(line.to_string()),
            Some(Section::Attributes(class)) => attribute_classes
                .entry(class.clone())
                .or_default()
                .push(line.to_string()),
            None => {
                return Err(AssetError::Malformed(format!(
                    "entry {line:?} before any section header"
                )))
            }
        }
    }

    let version =
        version.ok_or_else(|| AssetError::Malformed("missing version line".to_string()))?;
    Ok(Vocabulary {
        version,
        categories,
        attribute_classes,
    })
}

// ── Knowledge table ───────────────────────────────────────────────────

/// Question-to-answer table backing the offline llm_query tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeTable {
    pub version: u32,
    entries: BTreeMap<String, String>,
}

impl KnowledgeTable {
    pub fn bundled() -> Self {
        parse_knowledge(BUNDLED_KNOWLEDGE).expect("bundled knowledge table parses")
    }

    /// Shared parsed copy of the bundled table.
    pub fn bundled_static() -> &'static KnowledgeTable {
        static TABLE: std::sync::OnceLock<KnowledgeTable> = std::sync::OnceLock::new();
        TABLE.get_or_init(KnowledgeTable::bundled)
    }

    pub fn from_path(path: &Path) -> Result<Self, AssetError> {
        parse_knowledge(&read(path)?)
    }

    /// Answer for the question, or "unknown" when the table has no entry.
    pub fn answer(&self, question: &str) -> &str {
        self.entries
            .get(question.trim())
            .map(String::as_str)
            .unwrap_or("unknown")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn parse_knowledge(text: &str) -> Result<KnowledgeTable, AssetError> {
    let mut version = None;
    let mut entries = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("version ") {
            version = Some(rest.trim().parse::<u32>().map_err(|_| {
                AssetError::Malformed(format!("bad version line: {line:?}"))
            })?);
            continue;
        }
        let (question, answer) = line.split_once(" = ").ok_or_else(|| {
            AssetError::Malformed(format!("knowledge entry without ' = ': {line:?}"))
        })?;
        entries.insert(question.trim().to_string(), answer.trim().to_string());
    }
    let version =
        version.ok_or_else(|| AssetError::Malformed("missing version line".to_string()))?;
    Ok(KnowledgeTable { version, entries })
}

// ── Prompt templates ──────────────────────────────────────────────────

/// Which bundled prompt template to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    CodeGeneration,
    AnswerVerification,
    CotConversion,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PromptKind::CodeGeneration => "code_generation",
            PromptKind::AnswerVerification => "answer_verification",
            PromptKind::CotConversion => "cot_conversion",
        };
        f.write_str(name)
    }
}

/// A prompt template with named `{slot}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn bundled(kind: PromptKind) -> Self {
        let text = match kind {
            PromptKind::CodeGeneration => BUNDLED_CODE_GENERATION_PROMPT,
            PromptKind::AnswerVerification => BUNDLED_ANSWER_VERIFICATION_PROMPT,
            PromptKind::CotConversion => BUNDLED_COT_CONVERSION_PROMPT,
        };
        Self {
            text: text.to_string(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, AssetError> {
        Ok(Self { text: read(path)? })
    }

    /// Fill each `{name}` slot; every listed slot must occur in the template.
    pub fn fill(&self, slots: &[(&str, &str)]) -> Result<String, AssetError> {
        let mut out = self.text.clone();
        for (name, value) in slots {
            let marker = format!("{{{name}}}");
            if !out.contains(&marker) {
                return Err(AssetError::MissingSlot((*name).to_string()));
            }
            out = out.replace(&marker, value);
        }
        Ok(out)
    }
}

fn read(path: &Path) -> Result<String, AssetError> {
    fs::read_to_string(path).map_err(|source| AssetError::Io {
        path: path.display().to_string(),
        source,
    })
}
