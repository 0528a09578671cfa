//! Negative-campaigning codebooks and prompt rendering.
//!
//! Every prompt follows one fixed template. The system message holds the
//! definition paragraph, the instruction paragraph, the labelled examples
//! (adjusted variant only), the context descriptor (context variants only),
//! and the output instruction, separated by blank lines. The user message is
//! `Text: <document text>`, prefixed by the context descriptor for the
//! system+user variant.
//!
//! The bundled example messages are neutral placeholders written for this
//! toolkit. They are not taken from any published adjusted codebook.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::Document;

pub const DEFAULT_OUTPUT_INSTRUCTION: &str = "Answer with a single character: 0 or 1.";

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("variant {0} requires a context descriptor")]
    MissingContext(PromptVariant),
    #[error("adjusted codebook variant requires labelled examples")]
    MissingExamples,
    #[error("invalid codebook: {0}")]
    Invalid(String),
    #[error("cannot read codebook {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(rename = "definition")]
    pub definition_text: String,
    #[serde(default)]
    pub instructions: String,
    #[serde(rename = "examples", default)]
    pub labeled_examples: Vec<LabeledExample>,
    #[serde(default = "default_output_instruction")]
    pub output_instruction: String,
}

fn default_output_instruction() -> String {
    DEFAULT_OUTPUT_INSTRUCTION.to_string()
}

impl Codebook {
    pub fn validate(&self) -> Result<(), CodebookError> {
        if self.definition_text.trim().is_empty() {
            return Err(CodebookError::Invalid("definition is empty".into()));
        }
        if let Some(e) = self.labeled_examples.iter().find(|e| e.label > 1) {
            return Err(CodebookError::Invalid(format!("example label {} is not binary", e.label)));
        }
        if !self.labeled_examples.is_empty() {
            let has = |l| self.labeled_examples.iter().any(|e| e.label == l);
            if !(has(0) && has(1)) {
                return Err(CodebookError::Invalid(
                    "examples must include at least one of each label".into(),
                ));
            }
        }
        Ok(())
    }

    /// Loads a codebook from TOML (`.toml`) or JSON (anything else).
    pub fn from_file(path: &Path) -> Result<Self, CodebookError> {
        let load_err = |message: String| CodebookError::Load {
            path: path.display().to_string(),
            message,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let cb: Codebook = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&raw).map_err(|e| load_err(e.to_string()))?,
            _ => serde_json::from_str(&raw).map_err(|e| load_err(e.to_string()))?,
        };
        cb.validate()?;
        Ok(cb)
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("codebook serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextLevel {
    NoContext,
    SystemContext,
    SystemUserContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookVariant {
    Original,
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptVariant {
    pub context_level: ContextLevel,
    pub codebook_variant: CodebookVariant,
}

impl PromptVariant {
    pub const fn new(context_level: ContextLevel, codebook_variant: CodebookVariant) -> Self {
        PromptVariant { context_level, codebook_variant }
    }

    pub fn needs_context(&self) -> bool {
        self.context_level != ContextLevel::NoContext
    }
}

impl Default for PromptVariant {
    fn default() -> Self {
        PromptVariant::new(ContextLevel::NoContext, CodebookVariant::Original)
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ctx = match self.context_level {
            ContextLevel::NoContext => "no_context",
            ContextLevel::SystemContext => "system",
            ContextLevel::SystemUserContext => "system_user",
        };
        let cb = match self.codebook_variant {
            CodebookVariant::Original => "original",
            CodebookVariant::Adjusted => "adjusted",
        };
        write!(f, "{ctx}:{cb}")
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    /// Parses `<context>[:<codebook>]`, e.g. `system_user:adjusted` or `no_context`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().splitn(2, [':', '+', '/', ',']);
        let context_level = match parts.next().unwrap_or_default() {
            "no_context" | "none" => ContextLevel::NoContext,
            "system" => ContextLevel::SystemContext,
            "system_user" => ContextLevel::SystemUserContext,
            other => return Err(format!("unknown context level `{other}`")),
        };
        let codebook_variant = match parts.next() {
            None | Some("original") => CodebookVariant::Original,
            Some("adjusted") => CodebookVariant::Adjusted,
            Some(other) => return Err(format!("unknown codebook variant `{other}`")),
        };
        Ok(PromptVariant { context_level, codebook_variant })
    }
}

/// Stable 64-bit prompt digest, rendered as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptHash(pub u64);

impl PromptHash {
    pub fn compute(system_text: &str, user_text: &str, model_id: &str) -> Self {
        let mut h = Sha256::new();
        for part in [system_text, user_text, model_id] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        PromptHash(u64::from_be_bytes(bytes))
    }
}

impl fmt::Display for PromptHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PromptHash {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(PromptHash)
    }
}

impl Serialize for PromptHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
    pub prompt_hash: PromptHash,
}

/// Renders the chat messages for one document.
pub fn render(
    codebook: &Codebook,
    variant: PromptVariant,
    doc: &Document,
    context: Option<&str>,
    model_id: &str,
) -> Result<RenderedPrompt, CodebookError> {
    let context = match (variant.needs_context(), context) {
        (false, _) => None,
        (true, Some(c)) if !c.trim().is_empty() => Some(c),
        (true, _) => return Err(CodebookError::MissingContext(variant)),
    };

    let mut system = vec![codebook.definition_text.trim().to_string()];
    if !codebook.instructions.trim().is_empty() {
        system.push(codebook.instructions.trim().to_string());
    }
    if variant.codebook_variant == CodebookVariant::Adjusted {
        if codebook.labeled_examples.is_empty() {
            return Err(CodebookError::MissingExamples);
        }
        let examples: Vec<String> = codebook
            .labeled_examples
            .iter()
            .map(|e| format!("Text: {}\nLabel: {}", e.text, e.label))
            .collect();
        system.push(format!("Examples:\n\n{}", examples.join("\n\n")));
    }
    if let Some(c) = context {
        system.push(format!("Context: {c}"));
    }
    system.push(codebook.output_instruction.trim().to_string());
    let system_text = system.join("\n\n");

    let user_text = match (variant.context_level, context) {
        (ContextLevel::SystemUserContext, Some(c)) => format!("Context: {c}\n\nText: {}", doc.text),
        _ => format!("Text: {}", doc.text),
    };
    let prompt_hash = PromptHash::compute(&system_text, &user_text, model_id);
    Ok(RenderedPrompt { system_text, user_text, prompt_hash })
}

fn placeholder_examples() -> Vec<LabeledExample> {
    [
        ("The opposition's budget would gut our schools. They clearly have no idea what they are doing.", 1),
        ("Proud to open the new community health centre in our town today.", 0),
        ("The unemployment figures this month are worrying. We need to act together.", 0),
        ("The minister misled parliament again and should resign.", 1),
    ]
    .into_iter()
    .map(|(text, label)| LabeledExample { text: text.into(), label })
    .collect()
}

/// Built-in codebooks: `broad`, `strict`, and `main_study`.
pub fn builtin_codebooks() -> BTreeMap<&'static str, Codebook> {
    let broad = Codebook {
        definition_text: "Negative campaigning is the presence of an explicit attack or critique toward an opponent.".into(),
        instructions: "Decide whether the following social media message by a politician contains negative campaigning.".into(),
        labeled_examples: placeholder_examples(),
        output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
    };
    let strict = Codebook {
        definition_text: "Negative campaigning is an explicit attack or critique directed by a political actor at an identifiable political opponent: another party, candidate, or politician.".into(),
        instructions: "Distinguish between negative tonality and negative campaigning. A message that only has a negative tone (complaints about a situation, worry about events, criticism of conditions or of non-political actors) is negative tonality and must be coded 0. Code 1 only when the message attacks or criticizes a political opponent, their record, positions, or character.".into(),
        labeled_examples: placeholder_examples(),
        output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
    };
    let main_study = Codebook {
        definition_text: "Negative campaigning is the presence of explicit attack or critique toward opponent party or candidate.".into(),
        instructions: "Does the following message contain negative campaigning?".into(),
        labeled_examples: placeholder_examples(),
        output_instruction: DEFAULT_OUTPUT_INSTRUCTION.into(),
    };
    BTreeMap::from([("broad", broad), ("strict", strict), ("main_study", main_study)])
}

pub fn builtin_codebook(name: &str) -> Option<Codebook> {
    builtin_codebooks().remove(name)
}
