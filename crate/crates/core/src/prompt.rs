//! The seven prompt variants and recovery of generated continuations.
//!
//! Templates (frozen; golden-tested):
//!
//! | kind / metadata          | template |
//! |--------------------------|----------|
//! | lyrics_meaning           | `lyrics: {fragment}. meaning:` |
//! | lyrics_meaning + meta    | `artist: {artist}. title: {title}. lyrics: {fragment}. meaning:` |
//! | song_task                | `explain the song. lyrics: {fragment}. meaning:` |
//! | song_task + meta         | `explain the song {title}, written by {artist}. lyrics: {fragment}. meaning:` |
//! | question_context         | `question: what is the meaning of this song? context: {fragment}. answer:` |
//! | question_context + meta  | `question: what is the meaning of {artist} in his song "{title}"? context: {fragment}. answer:` |
//! | none                     | `{fragment}` |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sample;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt {spec} needs a non-empty {field}")]
    MissingField { spec: String, field: &'static str },
    #[error("prompt kind `none` cannot carry metadata")]
    MetadataOnNone,
    #[error("model output does not start with the rendered prompt")]
    PrefixMismatch,
    #[error("unknown prompt variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    LyricsMeaning,
    SongTask,
    QuestionContext,
    None,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::LyricsMeaning => "lyrics_meaning",
            PromptKind::SongTask => "song_task",
            PromptKind::QuestionContext => "question_context",
            PromptKind::None => "none",
        }
    }
}

/// A prompt variant. Construct through [`PromptSpec::new`] or
/// deserialization, both of which reject `none` with metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPromptSpec")]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub with_metadata: bool,
}

/// Accepted JSON forms: `{"kind": .., "with_metadata": ..}` or a label
/// string such as `"song_task+meta"`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawPromptSpec {
    Label(String),
    Fields(PromptFields),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptFields {
    kind: PromptKind,
    #[serde(default)]
    with_metadata: bool,
}

impl TryFrom<RawPromptSpec> for PromptSpec {
    type Error = PromptError;

    fn try_from(raw: RawPromptSpec) -> Result<Self, Self::Error> {
        match raw {
            RawPromptSpec::Label(s) => s.parse(),
            RawPromptSpec::Fields(f) => PromptSpec::new(f.kind, f.with_metadata),
        }
    }
}

impl PromptSpec {
    pub fn new(kind: PromptKind, with_metadata: bool) -> Result<Self, PromptError> {
        if kind == PromptKind::None && with_metadata {
            return Err(PromptError::MetadataOnNone);
        }
        Ok(Self { kind, with_metadata })
    }

    /// All seven legal variants.
    pub fn all() -> Vec<PromptSpec> {
        let mut v = Vec::with_capacity(7);
        for kind in [
            PromptKind::LyricsMeaning,
            PromptKind::SongTask,
            PromptKind::QuestionContext,
        ] {
            v.push(PromptSpec {
                kind,
                with_metadata: false,
            });
            v.push(PromptSpec {
                kind,
                with_metadata: true,
            });
        }
        v.push(PromptSpec {
            kind: PromptKind::None,
            with_metadata: false,
        });
        v
    }

    /// Stable label such as `song_task+meta`, used as a report key.
    pub fn label(&self) -> String {
        if self.with_metadata {
            format!("{}+meta", self.kind.as_str())
        } else {
            self.kind.as_str().to_string()
        }
    }
}

impl fmt::Display for PromptSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PromptSpec {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptSpec::all()
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| PromptError::UnknownVariant(s.to_string()))
    }
}

/// A rendered prompt; `text` always ends with `continuation_marker`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub continuation_marker: String,
}

fn require<'a>(spec: &PromptSpec, field: &'static str, value: &'a str) -> Result<&'a str, PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::MissingField {
            spec: spec.label(),
            field,
        })
    } else {
        Ok(value)
    }
}

fn metadata<'a>(spec: &PromptSpec, sample: &'a Sample) -> Result<(&'a str, &'a str), PromptError> {
    Ok((
        require(spec, "artist", &sample.artist)?,
        require(spec, "title", &sample.title)?,
    ))
}

pub fn render(spec: &PromptSpec, sample: &Sample) -> Result<RenderedPrompt, PromptError> {
    let fragment = require(spec, "fragment", &sample.fragment)?;
    let (text, marker) = match (spec.kind, spec.with_metadata) {
        (PromptKind::LyricsMeaning, false) => (format!("lyrics: {fragment}. meaning:"), "meaning:"),
        (PromptKind::LyricsMeaning, true) => {
            let (artist, title) = metadata(spec, sample)?;
            (
                format!("artist: {artist}. title: {title}. lyrics: {fragment}. meaning:"),
                "meaning:",
            )
        }
        (PromptKind::SongTask, false) => (format!("explain the song. lyrics: {fragment}. meaning:"), "meaning:"),
        (PromptKind::SongTask, true) => {
            let (artist, title) = metadata(spec, sample)?;
            (
                format!("explain the song {title}, written by {artist}. lyrics: {fragment}. meaning:"),
                "meaning:",
            )
        }
        (PromptKind::QuestionContext, false) => (
            format!("question: what is the meaning of this song? context: {fragment}. answer:"),
            "answer:",
        ),
        (PromptKind::QuestionContext, true) => {
            let (artist, title) = metadata(spec, sample)?;
            (
                format!(
                    "question: what is the meaning of {artist} in his song \"{title}\"? context: {fragment}. answer:"
                ),
                "answer:",
            )
        }
        (PromptKind::None, false) => (fragment.to_string(), ""),
        (PromptKind::None, true) => return Err(PromptError::MetadataOnNone),
    };
    Ok(RenderedPrompt {
        text,
        continuation_marker: marker.to_string(),
    })
}

/// The rendered prompt followed by one space and the annotation; the text
/// the reference model is fit on.
pub fn render_with_target(spec: &PromptSpec, sample: &Sample) -> Result<String, PromptError> {
    let rendered = render(spec, sample)?;
    Ok(format!("{} {}", rendered.text, sample.annotation))
}

/// Suffix of `full_output` after the prompt text, with leading whitespace
/// trimmed.
pub fn extract_generation<'a>(full_output: &'a str, prompt: &RenderedPrompt) -> Result<&'a str, PromptError> {
    full_output
        .strip_prefix(prompt.text.as_str())
        .map(str::trim_start)
        .ok_or(PromptError::PrefixMismatch)
}
