//! `{{name}}` placeholder templates, one file per prompt piece.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::PromptPart;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{file}: unterminated placeholder")]
    Unterminated { file: String },
    #[error("{file}: unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { file: String, name: String },
    #[error("{file}: missing required placeholder {{{{{name}}}}}")]
    MissingPlaceholder { file: String, name: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(
        file: &str,
        source: &str,
        allowed: &[&str],
        required: &[&str],
    ) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut rest = source;
        while let Some(start) = rest.find("{{") {
            if start > 0 {
                segments.push(Segment::Literal(rest[..start].to_string()));
            }
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| TemplateError::Unterminated {
                file: file.to_string(),
            })?;
            let name = after[..end].trim().to_string();
            if !allowed.contains(&name.as_str()) {
                return Err(TemplateError::UnknownPlaceholder {
                    file: file.to_string(),
                    name,
                });
            }
            segments.push(Segment::Slot(name));
            rest = &after[end + 2..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        for name in required {
            if !segments.iter().any(|s| matches!(s, Segment::Slot(n) if n == name)) {
                return Err(TemplateError::MissingPlaceholder {
                    file: file.to_string(),
                    name: name.to_string(),
                });
            }
        }
        Ok(Self { segments })
    }

    /// Expands the template; `fill` supplies the parts for each slot.
    pub fn render(&self, out: &mut Vec<PromptPart>, mut fill: impl FnMut(&str, &mut Vec<PromptPart>)) {
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => push_text(out, text),
                Segment::Slot(name) => fill(name, out),
            }
        }
    }
}

/// Appends text, merging with a trailing text part.
pub(crate) fn push_text(out: &mut Vec<PromptPart>, text: &str) {
    if text.is_empty() {
        return;
    }
    if let Some(PromptPart::Text(last)) = out.last_mut() {
        last.push_str(text);
    } else {
        out.push(PromptPart::Text(text.to_string()));
    }
}

struct Spec {
    file: &'static str,
    default: &'static str,
    allowed: &'static [&'static str],
    required: &'static [&'static str],
}

const ITERATIVE: Spec = Spec {
    file: "iterative_judgment.txt",
    default: include_str!("../../templates/iterative_judgment.txt"),
    allowed: &["m", "query", "subquestions"],
    required: &["query", "subquestions"],
};
const SUB_QUESTION: Spec = Spec {
    file: "sub_question.txt",
    default: include_str!("../../templates/sub_question.txt"),
    allowed: &["demos", "index", "label"],
    required: &["index", "label"],
};
const BINARY_DEMO: Spec = Spec {
    file: "binary_demo.txt",
    default: include_str!("../../templates/binary_demo.txt"),
    allowed: &["payload", "label", "answer"],
    required: &["payload", "answer"],
};
const MULTICLASS: Spec = Spec {
    file: "multiclass.txt",
    default: include_str!("../../templates/multiclass.txt"),
    allowed: &["demos", "query", "candidates"],
    required: &["query", "candidates"],
};
const RESTRICTED: Spec = Spec {
    file: "restricted.txt",
    default: include_str!("../../templates/restricted.txt"),
    allowed: &["demos", "query", "candidates"],
    required: &["query", "candidates"],
};
const DEMO: Spec = Spec {
    file: "demo.txt",
    default: include_str!("../../templates/demo.txt"),
    allowed: &["payload", "label"],
    required: &["payload", "label"],
};

/// The full template family used to render every prompt mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub iterative_judgment: Template,
    pub sub_question: Template,
    pub binary_demo: Template,
    pub multiclass: Template,
    pub restricted: Template,
    pub demo: Template,
}

impl Default for Templates {
    fn default() -> Self {
        Self::load(|spec| Ok(spec.default.to_string())).expect("embedded templates are valid")
    }
}

impl Templates {
    fn load(mut source: impl FnMut(&Spec) -> Result<String, TemplateError>) -> Result<Self, TemplateError> {
        let mut build = |spec: &Spec| {
            let text = source(spec)?;
            Template::parse(spec.file, &text, spec.allowed, spec.required)
        };
        Ok(Self {
            iterative_judgment: build(&ITERATIVE)?,
            sub_question: build(&SUB_QUESTION)?,
            binary_demo: build(&BINARY_DEMO)?,
            multiclass: build(&MULTICLASS)?,
            restricted: build(&RESTRICTED)?,
            demo: build(&DEMO)?,
        })
    }

    /// Loads templates from `dir`; files absent there keep their defaults.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        Self::load(|spec| {
            let path = dir.join(spec.file);
            match fs::read_to_string(&path) {
                Ok(text) => Ok(text),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(spec.default.to_string()),
                Err(source) => Err(TemplateError::Io { path, source }),
            }
        })
    }

    /// File names understood by [`Templates::from_dir`].
    pub fn file_names() -> [&'static str; 6] {
        [
            ITERATIVE.file,
            SUB_QUESTION.file,
            BINARY_DEMO.file,
            MULTICLASS.file,
            RESTRICTED.file,
            DEMO.file,
        ]
    }
}
