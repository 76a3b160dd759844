//! Prompt construction for the three prompt modes and parsing of replies.
//!
//! * iterative judgment: one prompt holding all `m` binary sub-questions
//!   "Is the label of this image C_j?", each preceded by the retrieved
//!   demonstrations relabeled as yes/no for `C_j`;
//! * multiclass: choose one of all `m` labels;
//! * restricted: choose one of a subset of labels.

mod parse;
mod template;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use parse::{parse_judgments, parse_label, Judgment, JudgmentVector, NoMatch, ParseFailure};
pub use template::{Template, TemplateError, Templates};

use crate::dataset::{LabelSet, Payload};
use crate::retrieval::{Demonstration, DemonstrationSet};
use template::push_text;

/// Shown instead of a demonstration's label in a restricted prompt when that
/// label is not among the candidates.
pub const OUTSIDE_CANDIDATES: &str = "none of the listed labels";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("a classification prompt needs at least 2 candidate labels, got {0}")]
    TooFewCandidates(usize),
    #[error("candidate {0:?} is not in the label set")]
    UnknownCandidate(String),
    #[error("candidate {0:?} listed twice")]
    DuplicateCandidate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    IterativeJudgment,
    Multiclass,
    Restricted,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::IterativeJudgment => "iterative_judgment",
            PromptMode::Multiclass => "multiclass",
            PromptMode::Restricted => "restricted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadRole {
    Query,
    Demonstration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPart {
    Text(String),
    Payload { role: PayloadRole, payload: Payload },
}

/// A prompt as an ordered list of text and payload parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub mode: PromptMode,
    pub parts: Vec<PromptPart>,
    /// Sub-question labels (iterative judgment) or answer choices.
    pub candidate_labels: Vec<String>,
}

impl RenderedPrompt {
    pub fn query_payload_count(&self) -> usize {
        self.parts
            .iter()
            .filter(|p| matches!(p, PromptPart::Payload { role: PayloadRole::Query, .. }))
            .count()
    }

    pub fn query_payload(&self) -> Option<&Payload> {
        self.parts.iter().find_map(|p| match p {
            PromptPart::Payload {
                role: PayloadRole::Query,
                payload,
            } => Some(payload),
            _ => None,
        })
    }

    /// Text view of the prompt; image payloads appear as `<image:path>`.
    pub fn flat_text(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                PromptPart::Text(t) => out.push_str(t),
                PromptPart::Payload { payload, .. } => match payload {
                    Payload::Image(p) => {
                        out.push_str("<image:");
                        out.push_str(&p.to_string_lossy());
                        out.push('>');
                    }
                    Payload::Text(t) => out.push_str(t),
                },
            }
        }
        out
    }

    /// Hex SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("prompt serializes");
        hex_digest(&json)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryAnswer {
    Yes,
    No,
}

impl BinaryAnswer {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryAnswer::Yes => "yes",
            BinaryAnswer::No => "no",
        }
    }
}

/// Demonstrations relabeled for one sub-question: yes iff the label is `sub_label`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDemonstrationSet<'a> {
    pub sub_label: String,
    pub items: Vec<(&'a Demonstration, BinaryAnswer)>,
}

impl BinaryDemonstrationSet<'_> {
    pub fn yes_count(&self) -> usize {
        self.items
            .iter()
            .filter(|(_, a)| *a == BinaryAnswer::Yes)
            .count()
    }
}

pub fn relabel_binary<'a>(demos: &'a DemonstrationSet, sub_label: &str) -> BinaryDemonstrationSet<'a> {
    BinaryDemonstrationSet {
        sub_label: sub_label.to_string(),
        items: demos
            .items
            .iter()
            .map(|d| {
                let answer = if d.label == sub_label {
                    BinaryAnswer::Yes
                } else {
                    BinaryAnswer::No
                };
                (d, answer)
            })
            .collect(),
    }
}

fn push_payload(out: &mut Vec<PromptPart>, role: PayloadRole, payload: &Payload) {
    out.push(PromptPart::Payload {
        role,
        payload: payload.clone(),
    });
}

/// Single consolidated prompt asking all `m` sub-questions.
pub fn build_iterative_judgment_prompt(
    demos: &DemonstrationSet,
    labelset: &LabelSet,
    query: &Payload,
    templates: &Templates,
) -> RenderedPrompt {
    let m = labelset.len();
    let mut parts = Vec::new();
    templates.iterative_judgment.render(&mut parts, |slot, out| match slot {
        "m" => push_text(out, &m.to_string()),
        "query" => push_payload(out, PayloadRole::Query, query),
        "subquestions" => {
            for (j, label) in labelset.iter().enumerate() {
                let binary = relabel_binary(demos, label);
                templates.sub_question.render(out, |slot, out| match slot {
                    "index" => push_text(out, &(j + 1).to_string()),
                    "label" => push_text(out, label),
                    "demos" => {
                        for (demo, answer) in &binary.items {
                            templates.binary_demo.render(out, |slot, out| match slot {
                                "payload" => push_payload(out, PayloadRole::Demonstration, &demo.payload),
                                "label" => push_text(out, label),
                                "answer" => push_text(out, answer.as_str()),
                                _ => {}
                            });
                        }
                    }
                    _ => {}
                });
            }
        }
        _ => {}
    });
    RenderedPrompt {
        mode: PromptMode::IterativeJudgment,
        parts,
        candidate_labels: labelset.labels().to_vec(),
    }
}

/// "Choose one label" prompt. Mode is multiclass when `candidates` covers
/// the whole label set, restricted otherwise.
pub fn build_multiclass_prompt(
    demos: &DemonstrationSet,
    candidates: &[String],
    labelset: &LabelSet,
    query: &Payload,
    templates: &Templates,
) -> Result<RenderedPrompt, PromptError> {
    if candidates.len() < 2 {
        return Err(PromptError::TooFewCandidates(candidates.len()));
    }
    for (i, c) in candidates.iter().enumerate() {
        if !labelset.contains(c) {
            return Err(PromptError::UnknownCandidate(c.clone()));
        }
        if candidates[..i].contains(c) {
            return Err(PromptError::DuplicateCandidate(c.clone()));
        }
    }
    let (mode, template) = if candidates.len() == labelset.len() {
        (PromptMode::Multiclass, &templates.multiclass)
    } else {
        (PromptMode::Restricted, &templates.restricted)
    };
    let listed = candidates.join(", ");
    let mut parts = Vec::new();
    template.render(&mut parts, |slot, out| match slot {
        "query" => push_payload(out, PayloadRole::Query, query),
        "candidates" => push_text(out, &listed),
        "demos" => {
            for demo in &demos.items {
                let shown = if candidates.contains(&demo.label) {
                    demo.label.as_str()
                } else {
                    OUTSIDE_CANDIDATES
                };
                templates.demo.render(out, |slot, out| match slot {
                    "payload" => push_payload(out, PayloadRole::Demonstration, &demo.payload),
                    "label" => push_text(out, shown),
                    _ => {}
                });
            }
        }
        _ => {}
    });
    Ok(RenderedPrompt {
        mode,
        parts,
        candidate_labels: candidates.to_vec(),
    })
}
