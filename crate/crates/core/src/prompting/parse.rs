//! Reply parsing: numbered yes/no judgments and single-label answers.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Positive,
    Negative,
}

/// Answers to the `m` sub-questions, index `j - 1` for sub-question `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentVector {
    pub answers: Vec<Judgment>,
    /// 1-based indices that were absent from the reply and defaulted to negative.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<usize>,
    /// Nothing in the reply was recognizable.
    #[serde(default)]
    pub parse_failed: bool,
}

impl JudgmentVector {
    pub fn new(answers: Vec<Judgment>) -> Self {
        Self {
            answers,
            missing: Vec::new(),
            parse_failed: false,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::new(
            bits.iter()
                .map(|&b| if b { Judgment::Positive } else { Judgment::Negative })
                .collect(),
        )
    }

    /// All-negative vector flagged as a parse failure.
    pub fn failed(m: usize) -> Self {
        Self {
            answers: vec![Judgment::Negative; m],
            missing: (1..=m).collect(),
            parse_failed: true,
        }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// Number of positive answers.
    pub fn indicator_count(&self) -> usize {
        self.answers
            .iter()
            .filter(|&&a| a == Judgment::Positive)
            .count()
    }

    /// 0-based indices of positive answers, ascending.
    pub fn positive_indices(&self) -> Vec<usize> {
        self.answers
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == Judgment::Positive)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn positive_labels(&self, labelset: &LabelSet) -> Vec<String> {
        self.positive_indices()
            .into_iter()
            .filter_map(|j| labelset.get(j).map(str::to_string))
            .collect()
    }

    /// Canonical reply text: one `j: yes|no` line per sub-question.
    pub fn render_reply(&self) -> String {
        self.answers
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let word = match a {
                    Judgment::Positive => "yes",
                    Judgment::Negative => "no",
                };
                format!("{}: {word}", j + 1)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no numbered yes/no answers found in reply")]
pub struct ParseFailure;

fn judgment_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[\W_]*(?:(?:sub-?question|question|q)\s*)?(\d{1,6})\b[\W_]*(yes|no)\b")
            .expect("valid regex")
    })
}

/// Reads `j: yes|no` lines. Unlisted indices default to negative and are
/// reported in `missing`; a reply with no recognizable index is a
/// [`ParseFailure`].
pub fn parse_judgments(text: &str, m: usize) -> Result<JudgmentVector, ParseFailure> {
    let mut answers: Vec<Option<Judgment>> = vec![None; m];
    let mut recognized = 0;
    for caps in judgment_line().captures_iter(text) {
        let Ok(index) = caps[1].parse::<usize>() else {
            continue;
        };
        if index == 0 || index > m || answers[index - 1].is_some() {
            continue;
        }
        let judgment = if caps[2].eq_ignore_ascii_case("yes") {
            Judgment::Positive
        } else {
            Judgment::Negative
        };
        answers[index - 1] = Some(judgment);
        recognized += 1;
    }
    if recognized == 0 {
        return Err(ParseFailure);
    }
    let missing: Vec<usize> = answers
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_none())
        .map(|(j, _)| j + 1)
        .collect();
    if !missing.is_empty() {
        log::warn!("judgment reply lacks sub-question(s) {missing:?}; treating as negative");
    }
    Ok(JudgmentVector {
        answers: answers
            .into_iter()
            .map(|a| a.unwrap_or(Judgment::Negative))
            .collect(),
        missing,
        parse_failed: false,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NoMatch {
    #[error("reply names none of the candidate labels")]
    None,
    #[error("reply is ambiguous between {0:?}")]
    Ambiguous(Vec<String>),
}

fn normalize(text: &str) -> String {
    text.trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Byte spans of whole-word occurrences of `needle` in `haystack`.
fn occurrences(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    if needle.is_empty() {
        return Vec::new();
    }
    haystack
        .match_indices(needle)
        .filter(|(start, m)| {
            let end = start + m.len();
            !is_word_char(haystack[..*start].chars().next_back())
                && !is_word_char(haystack[end..].chars().next())
        })
        .map(|(start, m)| (start, start + m.len()))
        .collect()
}

/// Maps a free-text reply onto one candidate: normalized exact match first,
/// then a unique whole-word match. A match that only occurs inside a longer
/// matched candidate (e.g. "shirt" within "t-shirt/top") does not count.
pub fn parse_label(text: &str, candidates: &[String]) -> Result<String, NoMatch> {
    let reply = normalize(text);
    if let Some(c) = candidates.iter().find(|c| normalize(c) == reply) {
        return Ok(c.clone());
    }
    let lowered = text.to_lowercase();
    let hits: Vec<(&String, Vec<(usize, usize)>)> = candidates
        .iter()
        .map(|c| (c, occurrences(&lowered, &c.trim().to_lowercase())))
        .filter(|(_, spans)| !spans.is_empty())
        .collect();
    let standing: Vec<&String> = hits
        .iter()
        .filter(|(c, spans)| {
            spans.iter().any(|&(s, e)| {
                !hits.iter().any(|(other, other_spans)| {
                    other != c
                        && other_spans
                            .iter()
                            .any(|&(os, oe)| os <= s && e <= oe && oe - os > e - s)
                })
            })
        })
        .map(|(c, _)| *c)
        .collect();
    match standing.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(NoMatch::None),
        many => Err(NoMatch::Ambiguous(many.iter().map(|c| c.to_string()).collect())),
    }
}
