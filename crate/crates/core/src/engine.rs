//! Two-stage classification.
//!
//! Stage 1 (iterative judgments) retrieves demonstrations once and asks all
//! `m` "is the label C_j?" sub-questions in a single query. Stage 2
//! (integrated prediction) dispatches on the number of positive answers:
//!
//! | positives | action                                          | queries |
//! |-----------|-------------------------------------------------|---------|
//! | 0         | full m-class query with the same demonstrations | 2       |
//! | 1         | that label, no further query                    | 1       |
//! | u > 1     | query restricted to the u positive labels       | 2       |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, ModelRequest};
use crate::dataset::{IncompleteView, LabelSet, Query, UNMATCHED};
use crate::prompting::{
    build_iterative_judgment_prompt, build_multiclass_prompt, parse_judgments, parse_label,
    JudgmentVector, PromptError, RenderedPrompt, Templates,
};
use crate::retrieval::{DemonstrationSet, RetrievalError, Selector, StrategyConfig};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("judgment vector has {got} answers but the label set has {expected}")]
    LabelCountMismatch { expected: usize, got: usize },
}

/// A predicted label, or [`UNMATCHED`] when the reply named no candidate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Prediction {
    Label(String),
    Unmatched,
}

impl Prediction {
    pub fn as_str(&self) -> &str {
        match self {
            Prediction::Label(l) => l,
            Prediction::Unmatched => UNMATCHED,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Unmatched => None,
        }
    }

    /// Unmatched never equals any gold label.
    pub fn is_correct(&self, gold: &str) -> bool {
        self.label() == Some(gold)
    }
}

impl Serialize for Prediction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == UNMATCHED {
            Prediction::Unmatched
        } else {
            Prediction::Label(s)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchCase {
    /// No positive judgment: full m-class query.
    Case0,
    /// Exactly one positive judgment: assigned directly.
    Case1,
    /// `u > 1` positive judgments: restricted u-class query.
    CaseU(usize),
}

impl DispatchCase {
    pub fn for_count(indicator_count: usize) -> Self {
        match indicator_count {
            0 => DispatchCase::Case0,
            1 => DispatchCase::Case1,
            u => DispatchCase::CaseU(u),
        }
    }

    pub fn query_count(self) -> usize {
        match self {
            DispatchCase::Case1 => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub stage: String,
    pub prompt_hash: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IjipOutcome {
    pub query_id: String,
    pub prediction: Prediction,
    pub dispatch_case: DispatchCase,
    pub judgment: JudgmentVector,
    pub indicator_count: usize,
    pub positive_labels: Vec<String>,
    pub query_count: usize,
    pub demonstrations: DemonstrationSet,
    pub transcripts: Vec<Transcript>,
    /// Candidates offered in stage 2 (empty for case 1).
    pub stage2_candidates: Vec<String>,
}

/// Single-query baseline result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub query_id: String,
    pub prediction: Prediction,
    pub query_count: usize,
    pub demonstrations: DemonstrationSet,
    pub transcripts: Vec<Transcript>,
}

/// Runs prompts against a backend. Holds no mutable state; one engine can
/// serve many threads.
pub struct Engine<'a> {
    backend: &'a dyn Backend,
    templates: &'a Templates,
    max_tokens: u32,
}

impl<'a> Engine<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a Templates) -> Self {
        Self {
            backend,
            templates,
            max_tokens: 256,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    fn ask(&self, prompt: RenderedPrompt, query: &Query, stage: &str) -> Result<Transcript, EngineError> {
        let prompt_hash = prompt.hash();
        let tag = format!("{}:{stage}", query.id);
        let request = ModelRequest::new(prompt, query.id.clone(), self.max_tokens, tag)?;
        let response = self.backend.complete(&request)?;
        Ok(Transcript {
            stage: stage.to_string(),
            prompt_hash,
            reply: response.text,
        })
    }

    /// Stage 1 with demonstrations already selected.
    fn judge(
        &self,
        demos: &DemonstrationSet,
        labelset: &LabelSet,
        query: &Query,
    ) -> Result<(JudgmentVector, Transcript), EngineError> {
        let prompt = build_iterative_judgment_prompt(demos, labelset, &query.payload, self.templates);
        let transcript = self.ask(prompt, query, "iterative_judgment")?;
        let judgment = parse_judgments(&transcript.reply, labelset.len()).unwrap_or_else(|_| {
            log::warn!("{}: unparseable judgment reply; falling back to m-class", query.id);
            JudgmentVector::failed(labelset.len())
        });
        Ok((judgment, transcript))
    }

    /// Stage 1: one retrieval, one consolidated query.
    pub fn iterative_judgments(
        &self,
        selector: &Selector<'_>,
        labelset: &LabelSet,
        query: &Query,
    ) -> Result<(JudgmentVector, DemonstrationSet, Transcript), EngineError> {
        let demos = selector.select(query)?;
        let (judgment, transcript) = self.judge(&demos, labelset, query)?;
        Ok((judgment, demos, transcript))
    }

    /// Stage 2: dispatch on the number of positive judgments, reusing the
    /// stage-1 demonstrations with their original labels.
    pub fn integrated_prediction(
        &self,
        judgment: JudgmentVector,
        demos: DemonstrationSet,
        labelset: &LabelSet,
        query: &Query,
        mut transcripts: Vec<Transcript>,
    ) -> Result<IjipOutcome, EngineError> {
        if judgment.len() != labelset.len() {
            return Err(EngineError::LabelCountMismatch {
                expected: labelset.len(),
                got: judgment.len(),
            });
        }
        let indicator_count = judgment.indicator_count();
        let positive_labels = judgment.positive_labels(labelset);
        let dispatch_case = DispatchCase::for_count(indicator_count);

        let (prediction, stage2_candidates) = match dispatch_case {
            DispatchCase::Case1 => (Prediction::Label(positive_labels[0].clone()), Vec::new()),
            DispatchCase::Case0 | DispatchCase::CaseU(_) => {
                let candidates = if dispatch_case == DispatchCase::Case0 {
                    labelset.labels().to_vec()
                } else {
                    positive_labels.clone()
                };
                let prompt =
                    build_multiclass_prompt(&demos, &candidates, labelset, &query.payload, self.templates)?;
                let stage = prompt.mode.as_str();
                let transcript = self.ask(prompt, query, stage)?;
                let prediction = match parse_label(&transcript.reply, &candidates) {
                    Ok(label) => Prediction::Label(label),
                    Err(e) => {
                        log::warn!("{}: stage-2 reply unmatched ({e})", query.id);
                        Prediction::Unmatched
                    }
                };
                transcripts.push(transcript);
                (prediction, candidates)
            }
        };

        Ok(IjipOutcome {
            query_id: query.id.clone(),
            prediction,
            dispatch_case,
            indicator_count,
            positive_labels,
            query_count: transcripts.len(),
            judgment,
            demonstrations: demos,
            transcripts,
            stage2_candidates,
        })
    }

    /// Both stages with strategy-selected demonstrations.
    pub fn classify(&self, selector: &Selector<'_>, labelset: &LabelSet, query: &Query) -> Result<IjipOutcome, EngineError> {
        let (judgment, demos, transcript) = self.iterative_judgments(selector, labelset, query)?;
        self.integrated_prediction(judgment, demos, labelset, query, vec![transcript])
    }

    /// Both stages with no demonstrations.
    pub fn classify_zero_shot(&self, labelset: &LabelSet, query: &Query) -> Result<IjipOutcome, EngineError> {
        let demos = DemonstrationSet::empty();
        let (judgment, transcript) = self.judge(&demos, labelset, query)?;
        self.integrated_prediction(judgment, demos, labelset, query, vec![transcript])
    }

    /// Plain single-query m-class classification with selected demonstrations.
    pub fn baseline_classify(
        &self,
        selector: &Selector<'_>,
        labelset: &LabelSet,
        query: &Query,
    ) -> Result<BaselineOutcome, EngineError> {
        let demos = selector.select(query)?;
        self.baseline_with(demos, labelset, query)
    }

    /// Single-query m-class classification without demonstrations.
    pub fn baseline_zero_shot(&self, labelset: &LabelSet, query: &Query) -> Result<BaselineOutcome, EngineError> {
        self.baseline_with(DemonstrationSet::empty(), labelset, query)
    }

    fn baseline_with(
        &self,
        demos: DemonstrationSet,
        labelset: &LabelSet,
        query: &Query,
    ) -> Result<BaselineOutcome, EngineError> {
        let candidates = labelset.labels().to_vec();
        let prompt = build_multiclass_prompt(&demos, &candidates, labelset, &query.payload, self.templates)?;
        let transcript = self.ask(prompt, query, "multiclass")?;
        let prediction = parse_label(&transcript.reply, &candidates)
            .map(Prediction::Label)
            .unwrap_or(Prediction::Unmatched);
        Ok(BaselineOutcome {
            query_id: query.id.clone(),
            prediction,
            query_count: 1,
            demonstrations: demos,
            transcripts: vec![transcript],
        })
    }
}

/// Convenience wrapper: build a selector for `view` and run both stages.
pub fn classify(
    view: &IncompleteView<'_>,
    query: &Query,
    strategy: StrategyConfig,
    backend: &dyn Backend,
    templates: &Templates,
) -> Result<IjipOutcome, EngineError> {
    let selector = Selector::new(strategy, view)?;
    Engine::new(backend, templates).classify(&selector, view.labelset(), query)
}

/// Convenience wrapper for the single-query baseline.
pub fn baseline_classify(
    view: &IncompleteView<'_>,
    query: &Query,
    strategy: StrategyConfig,
    backend: &dyn Backend,
    templates: &Templates,
) -> Result<BaselineOutcome, EngineError> {
    let selector = Selector::new(strategy, view)?;
    Engine::new(backend, templates).baseline_classify(&selector, view.labelset(), query)
}
