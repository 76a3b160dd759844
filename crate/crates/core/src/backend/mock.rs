//! Seeded noisy oracle standing in for a vision-language model.
//!
//! Iterative-judgment prompts get one `j: yes|no` line per sub-question, the
//! correct answer flipped independently with probability `binary_flip_prob`.
//! Multiclass and restricted prompts get the gold label with probability
//! `1 - error`, otherwise a uniformly drawn wrong candidate; when the gold
//! label is not a candidate the answer is uniform over the candidates.
//!
//! Every draw is keyed by `(seed, query id, mode, candidate set, slot)`, so
//! replies are a pure function of those inputs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ModelRequest, ModelResponse};
use crate::prompting::PromptMode;
use crate::seed::SeedKey;

/// How the multiclass error rate depends on the number of candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScaling {
    /// `multiclass_error_prob` for every candidate-set size.
    #[default]
    Constant,
    /// `multiclass_error_prob * (c - 1) / (full - 1)` for `c` candidates, so
    /// narrower choices are answered more reliably.
    ByCandidateCount { full: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub binary_flip_prob: f64,
    pub multiclass_error_prob: f64,
    pub seed: u64,
    pub error_scaling: ErrorScaling,
    pub truth: Arc<HashMap<String, String>>,
}

impl OracleConfig {
    pub fn noiseless(truth: HashMap<String, String>) -> Self {
        Self {
            binary_flip_prob: 0.0,
            multiclass_error_prob: 0.0,
            seed: 0,
            error_scaling: ErrorScaling::Constant,
            truth: Arc::new(truth),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=0.5).contains(&self.binary_flip_prob) {
            return Err(BackendError::InvalidOracle(format!(
                "binary_flip_prob {} outside [0, 0.5]",
                self.binary_flip_prob
            )));
        }
        if !(0.0..1.0).contains(&self.multiclass_error_prob) {
            return Err(BackendError::InvalidOracle(format!(
                "multiclass_error_prob {} outside [0, 1)",
                self.multiclass_error_prob
            )));
        }
        if let ErrorScaling::ByCandidateCount { full } = self.error_scaling {
            if full < 2 {
                return Err(BackendError::InvalidOracle(
                    "candidate scaling needs full >= 2".into(),
                ));
            }
        }
        Ok(())
    }

    /// Error probability for a choice among `candidates` labels.
    pub fn choice_error(&self, candidates: usize) -> f64 {
        match self.error_scaling {
            ErrorScaling::Constant => self.multiclass_error_prob,
            ErrorScaling::ByCandidateCount { full } => {
                let ratio = (candidates.saturating_sub(1)) as f64 / (full - 1) as f64;
                (self.multiclass_error_prob * ratio).min(self.multiclass_error_prob)
            }
        }
    }
}

fn draw_key(config: &OracleConfig, query_id: &str, mode: PromptMode, candidates: &[String]) -> SeedKey {
    let mut key = SeedKey::new("oracle");
    key.push_u64(config.seed)
        .push_str(query_id)
        .push_str(mode.as_str())
        .push_u64(candidates.len() as u64);
    for c in candidates {
        key.push_str(c);
    }
    key
}

/// The oracle's reply text for one prompt.
pub fn mock_oracle_answer(
    query_id: &str,
    mode: PromptMode,
    candidates: &[String],
    config: &OracleConfig,
) -> Result<String, BackendError> {
    let gold = config
        .truth
        .get(query_id)
        .ok_or_else(|| BackendError::MissingTruth(query_id.to_string()))?;
    let key = draw_key(config, query_id, mode, candidates);

    match mode {
        PromptMode::IterativeJudgment => {
            let lines: Vec<String> = candidates
                .iter()
                .enumerate()
                .map(|(j, label)| {
                    let correct = label == gold;
                    let flip = key.clone().with_str("flip").with_u64(j as u64).unit()
                        < config.binary_flip_prob;
                    let yes = correct != flip;
                    format!("{}: {}", j + 1, if yes { "yes" } else { "no" })
                })
                .collect();
            Ok(lines.join("\n"))
        }
        PromptMode::Multiclass | PromptMode::Restricted => {
            if candidates.is_empty() {
                return Err(BackendError::InvalidRequest("no candidates".into()));
            }
            let pick = |pool: &[&String]| -> String {
                let u = key.clone().with_str("pick").unit();
                let i = ((u * pool.len() as f64) as usize).min(pool.len() - 1);
                pool[i].clone()
            };
            if !candidates.contains(gold) {
                let pool: Vec<&String> = candidates.iter().collect();
                return Ok(pick(&pool));
            }
            let wrong = key.clone().with_str("err").unit() < config.choice_error(candidates.len());
            let pool: Vec<&String> = candidates.iter().filter(|c| *c != gold).collect();
            if wrong && !pool.is_empty() {
                Ok(pick(&pool))
            } else {
                Ok(gold.clone())
            }
        }
    }
}

/// [`Backend`] that answers with [`mock_oracle_answer`].
#[derive(Debug, Clone)]
pub struct MockOracle {
    config: OracleConfig,
    max_in_flight: usize,
}

impl MockOracle {
    pub fn new(config: OracleConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Self {
            config,
            max_in_flight: 4,
        })
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }
}

impl Backend for MockOracle {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let start = Instant::now();
        let text = mock_oracle_answer(
            &request.query_id,
            request.prompt.mode,
            &request.prompt.candidate_labels,
            &self.config,
        )?;
        Ok(ModelResponse {
            raw: text.clone(),
            text,
            latency: start.elapsed(),
            backend: "mock".into(),
        })
    }

    fn name(&self) -> &str {
        "mock"
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

type Script = dyn Fn(&ModelRequest) -> Result<String, String> + Send + Sync;

/// Backend driven by a closure; records every request it receives.
pub struct ScriptedBackend {
    script: Box<Script>,
    requests: Mutex<Vec<ModelRequest>>,
}

impl ScriptedBackend {
    pub fn new(script: impl Fn(&ModelRequest) -> Result<String, String> + Send + Sync + 'static) -> Self {
        Self {
            script: Box::new(script),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn take_requests(&self) -> Vec<ModelRequest> {
        std::mem::take(&mut *self.requests.lock().unwrap())
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        self.requests.lock().unwrap().push(request.clone());
        let text = (self.script)(request).map_err(BackendError::Scripted)?;
        Ok(ModelResponse {
            raw: text.clone(),
            text,
            latency: Duration::ZERO,
            backend: "scripted".into(),
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
