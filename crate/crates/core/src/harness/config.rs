//! TOML experiment configuration.
//!
//! ```toml
//! k = 5
//! missing_proportions = [0.1, 0.4, 0.9]
//! repeats = 3
//! master_seed = 0
//!
//! [database]
//! manifest = "db.jsonl"
//! embeddings = "db.ijeb"
//!
//! [test]
//! manifest = "test.jsonl"
//! embeddings = "test.ijeb"
//!
//! [backend]
//! kind = "mock"
//! binary_flip_prob = 0.02
//! multiclass_error_prob = 0.133
//!
//! [[methods]]
//! kind = "ijip"
//! strategy = "kate"
//!
//! [[methods]]
//! kind = "baseline"
//! strategy = "random"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backend::HttpConfig;
use crate::dataset::masked_count;
use crate::retrieval::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_embeddings: Option<PathBuf>,
}

impl DataFiles {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.manifest);
        join(&mut self.embeddings);
        if let Some(aux) = &mut self.aux_embeddings {
            join(aux);
        }
    }
}

/// Named oracle settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPreset {
    /// Binary flips 0.02; m-class error 0.133 scaled down linearly with the
    /// number of candidates, so restricted choices are easier than full ones.
    RestrictedAdvantage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    #[serde(default)]
    pub binary_flip_prob: f64,
    #[serde(default)]
    pub multiclass_error_prob: f64,
    #[serde(default)]
    pub scale_by_candidates: bool,
    /// When set, replaces the three fields above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<MockPreset>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl Default for MockSpec {
    fn default() -> Self {
        Self {
            binary_flip_prob: 0.0,
            multiclass_error_prob: 0.0,
            scale_by_candidates: false,
            preset: None,
            max_in_flight: default_in_flight(),
        }
    }
}

impl MockSpec {
    pub fn restricted_advantage() -> Self {
        Self {
            preset: Some(MockPreset::RestrictedAdvantage),
            ..Self::default()
        }
    }

    /// `(binary_flip_prob, multiclass_error_prob, scale_by_candidates)`.
    pub fn effective(&self) -> (f64, f64, bool) {
        match self.preset {
            Some(MockPreset::RestrictedAdvantage) => (0.02, 0.133, true),
            None => (
                self.binary_flip_prob,
                self.multiclass_error_prob,
                self.scale_by_candidates,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSpec {
    /// Falls back to `IJIP_API_BASE`.
    #[serde(default)]
    pub api_base: Option<String>,
    /// Falls back to `IJIP_MODEL`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl HttpSpec {
    /// Config values override the environment; `IJIP_API_KEY` is always
    /// read from the environment.
    pub fn to_config(&self) -> Result<HttpConfig, HarnessError> {
        let env = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let base = self
            .api_base
            .clone()
            .or_else(|| env("IJIP_API_BASE"))
            .ok_or_else(|| HarnessError::Config("no api_base and IJIP_API_BASE unset".into()))?;
        let model = self
            .model
            .clone()
            .or_else(|| env("IJIP_MODEL"))
            .ok_or_else(|| HarnessError::Config("no model and IJIP_MODEL unset".into()))?;
        let mut config = HttpConfig::new(base, model);
        config.api_key = env("IJIP_API_KEY");
        config.max_retries = self.max_retries;
        config.max_in_flight = self.max_in_flight;
        config.timeout = Duration::from_secs(self.timeout_secs);
        Ok(config)
    }
}

impl Default for HttpSpec {
    fn default() -> Self {
        Self {
            api_base: None,
            model: None,
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock(MockSpec),
    Http(HttpSpec),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Mock(MockSpec::default())
    }
}

fn default_strategy() -> StrategyKind {
    StrategyKind::Kate
}

/// A method to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Two-stage method with strategy-selected demonstrations.
    Ijip {
        #[serde(default = "default_strategy")]
        strategy: StrategyKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Two-stage method without demonstrations.
    ZeroShotIjip {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Single m-class query with strategy-selected demonstrations.
    Baseline {
        strategy: StrategyKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Single m-class query without demonstrations.
    ZeroShot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl MethodSpec {
    pub fn name(&self) -> String {
        match self {
            MethodSpec::Ijip { name: Some(n), .. }
            | MethodSpec::ZeroShotIjip { name: Some(n) }
            | MethodSpec::Baseline { name: Some(n), .. }
            | MethodSpec::ZeroShot { name: Some(n) } => n.clone(),
            MethodSpec::Ijip {
                strategy: StrategyKind::Kate,
                ..
            } => "ijip".into(),
            MethodSpec::Ijip { strategy, .. } => format!("ijip_{strategy}"),
            MethodSpec::ZeroShotIjip { .. } => "zero_shot_ijip".into(),
            MethodSpec::Baseline { strategy, .. } => strategy.to_string(),
            MethodSpec::ZeroShot { .. } => "zero_shot".into(),
        }
    }

    pub fn strategy(&self) -> Option<StrategyKind> {
        match self {
            MethodSpec::Ijip { strategy, .. } | MethodSpec::Baseline { strategy, .. } => Some(*strategy),
            _ => None,
        }
    }

    pub fn is_two_stage(&self) -> bool {
        matches!(self, MethodSpec::Ijip { .. } | MethodSpec::ZeroShotIjip { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub database: DataFiles,
    pub test: DataFiles,
    #[serde(default)]
    pub backend: BackendSpec,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_proportions")]
    pub missing_proportions: Vec<f64>,
    /// Demonstration counts for `sweep-demos`.
    #[serde(default)]
    pub demo_counts: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_pool: Option<usize>,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_iters: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_log: Option<PathBuf>,
    /// Evaluate only the first `n` test instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
}

fn default_k() -> usize {
    5
}
fn default_proportions() -> Vec<f64> {
    vec![0.0]
}
fn default_repeats() -> usize {
    3
}
fn default_kmeans_iters() -> usize {
    50
}
fn default_max_tokens() -> u32 {
    256
}
fn default_retries() -> usize {
    3
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> u64 {
    120
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.database.resolve(base);
        self.test.resolve(base);
        for p in [&mut self.template_dir, &mut self.audit_log].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Checks everything that does not need the data files; `label_count`
    /// enables the masking check.
    pub fn validate(&self, label_count: Option<usize>) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.repeats == 0 {
            return bad("repeats must be >= 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.k == 0 || self.demo_counts.contains(&0) {
            return bad("demonstration counts must be >= 1".into());
        }
        if self.missing_proportions.is_empty() {
            return bad("missing_proportions is empty".into());
        }
        for &p in &self.missing_proportions {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("missing proportion {p} outside [0, 1)"));
            }
            if let Some(m) = label_count {
                masked_count(p, m).map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate method name {:?}", w[0]));
        }
        Ok(())
    }
}
