//! Experiment runner: methods × missing proportions × demonstration counts ×
//! repeats, with accuracy aggregation and report rendering.

mod config;
mod report;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BackendSpec, DataFiles, ExperimentConfig, HttpSpec, MethodSpec, MockPreset, MockSpec};
pub use report::{emit_report, render_report, ReportFormat};

use crate::backend::{
    AuditLog, Audited, Backend, BackendError, ErrorScaling, HttpBackend, MockOracle, OracleConfig,
};
use crate::dataset::{mask_labels, DatasetError, IncompleteView, QuerySet, RetrievalDatabase};
use crate::engine::{DispatchCase, Engine, EngineError, Prediction};
use crate::prompting::{TemplateError, Templates};
use crate::retrieval::{DemonstrationSet, RetrievalError, Selector, StrategyConfig};
use crate::seed::repeat_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("test label set {test:?} differs from database label set {database:?}")]
    LabelSetMismatch { test: Vec<String>, database: Vec<String> },
    #[error("accuracy of an empty result set is undefined")]
    EmptyResults,
    #[error("report: {0}")]
    Report(String),
}

/// Supplies the backend for a repeat. Seeded backends (the mock oracle) get
/// a fresh seed per repeat; stateless ones can ignore it.
pub trait BackendProvider: Send + Sync {
    fn backend_for(&self, seed: u64) -> Result<Arc<dyn Backend>, HarnessError>;
}

/// Always returns the same backend.
pub struct SharedBackend(pub Arc<dyn Backend>);

impl BackendProvider for SharedBackend {
    fn backend_for(&self, _seed: u64) -> Result<Arc<dyn Backend>, HarnessError> {
        Ok(Arc::clone(&self.0))
    }
}

/// Mock oracle reseeded per repeat.
pub struct MockProvider {
    pub spec: MockSpec,
    pub truth: Arc<HashMap<String, String>>,
    pub label_count: usize,
}

impl MockProvider {
    pub fn oracle_config(&self, seed: u64) -> OracleConfig {
        let (flip, err, scaled) = self.spec.effective();
        OracleConfig {
            binary_flip_prob: flip,
            multiclass_error_prob: err,
            seed,
            error_scaling: if scaled {
                ErrorScaling::ByCandidateCount {
                    full: self.label_count,
                }
            } else {
                ErrorScaling::Constant
            },
            truth: Arc::clone(&self.truth),
        }
    }
}

impl BackendProvider for MockProvider {
    fn backend_for(&self, seed: u64) -> Result<Arc<dyn Backend>, HarnessError> {
        let oracle = MockOracle::new(self.oracle_config(seed))?.with_max_in_flight(self.spec.max_in_flight);
        Ok(Arc::new(oracle))
    }
}

struct AuditedProvider {
    inner: Box<dyn BackendProvider>,
    log: Arc<AuditLog>,
}

impl BackendProvider for AuditedProvider {
    fn backend_for(&self, seed: u64) -> Result<Arc<dyn Backend>, HarnessError> {
        let inner = self.inner.backend_for(seed)?;
        Ok(Arc::new(Audited::new(inner, Arc::clone(&self.log))))
    }
}

/// Builds the provider described by `config`; the mock's truth comes from
/// the query set's gold labels.
pub fn provider_for(
    config: &ExperimentConfig,
    queries: &QuerySet,
) -> Result<Box<dyn BackendProvider>, HarnessError> {
    let provider: Box<dyn BackendProvider> = match &config.backend {
        BackendSpec::Mock(spec) => {
            let truth = queries
                .queries
                .iter()
                .zip(&queries.gold)
                .map(|(q, g)| (q.id.clone(), g.clone()))
                .collect();
            Box::new(MockProvider {
                spec: spec.clone(),
                truth: Arc::new(truth),
                label_count: queries.labelset.len(),
            })
        }
        BackendSpec::Http(spec) => Box::new(SharedBackend(Arc::new(HttpBackend::new(spec.to_config()?)?))),
    };
    Ok(match &config.audit_log {
        Some(path) => {
            let log = AuditLog::append_to(path).map_err(|e| HarnessError::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            Box::new(AuditedProvider {
                inner: provider,
                log: Arc::new(log),
            })
        }
        None => provider,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoRef {
    pub id: String,
    pub label: String,
}

/// One classified query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub gold: String,
    pub prediction: Prediction,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dispatch_case: Option<DispatchCase>,
    pub query_count: usize,
    pub short_set: bool,
    pub demonstrations: Vec<DemoRef>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl QueryRecord {
    pub fn is_correct(&self) -> bool {
        self.prediction.is_correct(&self.gold)
    }
}

/// Fraction of records whose prediction equals the gold label.
pub fn accuracy(records: &[QueryRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Counts of stage-2 dispatch outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseMix {
    pub case0: usize,
    pub case1: usize,
    pub case_u: usize,
}

impl CaseMix {
    fn of(records: &[QueryRecord]) -> Option<Self> {
        let mut mix = CaseMix::default();
        let mut any = false;
        for case in records.iter().filter_map(|r| r.dispatch_case) {
            any = true;
            match case {
                DispatchCase::Case0 => mix.case0 += 1,
                DispatchCase::Case1 => mix.case1 += 1,
                DispatchCase::CaseU(_) => mix.case_u += 1,
            }
        }
        any.then_some(mix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: String,
    pub proportion: f64,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub masked_labels: Vec<String>,
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub case_mix: Option<CaseMix>,
    pub records: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub proportion: f64,
    pub k: usize,
    /// Mean over successful repeats; `None` if every repeat failed.
    pub mean_accuracy: Option<f64>,
    pub repeats: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    fn from_trials(trials: Vec<TrialResult>) -> Self {
        let mut aggregates: Vec<Aggregate> = Vec::new();
        for t in &trials {
            let idx = match aggregates
                .iter()
                .position(|a| a.method == t.method && a.proportion == t.proportion && a.k == t.k)
            {
                Some(i) => i,
                None => {
                    aggregates.push(Aggregate {
                        method: t.method.clone(),
                        proportion: t.proportion,
                        k: t.k,
                        mean_accuracy: None,
                        repeats: 0,
                        failed: 0,
                    });
                    aggregates.len() - 1
                }
            };
            let a = &mut aggregates[idx];
            match t.accuracy {
                Some(acc) => {
                    // Running sum; divided below.
                    a.mean_accuracy = Some(a.mean_accuracy.unwrap_or(0.0) + acc);
                    a.repeats += 1;
                }
                None => a.failed += 1,
            }
        }
        for a in &mut aggregates {
            a.mean_accuracy = a.mean_accuracy.map(|s| s / a.repeats as f64);
        }
        Self { trials, aggregates }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(|t| t.failure.is_some())
    }

    pub fn aggregate(&self, method: &str, proportion: f64, k: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.proportion == proportion && a.k == k)
    }
}

/// Loaded data plus everything needed to run trials.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub database: RetrievalDatabase,
    pub queries: QuerySet,
    pub templates: Templates,
    provider: Box<dyn BackendProvider>,
}

impl Experiment {
    /// Loads data files and templates named in `config`.
    pub fn open(config: ExperimentConfig) -> Result<Self, HarnessError> {
        let db = RetrievalDatabase::open(
            &config.database.manifest,
            &config.database.embeddings,
            config.database.aux_embeddings.as_deref(),
        )?;
        let mut queries = QuerySet::open(
            &config.test.manifest,
            &config.test.embeddings,
            config.test.aux_embeddings.as_deref(),
        )?;
        if let Some(n) = config.test_limit {
            queries.queries.truncate(n);
            queries.gold.truncate(n);
        }
        let templates = match &config.template_dir {
            Some(dir) => Templates::from_dir(dir)?,
            None => Templates::default(),
        };
        let provider = provider_for(&config, &queries)?;
        Self::with_provider(config, db, queries, templates, provider)
    }

    pub fn with_provider(
        config: ExperimentConfig,
        database: RetrievalDatabase,
        queries: QuerySet,
        templates: Templates,
        provider: Box<dyn BackendProvider>,
    ) -> Result<Self, HarnessError> {
        if queries.labelset != *database.labelset() {
            return Err(HarnessError::LabelSetMismatch {
                test: queries.labelset.labels().to_vec(),
                database: database.labelset().labels().to_vec(),
            });
        }
        if queries.is_empty() {
            return Err(HarnessError::Config("test set is empty".into()));
        }
        config.validate(Some(database.labelset().len()))?;
        Ok(Self {
            config,
            database,
            queries,
            templates,
            provider,
        })
    }

    /// Every method × proportion × repeat at the configured `k`.
    pub fn run(&self) -> SweepResult {
        self.run_grid(&[self.config.k])
    }

    /// Like [`Experiment::run`] for each demonstration count in `ks`.
    pub fn sweep_demonstrations(&self, ks: &[usize]) -> SweepResult {
        self.run_grid(ks)
    }

    fn run_grid(&self, ks: &[usize]) -> SweepResult {
        let mut trials = Vec::new();
        for method in &self.config.methods {
            for &p in &self.config.missing_proportions {
                for &k in ks {
                    for r in 0..self.config.repeats {
                        trials.push(self.run_trial(method, p, k, r));
                    }
                }
            }
        }
        SweepResult::from_trials(trials)
    }

    /// One trial. Backend failures mark individual queries ⊥; anything
    /// else fails the whole trial.
    pub fn run_trial(&self, method: &MethodSpec, proportion: f64, k: usize, repeat: usize) -> TrialResult {
        let seed = repeat_seed(self.config.master_seed, repeat);
        let mut trial = TrialResult {
            method: method.name(),
            proportion,
            k,
            repeat,
            seed,
            masked_labels: Vec::new(),
            accuracy: None,
            failure: None,
            case_mix: None,
            records: Vec::new(),
        };
        match self.trial_records(method, proportion, k, seed, &mut trial.masked_labels) {
            Ok(records) => {
                trial.accuracy = accuracy(&records).ok();
                trial.case_mix = CaseMix::of(&records);
                trial.records = records;
            }
            Err(e) => {
                log::error!("{} p={proportion} k={k} repeat {repeat}: {e}", trial.method);
                trial.failure = Some(e.to_string());
            }
        }
        trial
    }

    fn trial_records(
        &self,
        method: &MethodSpec,
        proportion: f64,
        k: usize,
        seed: u64,
        masked: &mut Vec<String>,
    ) -> Result<Vec<QueryRecord>, HarnessError> {
        let view = mask_labels(&self.database, proportion, seed)?;
        masked.extend(view.masked_labels().iter().cloned());
        let backend = self.provider.backend_for(seed)?;
        let engine = Engine::new(backend.as_ref(), &self.templates).with_max_tokens(self.config.max_tokens);
        let selector = method
            .strategy()
            .map(|kind| {
                let strategy = StrategyConfig {
                    rerank_pool: self.config.rerank_pool,
                    kmeans_iters: self.config.kmeans_iters,
                    ..StrategyConfig::new(kind, k).with_seed(seed)
                };
                Selector::new(strategy, &view)
            })
            .transpose()?;

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(backend.max_in_flight().max(1))
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let indices: Vec<usize> = (0..self.queries.len()).collect();
        pool.install(|| {
            indices
                .par_iter()
                .map(|&i| self.classify_one(&engine, method, selector.as_ref(), &view, i))
                .collect()
        })
    }

    fn classify_one(
        &self,
        engine: &Engine<'_>,
        method: &MethodSpec,
        selector: Option<&Selector<'_>>,
        view: &IncompleteView<'_>,
        index: usize,
    ) -> Result<QueryRecord, HarnessError> {
        let query = &self.queries.queries[index];
        let labelset = view.labelset();
        let outcome = match (method, selector) {
            (MethodSpec::Ijip { .. }, Some(sel)) => engine.classify(sel, labelset, query).map(|o| {
                let case = o.dispatch_case;
                (o.prediction, Some(case), o.query_count, o.demonstrations)
            }),
            (MethodSpec::ZeroShotIjip { .. }, _) => engine.classify_zero_shot(labelset, query).map(|o| {
                let case = o.dispatch_case;
                (o.prediction, Some(case), o.query_count, o.demonstrations)
            }),
            (MethodSpec::Baseline { .. }, Some(sel)) => engine
                .baseline_classify(sel, labelset, query)
                .map(|o| (o.prediction, None, o.query_count, o.demonstrations)),
            (MethodSpec::ZeroShot { .. }, _) => engine
                .baseline_zero_shot(labelset, query)
                .map(|o| (o.prediction, None, o.query_count, o.demonstrations)),
            _ => unreachable!("strategy methods always have a selector"),
        };
        let gold = self.queries.gold[index].clone();
        match outcome {
            Ok((prediction, dispatch_case, query_count, demos)) => Ok(QueryRecord {
                id: query.id.clone(),
                gold,
                prediction,
                dispatch_case,
                query_count,
                short_set: demos.short_set,
                demonstrations: demo_refs(&demos),
                error: None,
            }),
            Err(EngineError::Backend(e)) => {
                log::warn!("query {}: {e}", query.id);
                Ok(QueryRecord {
                    id: query.id.clone(),
                    gold,
                    prediction: Prediction::Unmatched,
                    dispatch_case: None,
                    query_count: 0,
                    short_set: false,
                    demonstrations: Vec::new(),
                    error: Some(e.to_string()),
                })
            }
            Err(e) => Err(e.into()),
        }
    }
}

fn demo_refs(demos: &DemonstrationSet) -> Vec<DemoRef> {
    demos
        .items
        .iter()
        .map(|d| DemoRef {
            id: d.id.clone(),
            label: d.label.clone(),
        })
        .collect()
}

/// Loads `config` and runs it at the configured `k`.
pub fn run_experiment(config: ExperimentConfig) -> Result<SweepResult, HarnessError> {
    Ok(Experiment::open(config)?.run())
}
