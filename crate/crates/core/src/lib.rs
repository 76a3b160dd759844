//! In-context image classification over a retrieval database whose label
//! coverage is incomplete, via iterative judgments and integrated
//! prediction.
//!
//! The common path: open a [`RetrievalDatabase`], mask it into an
//! [`IncompleteView`], build a [`Selector`] for a strategy, and hand queries
//! to an [`Engine`] backed by any [`Backend`].

pub mod backend;
pub mod dataset;
pub mod engine;
pub mod harness;
pub mod prompting;
pub mod retrieval;
pub mod seed;
pub mod synthetic;

pub use backend::{Backend, BackendError, HttpBackend, HttpConfig, MockOracle, OracleConfig};
pub use dataset::{
    mask_explicit, mask_labels, DatasetError, IncompleteView, Instance, LabelSet, Manifest, Payload, Query,
    QuerySet, RetrievalDatabase, UNMATCHED,
};
pub use engine::{classify, baseline_classify, DispatchCase, Engine, EngineError, IjipOutcome, Prediction};
pub use harness::{ExperimentConfig, HarnessError, SweepResult};
pub use prompting::{parse_judgments, parse_label, JudgmentVector, Templates};
pub use retrieval::{retrieve_topk, DemonstrationSet, Selector, StrategyConfig, StrategyKind};
