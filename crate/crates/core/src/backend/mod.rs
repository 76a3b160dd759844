//! Model backends: a hosted chat-completion endpoint and a seeded mock
//! oracle, both behind [`Backend`].

mod audit;
mod http;
mod mock;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{AuditLog, AuditRecord, Audited};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{mock_oracle_answer, ErrorScaling, MockOracle, OracleConfig, ScriptedBackend};

use crate::prompting::{hex_digest, RenderedPrompt};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network failure after {attempts} attempt(s): {message}")]
    Network { attempts: usize, message: String },
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("oracle has no gold label for query {0:?}")]
    MissingTruth(String),
    #[error("invalid oracle config: {0}")]
    InvalidOracle(String),
    #[error("reading payload {path}: {message}")]
    Payload { path: String, message: String },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("scripted backend: {0}")]
    Scripted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub prompt: RenderedPrompt,
    /// Id of the instance being classified; used by the mock oracle and in
    /// audit records, never sent over the wire.
    pub query_id: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub tag: String,
}

impl ModelRequest {
    pub fn new(
        prompt: RenderedPrompt,
        query_id: impl Into<String>,
        max_tokens: u32,
        tag: impl Into<String>,
    ) -> Result<Self, BackendError> {
        let request = Self {
            prompt,
            query_id: query_id.into(),
            max_tokens,
            temperature: 0.0,
            tag: tag.into(),
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        let n = self.prompt.query_payload_count();
        if n != 1 {
            return Err(BackendError::InvalidRequest(format!(
                "expected exactly one query payload, found {n}"
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("request serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub latency: Duration,
    pub backend: String,
    /// Raw transcript (response body for HTTP).
    pub raw: String,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;

    fn name(&self) -> &str;

    /// Upper bound on concurrent in-flight requests.
    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

/// Free-function form of [`Backend::complete`] that validates the request first.
pub fn complete(request: &ModelRequest, backend: &dyn Backend) -> Result<ModelResponse, BackendError> {
    request.validate()?;
    backend.complete(request)
}
