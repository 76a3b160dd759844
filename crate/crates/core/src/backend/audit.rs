use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ModelRequest, ModelResponse};

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub tag: String,
    /// Unix epoch milliseconds.
    pub timestamp: u64,
    pub request_hash: String,
    pub reply_text: String,
    pub latency_ms: u64,
}

/// Line-delimited JSON audit log; appends are serialized.
pub struct AuditLog {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl AuditLog {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Mutex::new(sink),
        }
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file: File = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::new(Box::new(BufWriter::new(file))))
    }

    pub fn record(&self, record: &AuditRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        sink.write_all(line.as_bytes())?;
        sink.flush()
    }
}

/// Wraps a backend so every successful call is appended to an [`AuditLog`].
pub struct Audited<B> {
    inner: B,
    log: Arc<AuditLog>,
}

impl<B: Backend> Audited<B> {
    pub fn new(inner: B, log: Arc<AuditLog>) -> Self {
        Self { inner, log }
    }
}

impl<B: Backend> Backend for Audited<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let record = AuditRecord {
            tag: request.tag.clone(),
            timestamp,
            request_hash: request.hash(),
            reply_text: response.text.clone(),
            latency_ms: response.latency.as_millis() as u64,
        };
        if let Err(e) = self.log.record(&record) {
            log::warn!("audit log write failed: {e}");
        }
        Ok(response)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}
