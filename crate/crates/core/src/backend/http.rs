//! OpenAI-compatible `POST {base}/chat/completions` client.

use std::env;
use std::fs;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde_json::{json, Value};

use super::{Backend, BackendError, ModelRequest, ModelResponse};
use crate::dataset::Payload;
use crate::prompting::PromptPart;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_retries: usize,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(api_base: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into(),
            api_key: None,
            model: model.into(),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(120),
            max_in_flight: 4,
        }
    }

    /// Reads `IJIP_API_BASE`, `IJIP_API_KEY` and `IJIP_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let base = env::var("IJIP_API_BASE")
            .map_err(|_| BackendError::Config("IJIP_API_BASE is not set".into()))?;
        let model = env::var("IJIP_MODEL")
            .map_err(|_| BackendError::Config("IJIP_MODEL is not set".into()))?;
        let mut config = Self::new(base, model);
        config.api_key = env::var("IJIP_API_KEY").ok().filter(|k| !k.is_empty());
        Ok(config)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.api_base.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: usize) -> Duration {
        let factor = 1u32 << attempt.min(16);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

fn image_part(path: &Path) -> Result<Value, BackendError> {
    let bytes = fs::read(path).map_err(|e| BackendError::Payload {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let url = format!("data:{};base64,{}", mime_for(path), STANDARD.encode(bytes));
    Ok(json!({"type": "image_url", "image_url": {"url": url}}))
}

/// JSON body for a request. Adjacent text (including text payloads) is
/// merged into one text part; images become base64 data URLs.
pub fn request_body(request: &ModelRequest, model: &str) -> Result<Value, BackendError> {
    let mut content: Vec<Value> = Vec::new();
    let mut text = String::new();
    let flush = |text: &mut String, content: &mut Vec<Value>| {
        if !text.is_empty() {
            content.push(json!({"type": "text", "text": std::mem::take(text)}));
        }
    };
    for part in &request.prompt.parts {
        match part {
            PromptPart::Text(t) => text.push_str(t),
            PromptPart::Payload { payload, .. } => match payload {
                Payload::Text(t) => text.push_str(t),
                Payload::Image(path) => {
                    flush(&mut text, &mut content);
                    content.push(image_part(path)?);
                }
            },
        }
    }
    flush(&mut text, &mut content);
    Ok(json!({
        "model": model,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "messages": [{"role": "user", "content": content}],
    }))
}

fn reply_text(body: &Value) -> Result<String, BackendError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::MalformedResponse(format!(
            "unexpected content {other}"
        ))),
    }
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let limit = config.max_in_flight.max(1);
        Ok(Self {
            config,
            client,
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }
}

fn transient_status(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let body = request_body(request, &self.config.model)?;
        let _permit = self.gate.acquire();
        let start = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();

        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.config.backoff(attempt - 1));
            }
            let mut builder = self.client.post(self.config.endpoint()).json(&body);
            if let Some(key) = &self.config.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status().as_u16();
                    let raw = response.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        let parsed: Value = serde_json::from_str(&raw)
                            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                        return Ok(ModelResponse {
                            text: reply_text(&parsed)?,
                            latency: start.elapsed(),
                            backend: format!("http:{}", self.config.model),
                            raw,
                        });
                    }
                    if !transient_status(status) {
                        return Err(BackendError::Status { status, body: raw });
                    }
                    log::warn!("{} returned {status}; attempt {}/{attempts}", request.tag, attempt + 1);
                    last_error = format!("status {status}: {raw}");
                }
                Err(e) => {
                    log::warn!("{} failed: {e}; attempt {}/{attempts}", request.tag, attempt + 1);
                    last_error = e.to_string();
                }
            }
        }
        Err(BackendError::Network {
            attempts,
            message: last_error,
        })
    }

    fn name(&self) -> &str {
        "http"
    }

    fn max_in_flight(&self) -> usize {
        self.gate.limit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{PayloadRole, PromptMode, RenderedPrompt};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    fn request(payload: Payload) -> ModelRequest {
        let prompt = RenderedPrompt {
            mode: PromptMode::Multiclass,
            parts: vec![
                PromptPart::Text("Image: ".into()),
                PromptPart::Payload {
                    role: PayloadRole::Query,
                    payload,
                },
                PromptPart::Text("\nChoose one.".into()),
            ],
            candidate_labels: vec!["a".into(), "b".into()],
        };
        ModelRequest::new(prompt, "q1", 16, "test").unwrap()
    }

    #[test]
    fn body_matches_wire_format() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("x.png");
        fs::write(&img, [1u8, 2, 3]).unwrap();
        let body = request_body(&request(Payload::Image(img)), "m1").unwrap();
        assert_eq!(body["model"], "m1");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 16);
        let content = body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(content.len(), 3);
        assert_eq!(content[0], json!({"type": "text", "text": "Image: "}));
        assert_eq!(
            content[1]["image_url"]["url"],
            format!("data:image/png;base64,{}", STANDARD.encode([1u8, 2, 3]))
        );
        assert_eq!(content[2]["type"], "text");

        let text_body = request_body(&request(Payload::Text("hello".into())), "m1").unwrap();
        let content = text_body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(content, &vec![json!({"type": "text", "text": "Image: hello\nChoose one."})]);
    }

    #[test]
    fn missing_image_is_a_payload_error() {
        let err = request_body(&request(Payload::Image("/nonexistent/x.png".into())), "m").unwrap_err();
        assert!(matches!(err, BackendError::Payload { .. }));
    }

    /// Serves canned `(status, body)` responses, one connection each, and
    /// returns the request bodies it received.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let trimmed = line.trim_end();
                    if trimmed.is_empty() {
                        break;
                    }
                    if let Some(v) = trimmed.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn fast(base: String) -> HttpConfig {
        HttpConfig {
            initial_backoff: Duration::from_millis(5),
            max_backoff: Duration::from_millis(20),
            timeout: Duration::from_secs(10),
            ..HttpConfig::new(base, "test-model")
        }
    }

    #[test]
    fn retries_transient_failures_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"b"}}]}"#.to_string();
        let (base, server) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, ok)]);
        let backend = HttpBackend::new(fast(base)).unwrap();
        let req = request(Payload::Text("t".into()));
        let response = backend.complete(&req).unwrap();
        assert_eq!(response.text, "b");
        let bodies = server.join().unwrap();
        assert_eq!(bodies.len(), 3);
        // Every attempt sends the same bytes.
        assert!(bodies.windows(2).all(|w| w[0] == w[1]));
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent, request_body(&req, "test-model").unwrap());
    }

    #[test]
    fn gives_up_after_retries_and_on_client_errors() {
        let (base, server) = serve(vec![(500, "{}".into()); 3]);
        let mut cfg = fast(base);
        cfg.max_retries = 2;
        let backend = HttpBackend::new(cfg).unwrap();
        let err = backend.complete(&request(Payload::Text("t".into()))).unwrap_err();
        assert!(matches!(err, BackendError::Network { attempts: 3, .. }));
        server.join().unwrap();

        let (base, server) = serve(vec![(401, "{\"error\":\"nope\"}".into())]);
        let backend = HttpBackend::new(fast(base)).unwrap();
        let err = backend.complete(&request(Payload::Text("t".into()))).unwrap_err();
        assert!(matches!(err, BackendError::Status { status: 401, .. }));
        server.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_a_network_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut cfg = fast(format!("http://{addr}"));
        cfg.max_retries = 1;
        let err = HttpBackend::new(cfg)
            .unwrap()
            .complete(&request(Payload::Text("t".into())))
            .unwrap_err();
        assert!(matches!(err, BackendError::Network { attempts: 2, .. }));
    }

    #[test]
    fn in_flight_gate_bounds_concurrency() {
        let gate = Arc::new(Gate {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            limit: 2,
        });
        let peak = Arc::new(Mutex::new(0usize));
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let gate = Arc::clone(&gate);
                let peak = Arc::clone(&peak);
                thread::spawn(move || {
                    let _g = gate.acquire();
                    let now = *gate.in_flight.lock().unwrap();
                    let mut p = peak.lock().unwrap();
                    *p = (*p).max(now);
                    drop(p);
                    thread::sleep(Duration::from_millis(10));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(*peak.lock().unwrap() <= 2);
    }

    #[test]
    fn reply_content_shapes() {
        let s = json!({"choices":[{"message":{"content":"x"}}]});
        assert_eq!(reply_text(&s).unwrap(), "x");
        let parts = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(reply_text(&parts).unwrap(), "ab");
        assert!(reply_text(&json!({"choices": []})).is_err());
    }
}
