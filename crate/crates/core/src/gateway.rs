//! Chat-completion gateway with retries, rate limiting, and record/replay.
//!
//! Three transports share one call contract: `Live` posts to an
//! OpenAI-compatible endpoint, `Record` does the same and appends
//! (prompt_id, response) pairs to a fixture, and `Replay` serves responses
//! from a fixture without ever opening a connection. Replay makes whole
//! augmentation runs hermetic and byte-deterministic.
//!
//! The gateway is shareable across worker threads; it owns the in-flight
//! bound and an optional token-bucket rate limit, and all retries happen
//! internally behind a blocking request/response interface.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Generation temperature used unless overridden.
pub const DEFAULT_TEMPERATURE: f64 = 0.85;

/// Environment variables consulted by [`GatewayConfig::from_env`].
pub const ENV_ENDPOINT: &str = "SMISHKIT_API_URL";
pub const ENV_API_KEY: &str = "SMISHKIT_API_KEY";
pub const ENV_MODEL: &str = "SMISHKIT_MODEL";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("live transport needs an endpoint URL (set {ENV_ENDPOINT})")]
    MissingEndpoint,
    #[error("replay fixture has no entry for prompt_id {prompt_id}")]
    ReplayMiss { prompt_id: String },
    #[error("fixture {path}: {source}")]
    FixtureIo {
        path: String,
        source: std::io::Error,
    },
    #[error("fixture {path} line {line}: {reason}")]
    FixtureParse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("request failed after {attempts} attempts: {last_error}")]
    ExhaustedRetries { attempts: u32, last_error: String },
    #[error("endpoint returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed endpoint response: {reason}")]
    MalformedResponse { reason: String },
    #[error("transport error: {0}")]
    Transport(String),
}

/// One generation request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Optional system message sent before the prompt; empty by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub prompt_id: String,
}

impl GenerationRequest {
    pub fn new(
        model: impl Into<String>,
        temperature: f64,
        prompt: impl Into<String>,
        prompt_id: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(GatewayError::InvalidTemperature(temperature));
        }
        Ok(GenerationRequest {
            model: model.into(),
            temperature,
            prompt: prompt.into(),
            max_tokens: None,
            system: None,
            prompt_id: prompt_id.into(),
        })
    }
}

/// JSON body posted to the chat-completions endpoint. Pure, so tests can
/// assert the wire shape without a network.
pub fn build_request_body(request: &GenerationRequest) -> serde_json::Value {
    let mut messages = Vec::new();
    if let Some(system) = &request.system {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": request.prompt}));
    let mut body = json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": messages,
    });
    if let Some(max_tokens) = request.max_tokens {
        body["max_tokens"] = json!(max_tokens);
    }
    body
}

/// Extract the assistant text from a chat-completions response body.
pub fn extract_response_text(body: &str) -> Result<String, GatewayError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse {
            reason: format!("not JSON: {e}"),
        })?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| GatewayError::MalformedResponse {
            reason: "missing choices[0].message.content".into(),
        })
}

/// Transport selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportMode {
    Live,
    Record { fixture: PathBuf },
    Replay { fixture: PathBuf },
}

impl TransportMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransportMode::Live => "live",
            TransportMode::Record { .. } => "record",
            TransportMode::Replay { .. } => "replay",
        }
    }

    pub fn fixture(&self) -> Option<&Path> {
        match self {
            TransportMode::Live => None,
            TransportMode::Record { fixture } | TransportMode::Replay { fixture } => {
                Some(fixture)
            }
        }
    }
}

/// One fixture line: a prompt id and the raw response it produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_id: String,
    pub response: String,
}

/// Load a JSONL fixture into a prompt_id -> response map. Later entries for
/// the same id win, matching append semantics.
pub fn load_fixture(path: &Path) -> Result<HashMap<String, String>, GatewayError> {
    let data = std::fs::read_to_string(path).map_err(|source| GatewayError::FixtureIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut map = HashMap::new();
    for (idx, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: FixtureEntry =
            serde_json::from_str(line).map_err(|e| GatewayError::FixtureParse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
        map.insert(entry.prompt_id, entry.response);
    }
    Ok(map)
}

/// Exponential backoff policy for transient failures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 200,
            max_backoff_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

/// Gateway configuration; the credential never appears in Debug output.
#[derive(Clone)]
pub struct GatewayConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    /// Optional system message prepended to every request; empty default.
    pub system_prompt: Option<String>,
    pub retry: RetryPolicy,
    pub max_inflight: usize,
    pub requests_per_minute: Option<f64>,
    pub timeout: Duration,
}

impl std::fmt::Debug for GatewayConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GatewayConfig")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .field("max_tokens", &self.max_tokens)
            .field("retry", &self.retry)
            .field("max_inflight", &self.max_inflight)
            .field("requests_per_minute", &self.requests_per_minute)
            .finish()
    }
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: None,
            api_key: None,
            model: "gpt-4-turbo".to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
            system_prompt: None,
            retry: RetryPolicy::default(),
            max_inflight: 4,
            requests_per_minute: None,
            timeout: Duration::from_secs(60),
        }
    }
}

impl GatewayConfig {
    /// Fill endpoint, key, and model from the environment where present.
    pub fn from_env() -> Self {
        let mut config = GatewayConfig {
            endpoint: std::env::var(ENV_ENDPOINT).ok().filter(|v| !v.is_empty()),
            api_key: std::env::var(ENV_API_KEY).ok().filter(|v| !v.is_empty()),
            ..GatewayConfig::default()
        };
        if let Ok(model) = std::env::var(ENV_MODEL) {
            if !model.is_empty() {
                config.model = model;
            }
        }
        config
    }
}

/// Counting semaphore bounding in-flight network requests.
struct Inflight {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Inflight {
    fn new(count: usize) -> Self {
        Inflight {
            permits: Mutex::new(count.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> InflightGuard<'_> {
        let mut permits = self.permits.lock().expect("inflight lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("inflight wait");
        }
        *permits -= 1;
        InflightGuard { inner: self }
    }

    fn release(&self) {
        let mut permits = self.permits.lock().expect("inflight lock");
        *permits += 1;
        self.available.notify_one();
    }
}

struct InflightGuard<'a> {
    inner: &'a Inflight,
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        self.inner.release();
    }
}

/// Token bucket: `rate` tokens per minute, burst of one minute's worth.
struct TokenBucket {
    rate_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn new(per_minute: f64) -> Self {
        TokenBucket {
            rate_per_sec: per_minute / 60.0,
            state: Mutex::new((per_minute / 60.0, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                let (ref mut tokens, ref mut last) = *state;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate_per_sec)
                    .min(self.rate_per_sec.max(1.0));
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - *tokens) / self.rate_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

/// The shared gateway. Cheap to share behind an `Arc`; `complete` takes
/// `&self` and is safe to call from many threads.
pub struct Gateway {
    config: GatewayConfig,
    transport: TransportMode,
    replay_map: Option<HashMap<String, String>>,
    recorder: Option<Mutex<Recorder>>,
    inflight: Inflight,
    bucket: Option<TokenBucket>,
    agent: ureq::Agent,
}

struct Recorder {
    fixture: std::fs::File,
    requests: std::fs::File,
    fixture_path: PathBuf,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("transport", &self.transport.as_str())
            .finish()
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig, transport: TransportMode) -> Result<Self, GatewayError> {
        if !(0.0..=2.0).contains(&config.temperature) {
            return Err(GatewayError::InvalidTemperature(config.temperature));
        }
        let replay_map = match &transport {
            TransportMode::Replay { fixture } => Some(load_fixture(fixture)?),
            _ => None,
        };
        let recorder = match &transport {
            TransportMode::Record { fixture } => {
                let open = |path: &Path| {
                    std::fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(path)
                        .map_err(|source| GatewayError::FixtureIo {
                            path: path.display().to_string(),
                            source,
                        })
                };
                let requests_path = sidecar_requests_path(fixture);
                Some(Mutex::new(Recorder {
                    fixture: open(fixture)?,
                    requests: open(&requests_path)?,
                    fixture_path: fixture.clone(),
                }))
            }
            _ => None,
        };
        if matches!(transport, TransportMode::Live | TransportMode::Record { .. })
            && config.endpoint.is_none()
        {
            return Err(GatewayError::MissingEndpoint);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let inflight = Inflight::new(config.max_inflight);
        let bucket = config.requests_per_minute.map(TokenBucket::new);
        Ok(Gateway {
            config,
            transport,
            replay_map,
            recorder,
            inflight,
            bucket,
            agent,
        })
    }

    pub fn transport(&self) -> &TransportMode {
        &self.transport
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    /// Build the request this gateway would issue for a rendered prompt.
    pub fn make_request(&self, prompt: &str, prompt_id: &str) -> GenerationRequest {
        GenerationRequest {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            prompt: prompt.to_string(),
            max_tokens: self.config.max_tokens,
            system: self.config.system_prompt.clone(),
            prompt_id: prompt_id.to_string(),
        }
    }

    /// Issue one generation request and return the raw assistant text.
    pub fn complete(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidTemperature(request.temperature));
        }
        match &self.transport {
            TransportMode::Replay { .. } => {
                // Pure table lookup; no network, no locks.
                let map = self.replay_map.as_ref().expect("replay map loaded");
                map.get(&request.prompt_id).cloned().ok_or_else(|| {
                    GatewayError::ReplayMiss {
                        prompt_id: request.prompt_id.clone(),
                    }
                })
            }
            TransportMode::Live => self.live(request),
            TransportMode::Record { .. } => {
                let response = self.live(request)?;
                self.record(request, &response)?;
                Ok(response)
            }
        }
    }

    fn live(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let endpoint = self
            .config
            .endpoint
            .as_deref()
            .ok_or(GatewayError::MissingEndpoint)?;
        let body = build_request_body(request);

        let _guard = self.inflight.acquire();
        let mut last_error = String::new();
        let attempts = self.config.retry.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.retry.backoff(attempt - 1));
            }
            if let Some(bucket) = &self.bucket {
                bucket.acquire();
            }
            match self.post_once(endpoint, &body) {
                Ok(text) => return Ok(text),
                Err(Retryable::No(err)) => return Err(err),
                Err(Retryable::Yes(reason)) => last_error = reason,
            }
        }
        Err(GatewayError::ExhaustedRetries {
            attempts,
            last_error,
        })
    }

    fn post_once(
        &self,
        endpoint: &str,
        body: &serde_json::Value,
    ) -> Result<String, Retryable> {
        let mut builder = self.agent.post(endpoint);
        if let Some(key) = &self.config.api_key {
            builder = builder.header("authorization", &format!("Bearer {key}"));
        }
        let response = builder.send_json(body);
        match response {
            Ok(mut response) => {
                let status = response.status().as_u16();
                let text = response
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| Retryable::Yes(format!("read body: {e}")))?;
                if (200..300).contains(&status) {
                    extract_response_text(&text).map_err(Retryable::No)
                } else if status == 429 || status == 408 || status >= 500 {
                    Retryable::transient(format!("status {status}"))
                } else {
                    Err(Retryable::No(GatewayError::HttpStatus {
                        status,
                        body: text.chars().take(200).collect(),
                    }))
                }
            }
            Err(e) => Retryable::transient(e.to_string()),
        }
    }

    fn record(
        &self,
        request: &GenerationRequest,
        response: &str,
    ) -> Result<(), GatewayError> {
        let recorder = self.recorder.as_ref().expect("record transport");
        let mut recorder = recorder.lock().expect("recorder lock");
        let path = recorder.fixture_path.display().to_string();
        let io_err = |source| GatewayError::FixtureIo {
            path: path.clone(),
            source,
        };
        let entry = FixtureEntry {
            prompt_id: request.prompt_id.clone(),
            response: response.to_string(),
        };
        writeln!(
            recorder.fixture,
            "{}",
            serde_json::to_string(&entry).expect("entry serializes")
        )
        .map_err(io_err)?;
        recorder.fixture.flush().map_err(io_err)?;
        // Sidecar with the full serialized request body for later review;
        // the body never contains the credential.
        let sidecar = json!({
            "prompt_id": request.prompt_id,
            "body": build_request_body(request),
        });
        writeln!(recorder.requests, "{sidecar}").map_err(io_err)?;
        recorder.requests.flush().map_err(io_err)?;
        Ok(())
    }
}

/// Path of the request sidecar written next to a Record-mode fixture.
pub fn sidecar_requests_path(fixture: &Path) -> PathBuf {
    let mut name = fixture
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fixture".to_string());
    name.push_str(".requests.jsonl");
    fixture.with_file_name(name)
}

enum Retryable {
    Yes(String),
    No(GatewayError),
}

impl Retryable {
    fn transient<T>(reason: String) -> Result<T, Retryable> {
        Err(Retryable::Yes(reason))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_carries_temperature_and_model() {
        let request =
            GenerationRequest::new("test-model", 0.85, "the prompt", "pid123").unwrap();
        let body = build_request_body(&request);
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.85);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "the prompt");
        assert!(body.get("max_tokens").is_none());

        let mut request = request;
        request.max_tokens = Some(256);
        assert_eq!(build_request_body(&request)["max_tokens"], 256);

        request.system = Some("stay in character".to_string());
        let body = build_request_body(&request);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][0]["content"], "stay in character");
        assert_eq!(body["messages"][1]["role"], "user");
    }

    #[test]
    fn temperature_out_of_range_rejected() {
        assert!(matches!(
            GenerationRequest::new("m", 2.5, "p", "id"),
            Err(GatewayError::InvalidTemperature(_))
        ));
        assert!(matches!(
            GenerationRequest::new("m", -0.1, "p", "id"),
            Err(GatewayError::InvalidTemperature(_))
        ));
        assert!(GenerationRequest::new("m", 0.0, "p", "id").is_ok());
        assert!(GenerationRequest::new("m", 2.0, "p", "id").is_ok());
    }

    #[test]
    fn extract_text_from_chat_response() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"1. hi"}}]}"#;
        assert_eq!(extract_response_text(body).unwrap(), "1. hi");
        assert!(extract_response_text("{}").is_err());
        assert!(extract_response_text("not json").is_err());
    }

    fn replay_gateway(entries: &[(&str, &str)]) -> (Gateway, tempfile::NamedTempFile) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for (id, response) in entries {
            writeln!(
                file,
                "{}",
                serde_json::to_string(&FixtureEntry {
                    prompt_id: id.to_string(),
                    response: response.to_string(),
                })
                .unwrap()
            )
            .unwrap();
        }
        file.flush().unwrap();
        let gateway = Gateway::new(
            GatewayConfig::default(),
            TransportMode::Replay {
                fixture: file.path().to_path_buf(),
            },
        )
        .unwrap();
        (gateway, file)
    }

    #[test]
    fn replay_hit_returns_fixture_entry() {
        let (gateway, _file) = replay_gateway(&[("h1", "1. msg A")]);
        let request = gateway.make_request("whatever", "h1");
        assert_eq!(gateway.complete(&request).unwrap(), "1. msg A");
    }

    #[test]
    fn replay_miss_names_the_prompt_id() {
        let (gateway, _file) = replay_gateway(&[("h1", "1. msg A")]);
        let request = gateway.make_request("whatever", "h2");
        match gateway.complete(&request) {
            Err(GatewayError::ReplayMiss { prompt_id }) => assert_eq!(prompt_id, "h2"),
            other => panic!("expected ReplayMiss, got {other:?}"),
        }
    }

    #[test]
    fn replay_needs_no_endpoint() {
        // Config without endpoint works fine in replay.
        let (gateway, _file) = replay_gateway(&[("a", "b")]);
        assert!(gateway.config.endpoint.is_none());
    }

    #[test]
    fn live_without_endpoint_rejected_at_construction() {
        assert!(matches!(
            Gateway::new(GatewayConfig::default(), TransportMode::Live),
            Err(GatewayError::MissingEndpoint)
        ));
    }

    #[test]
    fn debug_output_redacts_credential() {
        let config = GatewayConfig {
            api_key: Some("super-secret-key".to_string()),
            ..GatewayConfig::default()
        };
        let debugged = format!("{config:?}");
        assert!(!debugged.contains("super-secret-key"));
        assert!(debugged.contains("<redacted>"));
    }

    #[test]
    fn fixture_parse_error_reports_line() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "{{\"prompt_id\":\"a\",\"response\":\"b\"}}").unwrap();
        writeln!(file, "not json").unwrap();
        file.flush().unwrap();
        match load_fixture(file.path()) {
            Err(GatewayError::FixtureParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected FixtureParse, got {other:?}"),
        }
    }

    #[test]
    fn backoff_grows_and_caps() {
        let policy = RetryPolicy {
            max_retries: 5,
            initial_backoff_ms: 100,
            max_backoff_ms: 1_000,
        };
        assert_eq!(policy.backoff(0), Duration::from_millis(100));
        assert_eq!(policy.backoff(1), Duration::from_millis(200));
        assert_eq!(policy.backoff(4), Duration::from_millis(1_000));
        assert_eq!(policy.backoff(16), Duration::from_millis(1_000));
    }

    #[test]
    fn sidecar_path_derivation() {
        assert_eq!(
            sidecar_requests_path(Path::new("/tmp/fix.jsonl")),
            Path::new("/tmp/fix.jsonl.requests.jsonl")
        );
    }

    #[test]
    fn inflight_bound_is_never_exceeded() {
        use std::sync::atomic::{AtomicIsize, Ordering};
        let inflight = Inflight::new(2);
        let current = AtomicIsize::new(0);
        let peak = AtomicIsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    for _ in 0..50 {
                        let _guard = inflight.acquire();
                        let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        std::thread::yield_now();
                        current.fetch_sub(1, Ordering::SeqCst);
                    }
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2, "peak {}", peak.load(Ordering::SeqCst));
    }
}
