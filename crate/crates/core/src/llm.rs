//! Chat-completion backends: an OpenAI-compatible HTTP client and a
//! deterministic scripted mock.
//!
//! Every backend implements [`ChatBackend`] and can be shared across threads
//! behind an `Arc`. The HTTP backend bounds the number of outstanding
//! requests with [`InFlightLimiter`] and retries transient failures
//! (timeouts, 429, 5xx) with full-jitter exponential backoff.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::BadRequest("messages must not be empty".into()));
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(LlmError::BadRequest("last message must have role `user`".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::BadRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::BadRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Stable hex digest of `(model, messages)`; the key used by keyed mocks.
    pub fn digest(&self) -> String {
        let canonical = json!({ "model": self.model, "messages": self.messages });
        let bytes = serde_json::to_vec(&canonical).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn wire_body(&self) -> Value {
        json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Wall time spent by the backend; mocks report a fixed value so runs
    /// stay reproducible.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (HTTP 429) after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("server error (HTTP {status}) after {retries} retries")]
    Server { status: u16, retries: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("mock has no response for request digest {0}")]
    UnknownKey(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Anything that can answer a chat request.
pub trait ChatBackend: Send + Sync {
    /// Model identifier placed in requests and logs.
    fn model(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

pub type SharedBackend = Arc<dyn ChatBackend>;

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn model(&self) -> &str {
        (**self).model()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 600.0,
            max_retries: 3,
            max_in_flight: 8,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be >= 1".into()));
        }
        if !self.timeout_s.is_finite() || self.timeout_s <= 0.0 {
            return Err(LlmError::Config("timeout_s must be a positive number".into()));
        }
        if self.base_url.is_empty() {
            return Err(LlmError::Config("base_url must be set".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    capacity: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "in-flight capacity must be >= 1");
        InFlightLimiter {
            capacity,
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut current = self.current.lock().unwrap();
        while *current >= self.capacity {
            current = self.freed.wait(current).unwrap();
        }
        *current += 1;
        InFlightPermit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap()
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut current = self.limiter.current.lock().unwrap();
        *current -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Raw HTTP exchange result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Io(String),
}

/// Minimal POST-JSON transport so retry logic can be exercised without a
/// network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self
            .agent
            .post(url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_string(body).map_err(|e| TransportError::Io(e.to_string()))?;
        match req.send(payload.as_bytes()) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| classify_ureq(&e))?;
                Ok(HttpReply { status, body })
            }
            Err(e) => Err(classify_ureq(&e)),
        }
    }
}

fn classify_ureq(err: &ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        other => TransportError::Io(other.to_string()),
    }
}

/// Exponential backoff with full jitter: attempt `k` (0-based) sleeps a
/// uniform draw from `[0, base * factor^k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl Backoff {
    pub fn ceiling(&self, retry: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(retry as i32))
    }

    pub fn delay<R: Rng>(&self, retry: u32, rng: &mut R) -> Duration {
        let ceiling = self.ceiling(retry).as_secs_f64();
        Duration::from_secs_f64(rng.gen_range(0.0..=ceiling))
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpBackend {
    config: BackendConfig,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
    limiter: InFlightLimiter,
    backoff: Backoff,
    rng: Mutex<StdRng>,
    retries: AtomicU64,
}

impl HttpBackend {
    /// Reads the API key from the environment variable named in `config`.
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            let key = std::env::var(&config.api_key_env).ok();
            if key.is_none() {
                log::warn!(
                    "environment variable {} is unset; sending requests without Authorization",
                    config.api_key_env
                );
            }
            key
        };
        Self::with_transport(config, api_key, Box::new(UreqTransport::new()))
    }

    pub fn with_transport(
        config: BackendConfig,
        api_key: Option<String>,
        transport: Box<dyn Transport>,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(HttpBackend {
            limiter: InFlightLimiter::new(config.max_in_flight),
            config,
            api_key,
            transport,
            backoff: Backoff::default(),
            rng: Mutex::new(StdRng::from_entropy()),
            retries: AtomicU64::new(0),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    /// Seeds the jitter RNG.
    pub fn with_seed(self, seed: u64) -> Self {
        *self.rng.lock().unwrap() = StdRng::seed_from_u64(seed);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Total retries performed by this handle so far.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    pub fn in_flight(&self) -> usize {
        self.limiter.in_flight()
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, Attempt> {
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let timeout = Duration::from_secs_f64(self.config.timeout_s);
        let reply = self
            .transport
            .post_json(&self.endpoint(), self.api_key.as_deref(), body, timeout)
            .map_err(|e| match e {
                TransportError::Timeout => Attempt::Retry(LlmError::Timeout),
                TransportError::Io(msg) => Attempt::Retry(LlmError::Transport(msg)),
            })?;
        let latency_ms = started.elapsed().as_millis() as u64;
        match reply.status {
            200..=299 => parse_completion(&reply.body, latency_ms).map_err(Attempt::Fatal),
            429 => Attempt::retry(LlmError::RateLimited { retries: 0 }),
            500..=599 => Attempt::retry(LlmError::Server { status: reply.status, retries: 0 }),
            status => Err(Attempt::Fatal(LlmError::BadRequest(format!(
                "HTTP {status}: {}",
                truncate_for_error(&reply.body)
            )))),
        }
    }
}

enum Attempt {
    Retry(LlmError),
    Fatal(LlmError),
}

impl Attempt {
    fn retry<T>(err: LlmError) -> Result<T, Attempt> {
        Err(Attempt::Retry(err))
    }
}

fn truncate_for_error(body: &str) -> String {
    body.chars().take(300).collect()
}

fn parse_completion(body: &str, latency_ms: u64) -> Result<ChatResponse, LlmError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| LlmError::MalformedResponse(format!("body is not JSON: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))?;
    let content = match content {
        Value::String(s) => s.clone(),
        // Some servers send null for an empty completion.
        Value::Null => String::new(),
        other => {
            return Err(LlmError::MalformedResponse(format!(
                "choices[0].message.content is not a string: {other}"
            )))
        }
    };
    let usage = |field: &str| {
        value
            .pointer(&format!("/usage/{field}"))
            .and_then(Value::as_u64)
            .ok_or_else(|| LlmError::MalformedResponse(format!("missing usage.{field}")))
    };
    Ok(ChatResponse {
        content,
        prompt_tokens: usage("prompt_tokens")?,
        completion_tokens: usage("completion_tokens")?,
        latency_ms,
    })
}

impl ChatBackend for HttpBackend {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = request.wire_body();
        let mut retry = 0u32;
        loop {
            match self.attempt(&body) {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(err)) => {
                    if retry >= self.config.max_retries {
                        return Err(match err {
                            LlmError::RateLimited { .. } => LlmError::RateLimited { retries: retry },
                            LlmError::Server { status, .. } => LlmError::Server { status, retries: retry },
                            other => other,
                        });
                    }
                    let delay = {
                        let mut rng = self.rng.lock().unwrap();
                        self.backoff.delay(retry, &mut *rng)
                    };
                    log::debug!("retrying after {err} (retry {}, sleeping {delay:?})", retry + 1);
                    std::thread::sleep(delay);
                    retry += 1;
                    self.retries.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

enum Script {
    Sequential(VecDeque<String>),
    Keyed(HashMap<String, String>),
    Responder(Responder),
}

/// Offline backend returning scripted content.
///
/// * sequential: responses are popped in order,
/// * keyed: the response is looked up by [`ChatRequest::digest`],
/// * responder: a pure function of the request decides.
pub struct MockBackend {
    model: String,
    script: Mutex<Script>,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn sequential<S: Into<String>>(model: &str, responses: impl IntoIterator<Item = S>) -> Self {
        Self::build(model, Script::Sequential(responses.into_iter().map(Into::into).collect()))
    }

    pub fn keyed(model: &str, responses: HashMap<String, String>) -> Self {
        Self::build(model, Script::Keyed(responses))
    }

    /// `responder` returning `None` surfaces as [`LlmError::UnknownKey`].
    pub fn responder<F>(model: &str, responder: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        Self::build(model, Script::Responder(Box::new(responder)))
    }

    fn build(model: &str, script: Script) -> Self {
        MockBackend {
            model: model.to_string(),
            script: Mutex::new(script),
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Whitespace token count used for mock usage figures.
fn rough_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ChatBackend for MockBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let content = {
            let mut script = self.script.lock().unwrap();
            match &mut *script {
                Script::Sequential(queue) => queue.pop_front().ok_or(LlmError::ScriptExhausted)?,
                Script::Keyed(map) => {
                    let key = request.digest();
                    map.get(&key).cloned().ok_or(LlmError::UnknownKey(key))?
                }
                Script::Responder(f) => f(request).ok_or_else(|| LlmError::UnknownKey(request.digest()))?,
            }
        };
        Ok(ChatResponse {
            prompt_tokens: request.messages.iter().map(|m| rough_tokens(&m.content)).sum(),
            completion_tokens: rough_tokens(&content),
            content,
            latency_ms: 0,
        })
    }
}

/// Wraps a backend and records `digest -> content` for every successful
/// call, so a run can be replayed later through [`MockBackend::keyed`].
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<HashMap<String, String>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend { inner, log: Mutex::new(HashMap::new()) }
    }

    pub fn recorded(&self) -> HashMap<String, String> {
        self.log.lock().unwrap().clone()
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let resp = self.inner.complete(request)?;
        self.log.lock().unwrap().insert(request.digest(), resp.content.clone());
        Ok(resp)
    }
}

/// Builds a backend from a JSON file: either a [`BackendConfig`] for an
/// HTTP endpoint, or `{"mock": {"model": .., "responses": [..] | {..}}}`.
pub fn backend_from_value(value: &Value) -> Result<SharedBackend, LlmError> {
    backend_from_value_seeded(value, None)
}

/// Like [`backend_from_value`], seeding the HTTP retry jitter when `seed`
/// is given.
pub fn backend_from_value_seeded(value: &Value, seed: Option<u64>) -> Result<SharedBackend, LlmError> {
    if let Some(mock) = value.get("mock") {
        let model = mock.get("model").and_then(Value::as_str).unwrap_or("mock");
        return match mock.get("responses") {
            Some(Value::Array(items)) => {
                let texts = items
                    .iter()
                    .map(|v| v.as_str().map(str::to_string))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| LlmError::Config("mock responses must be strings".into()))?;
                if texts.is_empty() {
                    return Err(LlmError::Config("mock script must not be empty".into()));
                }
                Ok(Arc::new(MockBackend::sequential(model, texts)))
            }
            Some(Value::Object(map)) => {
                let keyed = map
                    .iter()
                    .map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                    .collect::<Option<HashMap<_, _>>>()
                    .ok_or_else(|| LlmError::Config("mock responses must be strings".into()))?;
                if keyed.is_empty() {
                    return Err(LlmError::Config("mock script must not be empty".into()));
                }
                Ok(Arc::new(MockBackend::keyed(model, keyed)))
            }
            _ => Err(LlmError::Config("mock.responses must be an array or an object".into())),
        };
    }
    let config: BackendConfig =
        serde_json::from_value(value.clone()).map_err(|e| LlmError::Config(e.to_string()))?;
    let backend = HttpBackend::new(config)?;
    Ok(Arc::new(match seed {
        Some(seed) => backend.with_seed(seed),
        None => backend,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", vec![ChatMessage::user(text)])
    }

    #[test]
    fn scripted_mock_returns_content() {
        let mock = MockBackend::sequential("m", ["Best Proposal: #1"]);
        assert_eq!(mock.complete(&req("x")).unwrap().content, "Best Proposal: #1");
    }

    #[test]
    fn sequential_then_exhausted() {
        let mock = MockBackend::sequential("m", ["a", "b"]);
        assert_eq!(mock.complete(&req("x")).unwrap().content, "a");
        assert_eq!(mock.complete(&req("x")).unwrap().content, "b");
        assert_eq!(mock.complete(&req("x")).unwrap_err(), LlmError::ScriptExhausted);
    }

    #[test]
    fn keyed_mock_is_deterministic() {
        let r = req("hello");
        let mock = MockBackend::keyed("m", HashMap::from([(r.digest(), "hi".to_string())]));
        assert_eq!(mock.complete(&r).unwrap(), mock.complete(&r).unwrap());
        assert!(matches!(mock.complete(&req("other")).unwrap_err(), LlmError::UnknownKey(_)));
    }

    #[test]
    fn digest_ignores_sampling_params() {
        let a = req("x");
        let mut b = req("x");
        b.temperature = 0.7;
        assert_eq!(a.digest(), b.digest());
        let mut c = req("x");
        c.model = "other".into();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn empty_messages_rejected_before_call() {
        let mock = MockBackend::sequential("m", ["a"]);
        let r = ChatRequest::new("m", vec![]);
        assert!(matches!(mock.complete(&r).unwrap_err(), LlmError::BadRequest(_)));
        assert_eq!(mock.calls(), 0);
        let r = ChatRequest::new("m", vec![ChatMessage::user("q"), ChatMessage::assistant("a")]);
        assert!(matches!(mock.complete(&r).unwrap_err(), LlmError::BadRequest(_)));
    }

    struct FaultStub {
        plan: Mutex<VecDeque<Result<HttpReply, TransportError>>>,
        calls: AtomicUsize,
    }

    impl FaultStub {
        fn new(plan: Vec<Result<HttpReply, TransportError>>) -> Self {
            FaultStub { plan: Mutex::new(plan.into()), calls: AtomicUsize::new(0) }
        }
    }

    impl Transport for FaultStub {
        fn post_json(&self, _: &str, _: Option<&str>, _: &Value, _: Duration) -> Result<HttpReply, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.plan.lock().unwrap().pop_front().expect("stub plan exhausted")
        }
    }

    impl Transport for Arc<FaultStub> {
        fn post_json(&self, u: &str, b: Option<&str>, v: &Value, t: Duration) -> Result<HttpReply, TransportError> {
            (**self).post_json(u, b, v, t)
        }
    }

    fn ok_body(content: &str) -> HttpReply {
        HttpReply {
            status: 200,
            body: json!({
                "choices": [{"message": {"role": "assistant", "content": content}}],
                "usage": {"prompt_tokens": 11, "completion_tokens": 3}
            })
            .to_string(),
        }
    }

    fn status(code: u16) -> Result<HttpReply, TransportError> {
        Ok(HttpReply { status: code, body: "{}".into() })
    }

    fn backend(stub: Arc<FaultStub>, max_retries: u32) -> HttpBackend {
        let config = BackendConfig { max_retries, ..BackendConfig::default() };
        HttpBackend::with_transport(config, None, Box::new(stub))
            .unwrap()
            .with_backoff(Backoff { base: Duration::from_millis(1), factor: 2.0 })
            .with_seed(7)
    }

    #[test]
    fn retries_429_then_succeeds() {
        let stub = Arc::new(FaultStub::new(vec![status(429), status(429), Ok(ok_body("done"))]));
        let b = backend(stub.clone(), 3);
        let resp = b.complete(&req("x")).unwrap();
        assert_eq!(resp.content, "done");
        assert_eq!(resp.prompt_tokens, 11);
        assert_eq!(resp.completion_tokens, 3);
        assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
        assert_eq!(b.retries(), 2);
    }

    #[test]
    fn retries_exhausted_reports_rate_limit() {
        let stub = Arc::new(FaultStub::new(vec![status(429), status(429), status(429)]));
        let b = backend(stub.clone(), 2);
        assert_eq!(b.complete(&req("x")).unwrap_err(), LlmError::RateLimited { retries: 2 });
        assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
        assert_eq!(b.retries(), 2);
    }

    #[test]
    fn timeouts_and_5xx_are_retried() {
        let stub = Arc::new(FaultStub::new(vec![
            Err(TransportError::Timeout),
            status(503),
            Ok(ok_body("ok")),
        ]));
        let b = backend(stub.clone(), 5);
        assert_eq!(b.complete(&req("x")).unwrap().content, "ok");
        assert_eq!(b.retries(), 2);

        let stub = Arc::new(FaultStub::new(vec![Err(TransportError::Timeout)]));
        assert_eq!(backend(stub, 0).complete(&req("x")).unwrap_err(), LlmError::Timeout);
    }

    #[test]
    fn client_errors_not_retried() {
        for code in [400u16, 401, 404, 422] {
            let stub = Arc::new(FaultStub::new(vec![status(code), Ok(ok_body("never"))]));
            let b = backend(stub.clone(), 3);
            assert!(matches!(b.complete(&req("x")).unwrap_err(), LlmError::BadRequest(_)));
            assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
        }
    }

    #[test]
    fn malformed_body() {
        for body in ["not json", r#"{"choices":[]}"#, r#"{"choices":[{"message":{"content":"x"}}]}"#] {
            let stub = Arc::new(FaultStub::new(vec![Ok(HttpReply { status: 200, body: body.into() })]));
            assert!(matches!(
                backend(stub, 3).complete(&req("x")).unwrap_err(),
                LlmError::MalformedResponse(_)
            ));
        }
    }

    #[test]
    fn empty_completion_is_recorded() {
        let stub = Arc::new(FaultStub::new(vec![Ok(ok_body(""))]));
        assert_eq!(backend(stub, 0).complete(&req("x")).unwrap().content, "");
    }

    #[test]
    fn backoff_respects_ceiling() {
        let b = Backoff::default();
        assert_eq!(b.ceiling(0), Duration::from_secs(1));
        assert_eq!(b.ceiling(3), Duration::from_secs(8));
        let mut rng = StdRng::seed_from_u64(1);
        for k in 0..6 {
            for _ in 0..50 {
                assert!(b.delay(k, &mut rng) <= b.ceiling(k));
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = BackendConfig { max_in_flight: 0, ..BackendConfig::default() };
        assert!(bad.validate().is_err());
        assert!(BackendConfig::default().validate().is_ok());
    }

    #[test]
    fn backend_from_json() {
        let b = backend_from_value(&json!({"mock": {"model": "m1", "responses": ["a"]}})).unwrap();
        assert_eq!(b.model(), "m1");
        assert_eq!(b.complete(&req("x")).unwrap().content, "a");
        assert!(backend_from_value(&json!({"mock": {"responses": []}})).is_err());
    }
}
