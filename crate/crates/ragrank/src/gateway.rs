//! LLM access layer: role bindings, retries, HTTP backends, and mocks.
//!
//! Every model call in the engine goes through a [`Gateway`], which maps
//! a pipeline [`Role`] (generator, reranker, prompt generator, evaluator)
//! to a backend plus model name and temperature. Transient failures
//! (timeouts, 429, 5xx) are retried with exponential backoff; auth and
//! protocol errors fail immediately.
//!
//! The mock backends are scripted with ordered substring-match rules and
//! record every request, so whole experiments can run offline,
//! deterministically, and tests can assert exact call counts and
//! payloads. [`MockClock`] stands in for wall time in those runs: each
//! reading advances by a fixed step, making latency fields reproducible.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transient backend error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transient { status: Option<u16>, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("gateway configuration error: {0}")]
    Config(String),
    #[error("retries exhausted after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("mock backend {backend:?} has no rule matching request ending in: {request_tail:?}")]
    NoMatchingRule { backend: String, request_tail: String },
}

impl GatewayError {
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transient { .. })
    }
}

/// Pipeline roles a gateway can route to distinct backends and models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Generator,
    Reranker,
    PromptGenerator,
    Evaluator,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Generator,
        Role::Reranker,
        Role::PromptGenerator,
        Role::Evaluator,
    ];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Generator => "generator",
            Role::Reranker => "reranker",
            Role::PromptGenerator => "prompt_generator",
            Role::Evaluator => "evaluator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: MessageRole::System,
            content: content.into(),
        }
    }
}

/// Fully resolved request as sent to a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    /// All message contents joined with newlines; what mock rules match
    /// against.
    pub fn joined_content(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    /// Completion length in Unicode scalar values, counted on the raw
    /// text before any trimming.
    pub chars: usize,
    pub latency: Duration,
}

impl ChatResponse {
    fn from_text(text: String, latency: Duration) -> Self {
        ChatResponse {
            chars: text.chars().count(),
            text,
            latency,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// Embeds one batch. Callers are responsible for splitting inputs
    /// into batches no larger than their configured cap.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// One scored document from a rerank endpoint; `index` is 0-based into
/// the submitted document list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankResult {
    pub index: usize,
    pub relevance_score: f64,
}

pub trait RerankBackend: Send + Sync {
    fn id(&self) -> &str;
    fn rerank(
        &self,
        query: &str,
        documents: &[String],
        top_n: usize,
    ) -> Result<Vec<RerankResult>, GatewayError>;
}

// --- clock ---

/// Monotonic time source. The harness measures end-to-end latency with
/// one of these so offline runs can substitute a deterministic clock.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Clock that advances by a fixed step on every reading, making elapsed
/// times a pure function of how many readings were taken.
pub struct MockClock {
    step: Duration,
    current: Mutex<Duration>,
}

impl MockClock {
    pub fn new(step: Duration) -> Self {
        MockClock {
            step,
            current: Mutex::new(Duration::ZERO),
        }
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        let mut current = self.current.lock().unwrap();
        *current += self.step;
        *current
    }
}

// --- retries ---

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// No retries, no sleeping; useful in tests.
    pub fn none() -> Self {
        RetryPolicy {
            max_attempts: 1,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Runs `op`, retrying transient errors with exponential backoff.
    /// Non-transient errors return immediately; running out of attempts
    /// yields [`GatewayError::Exhausted`].
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError> {
        let attempts = self.max_attempts.max(1);
        let mut backoff = self.initial_backoff;
        for attempt in 1..=attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() => {
                    if attempt == attempts {
                        return Err(GatewayError::Exhausted {
                            attempts,
                            last: e.to_string(),
                        });
                    }
                    log::warn!("attempt {attempt}/{attempts} failed, retrying: {e}");
                    if !backoff.is_zero() {
                        std::thread::sleep(backoff);
                    }
                    backoff = backoff.saturating_mul(2);
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("retry loop covers all attempts")
    }
}

// --- gateway ---

#[derive(Clone)]
pub struct RoleBinding {
    pub backend: Arc<dyn ChatBackend>,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl RoleBinding {
    /// Identity of backend plus model, used for provenance and for the
    /// generator/evaluator separation check.
    pub fn fingerprint(&self) -> String {
        format!("{}#{}", self.backend.id(), self.model)
    }
}

/// Routes chat completions to per-role backends with a shared retry
/// policy.
pub struct Gateway {
    bindings: BTreeMap<Role, RoleBinding>,
    retry: RetryPolicy,
}

pub struct GatewayBuilder {
    bindings: BTreeMap<Role, RoleBinding>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            bindings: BTreeMap::new(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn binding(&self, role: Role) -> Option<&RoleBinding> {
        self.bindings.get(&role)
    }

    /// Backend and model fingerprints per bound role.
    pub fn fingerprints(&self) -> BTreeMap<String, String> {
        self.bindings
            .iter()
            .map(|(role, b)| (role.to_string(), b.fingerprint()))
            .collect()
    }

    /// Completes a chat with the backend bound to `role`, applying model
    /// and temperature from the binding. Transient failures are retried
    /// per the gateway's policy.
    pub fn complete(
        &self,
        role: Role,
        messages: &[ChatMessage],
    ) -> Result<ChatResponse, GatewayError> {
        let binding = self.bindings.get(&role).ok_or_else(|| {
            GatewayError::Config(format!("no backend bound for role {role}"))
        })?;
        let request = ChatRequest {
            model: binding.model.clone(),
            messages: messages.to_vec(),
            temperature: binding.temperature,
            max_output_tokens: binding.max_output_tokens,
        };
        self.retry.run(|| binding.backend.complete(&request))
    }

    /// Single user-message completion; the common case for this engine's
    /// prompts, which are all one-shot.
    pub fn complete_text(&self, role: Role, prompt: &str) -> Result<ChatResponse, GatewayError> {
        self.complete(role, &[ChatMessage::user(prompt)])
    }
}

impl GatewayBuilder {
    pub fn bind(mut self, role: Role, backend: Arc<dyn ChatBackend>, model: &str) -> Self {
        self.bindings.insert(
            role,
            RoleBinding {
                backend,
                model: model.to_string(),
                temperature: 0.0,
                max_output_tokens: None,
            },
        );
        self
    }

    pub fn bind_with(mut self, role: Role, binding: RoleBinding) -> Self {
        self.bindings.insert(role, binding);
        self
    }

    pub fn retry(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            bindings: self.bindings,
            retry: self.retry,
        }
    }
}

// --- in-flight limiting ---

/// Counting semaphore bounding concurrent requests per HTTP backend.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

// --- HTTP backends ---

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
const DEFAULT_HTTP_TIMEOUT: Duration = Duration::from_secs(120);

fn http_client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .expect("failed to construct HTTP client")
}

fn classify_transport(e: reqwest::Error) -> GatewayError {
    if e.is_timeout() || e.is_connect() {
        GatewayError::Transient {
            status: None,
            message: e.to_string(),
        }
    } else {
        GatewayError::Protocol(e.to_string())
    }
}

/// Maps an HTTP status to an error, or passes success through.
fn check_status(status: u16, body_excerpt: &str) -> Result<(), GatewayError> {
    match status {
        200..=299 => Ok(()),
        401 | 403 => Err(GatewayError::Auth(format!(
            "status {status}: {body_excerpt}"
        ))),
        429 | 500..=599 => Err(GatewayError::Transient {
            status: Some(status),
            message: body_excerpt.to_string(),
        }),
        _ => Err(GatewayError::Protocol(format!(
            "unexpected status {status}: {body_excerpt}"
        ))),
    }
}

fn excerpt(s: &str) -> String {
    let trimmed = s.trim();
    let mut out: String = trimmed.chars().take(200).collect();
    if trimmed.chars().count() > 200 {
        out.push('…');
    }
    out
}

/// OpenAI-style chat completion endpoint
/// (`POST {base}/v1/chat/completions`).
pub struct HttpChatBackend {
    id: String,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

#[derive(Serialize)]
struct WireChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: Option<String>,
}

impl HttpChatBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        let base_url = base_url.into();
        HttpChatBackend {
            id: format!("http:{}", base_url.trim_end_matches('/')),
            base_url,
            api_key,
            client: http_client(DEFAULT_HTTP_TIMEOUT),
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Semaphore::new(n);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.client = http_client(timeout);
        self
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let _permit = self.limiter.acquire();
        let url = format!(
            "{}/v1/chat/completions",
            self.base_url.trim_end_matches('/')
        );
        let wire = WireChatRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let started = Instant::now();
        let mut req = self.client.post(&url).json(&wire);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify_transport)?;
        let latency = started.elapsed();
        check_status(status, &excerpt(&body))?;
        let parsed: WireChatResponse = serde_json::from_str(&body).map_err(|e| {
            GatewayError::Protocol(format!("bad chat completion body: {e}: {}", excerpt(&body)))
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Protocol("chat completion had no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        Ok(ChatResponse::from_text(text, latency))
    }
}

/// OpenAI-style embeddings endpoint (`POST {base}/v1/embeddings`).
///
/// The vector dimension must be declared up front; responses of any
/// other width are protocol errors.
pub struct HttpEmbeddingBackend {
    id: String,
    base_url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

#[derive(Serialize)]
struct WireEmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct WireEmbeddingResponse {
    data: Vec<WireEmbeddingRow>,
}

#[derive(Deserialize)]
struct WireEmbeddingRow {
    index: usize,
    embedding: Vec<f64>,
}

impl HttpEmbeddingBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
        dim: usize,
    ) -> Self {
        let model = model.into();
        HttpEmbeddingBackend {
            id: model.clone(),
            base_url: base_url.into(),
            api_key,
            model,
            dim,
            client: http_client(DEFAULT_HTTP_TIMEOUT),
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let _permit = self.limiter.acquire();
        let url = format!("{}/v1/embeddings", self.base_url.trim_end_matches('/'));
        let wire = WireEmbeddingRequest {
            model: &self.model,
            input: texts,
        };
        let mut req = self.client.post(&url).json(&wire);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify_transport)?;
        check_status(status, &excerpt(&body))?;
        let parsed: WireEmbeddingResponse = serde_json::from_str(&body).map_err(|e| {
            GatewayError::Protocol(format!("bad embeddings body: {e}: {}", excerpt(&body)))
        })?;
        if parsed.data.len() != texts.len() {
            return Err(GatewayError::Protocol(format!(
                "embeddings response had {} rows for {} inputs",
                parsed.data.len(),
                texts.len()
            )));
        }
        let mut rows = parsed.data;
        rows.sort_by_key(|r| r.index);
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.index != i {
                return Err(GatewayError::Protocol(format!(
                    "embeddings response is missing index {i}"
                )));
            }
            if row.embedding.len() != self.dim {
                return Err(GatewayError::Protocol(format!(
                    "embedding {} has dimension {}, expected {}",
                    i,
                    row.embedding.len(),
                    self.dim
                )));
            }
            out.push(row.embedding);
        }
        Ok(out)
    }
}

/// Cross-encoder rerank endpoint (`POST {base}/v1/rerank`).
pub struct HttpRerankBackend {
    id: String,
    base_url: String,
    api_key: Option<String>,
    model: String,
    client: reqwest::blocking::Client,
    limiter: Semaphore,
}

#[derive(Serialize)]
struct WireRerankRequest<'a> {
    model: &'a str,
    query: &'a str,
    documents: &'a [String],
    top_n: usize,
}

#[derive(Deserialize)]
struct WireRerankResponse {
    results: Vec<RerankResult>,
}

impl HttpRerankBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
    ) -> Self {
        let model = model.into();
        HttpRerankBackend {
            id: model.clone(),
            base_url: base_url.into(),
            api_key,
            model,
            client: http_client(DEFAULT_HTTP_TIMEOUT),
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }
}

impl RerankBackend for HttpRerankBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn rerank(
        &self,
        query: &str,
        documents: &[String],
        top_n: usize,
    ) -> Result<Vec<RerankResult>, GatewayError> {
        let _permit = self.limiter.acquire();
        let url = format!("{}/v1/rerank", self.base_url.trim_end_matches('/'));
        let wire = WireRerankRequest {
            model: &self.model,
            query,
            documents,
            top_n,
        };
        let mut req = self.client.post(&url).json(&wire);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify_transport)?;
        check_status(status, &excerpt(&body))?;
        let parsed: WireRerankResponse = serde_json::from_str(&body).map_err(|e| {
            GatewayError::Protocol(format!("bad rerank body: {e}: {}", excerpt(&body)))
        })?;
        Ok(parsed.results)
    }
}

/// Calls a rerank backend with retries and validates the response:
/// indices must be in range and unique, scores finite. Results come back
/// sorted by score descending (ties by index) and truncated to `top_n`.
pub fn remote_rerank(
    backend: &dyn RerankBackend,
    retry: &RetryPolicy,
    query: &str,
    documents: &[String],
    top_n: usize,
) -> Result<Vec<RerankResult>, GatewayError> {
    if documents.is_empty() || top_n == 0 {
        return Ok(Vec::new());
    }
    let results = retry.run(|| backend.rerank(query, documents, top_n))?;
    let mut seen = vec![false; documents.len()];
    for r in &results {
        if r.index >= documents.len() {
            return Err(GatewayError::Protocol(format!(
                "rerank result index {} out of range for {} documents",
                r.index,
                documents.len()
            )));
        }
        if seen[r.index] {
            return Err(GatewayError::Protocol(format!(
                "rerank result index {} appears twice",
                r.index
            )));
        }
        seen[r.index] = true;
        if !r.relevance_score.is_finite() {
            return Err(GatewayError::Protocol(format!(
                "rerank score for index {} is not finite",
                r.index
            )));
        }
    }
    let mut sorted = results;
    sorted.sort_by(|a, b| {
        b.relevance_score
            .partial_cmp(&a.relevance_score)
            .expect("scores checked finite")
            .then(a.index.cmp(&b.index))
    });
    sorted.truncate(top_n);
    Ok(sorted)
}

// --- mock backends ---

#[derive(Debug, Clone)]
pub enum MockMatcher {
    Any,
    Substring(String),
}

impl MockMatcher {
    fn matches(&self, content: &str) -> bool {
        match self {
            MockMatcher::Any => true,
            MockMatcher::Substring(s) => content.contains(s.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MockReply {
    /// Same text on every match.
    Text(String),
    /// One entry per match, repeating the last once exhausted.
    Sequence(Vec<String>),
    /// Transient errors for the first `failures` matches, then text.
    FailThen { failures: u32, text: String },
}

struct MockRule {
    matcher: MockMatcher,
    reply: MockReply,
    uses: u32,
}

struct MockChatState {
    rules: Vec<MockRule>,
    log: Vec<ChatRequest>,
}

/// Scripted chat backend. Rules are checked in insertion order against
/// the request's joined message content; the first match wins and its
/// use counter advances. Requests matching no rule fail with an error
/// naming the backend and the request, so a missing script line surfaces
/// in tests instead of silently producing garbage.
pub struct MockChatBackend {
    id: String,
    latency: Duration,
    state: Mutex<MockChatState>,
}

impl MockChatBackend {
    pub fn new(id: impl Into<String>) -> Self {
        MockChatBackend {
            id: id.into(),
            latency: Duration::from_millis(1),
            state: Mutex::new(MockChatState {
                rules: Vec::new(),
                log: Vec::new(),
            }),
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn on(self, matcher: MockMatcher, reply: MockReply) -> Self {
        self.state.lock().unwrap().rules.push(MockRule {
            matcher,
            reply,
            uses: 0,
        });
        self
    }

    pub fn reply_when(self, substring: &str, text: &str) -> Self {
        self.on(
            MockMatcher::Substring(substring.into()),
            MockReply::Text(text.into()),
        )
    }

    pub fn reply_any(self, text: &str) -> Self {
        self.on(MockMatcher::Any, MockReply::Text(text.into()))
    }

    pub fn reply_seq_when(self, substring: &str, replies: &[&str]) -> Self {
        self.on(
            MockMatcher::Substring(substring.into()),
            MockReply::Sequence(replies.iter().map(|s| s.to_string()).collect()),
        )
    }

    pub fn fail_then_when(self, substring: &str, failures: u32, text: &str) -> Self {
        self.on(
            MockMatcher::Substring(substring.into()),
            MockReply::FailThen {
                failures,
                text: text.into(),
            },
        )
    }

    /// Every request received so far, including ones that failed.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().unwrap().log.len()
    }
}

impl ChatBackend for MockChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut state = self.state.lock().unwrap();
        state.log.push(request.clone());
        let content = request.joined_content();
        let rule = state
            .rules
            .iter_mut()
            .find(|r| r.matcher.matches(&content));
        let Some(rule) = rule else {
            let tail: String = content
                .chars()
                .rev()
                .take(120)
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            return Err(GatewayError::NoMatchingRule {
                backend: self.id.clone(),
                request_tail: tail,
            });
        };
        let use_index = rule.uses;
        rule.uses += 1;
        let text = match &rule.reply {
            MockReply::Text(t) => t.clone(),
            MockReply::Sequence(seq) => {
                let i = (use_index as usize).min(seq.len().saturating_sub(1));
                seq.get(i).cloned().unwrap_or_default()
            }
            MockReply::FailThen { failures, text } => {
                if use_index < *failures {
                    return Err(GatewayError::Transient {
                        status: Some(503),
                        message: format!("scripted failure {} of {failures}", use_index + 1),
                    });
                }
                text.clone()
            }
        };
        Ok(ChatResponse::from_text(text, self.latency))
    }
}

/// Deterministic embedder: each text hashes to a fixed unit vector, so
/// index builds and retrievals are reproducible across runs and
/// platforms with no model behind them.
pub struct MockEmbeddingBackend {
    id: String,
    dim: usize,
    batches: Mutex<Vec<usize>>,
}

impl MockEmbeddingBackend {
    pub fn new(dim: usize) -> Self {
        MockEmbeddingBackend {
            id: format!("mock-embedder-{dim}d"),
            dim,
            batches: Mutex::new(Vec::new()),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Sizes of the batches received, in order.
    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches.lock().unwrap().clone()
    }

    /// The unit vector this backend assigns to `text`.
    pub fn vector_for(&self, text: &str) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        let mut counter = 0u32;
        while out.len() < self.dim {
            let digest = Sha256::digest(format!("{counter}\u{0}{text}").as_bytes());
            for bytes in digest.chunks_exact(8) {
                let raw = u64::from_le_bytes(bytes.try_into().unwrap());
                out.push((raw as f64 / u64::MAX as f64) * 2.0 - 1.0);
                if out.len() == self.dim {
                    break;
                }
            }
            counter += 1;
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut out {
                *v /= norm;
            }
        } else {
            out[0] = 1.0;
        }
        out
    }
}

impl EmbeddingBackend for MockEmbeddingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        self.batches.lock().unwrap().push(texts.len());
        Ok(texts.iter().map(|t| self.vector_for(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockRerankCall {
    pub query: String,
    pub n_documents: usize,
    pub top_n: usize,
}

/// Scripted rerank endpoint. With no script it returns an identity
/// ranking (document order, descending scores).
pub struct MockRerankBackend {
    id: String,
    script: Option<Vec<RerankResult>>,
    log: Mutex<Vec<MockRerankCall>>,
}

impl MockRerankBackend {
    pub fn identity() -> Self {
        MockRerankBackend {
            id: "mock-reranker".into(),
            script: None,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn scripted(results: Vec<RerankResult>) -> Self {
        MockRerankBackend {
            id: "mock-reranker".into(),
            script: Some(results),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<MockRerankCall> {
        self.log.lock().unwrap().clone()
    }
}

impl RerankBackend for MockRerankBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn rerank(
        &self,
        query: &str,
        documents: &[String],
        top_n: usize,
    ) -> Result<Vec<RerankResult>, GatewayError> {
        self.log.lock().unwrap().push(MockRerankCall {
            query: query.to_string(),
            n_documents: documents.len(),
            top_n,
        });
        match &self.script {
            Some(results) => Ok(results.clone()),
            None => Ok((0..documents.len().min(top_n))
                .map(|i| RerankResult {
                    index: i,
                    relevance_score: 1.0 / (i as f64 + 1.0),
                })
                .collect()),
        }
    }
}
