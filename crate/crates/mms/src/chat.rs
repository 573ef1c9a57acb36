//! Chat backend wire contract, an HTTP client for it, and offline mocks.
//!
//! Request: `{model, temperature, messages: [{role, content}]}`.
//! Response: `{text, usage: {prompt_tokens, completion_tokens}}`.
//! The HTTP client reads its endpoint from `MMS_CHAT_URL` and an optional
//! bearer key from `MMS_CHAT_KEY`.

use std::collections::{HashSet, VecDeque};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{content_tokens, word_count};

pub const CHAT_URL_ENV: &str = "MMS_CHAT_URL";
pub const CHAT_KEY_ENV: &str = "MMS_CHAT_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    /// Connection failures, timeouts, 429 and 5xx replies. Worth retrying.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The backend answered but refused the request or sent garbage.
    #[error("backend rejected request: {0}")]
    Rejected(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Unavailable(_))
    }
}

/// Anything that can answer a chat request. Shared across worker threads.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;

    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Run `call` until it succeeds, fails with a non-retryable error, or the
    /// attempt budget runs out. Returns the attempt count with the last error.
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, TransportError>,
    ) -> Result<T, (u32, TransportError)> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(value) => return Ok(value),
                Err(err) if err.is_retryable() && attempt < self.max_attempts.max(1) => {
                    log::warn!("attempt {attempt} failed: {err}; retrying");
                    if !backoff.is_zero() {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
                Err(err) => return Err((attempt, err)),
            }
        }
    }
}

/// Wall-clock source used for latency accounting.
pub trait Clock: Send + Sync {
    /// Seconds since an arbitrary fixed origin.
    fn now(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Replays a fixed list of readings; the last one repeats once exhausted.
#[derive(Debug, Default)]
pub struct ScriptedClock {
    readings: Mutex<VecDeque<f64>>,
    last: Mutex<f64>,
}

impl ScriptedClock {
    pub fn new(readings: impl IntoIterator<Item = f64>) -> Self {
        Self {
            readings: Mutex::new(readings.into_iter().collect()),
            last: Mutex::new(0.0),
        }
    }

    /// Readings that make each of the given calls take exactly that long.
    pub fn from_durations(durations: &[f64]) -> Self {
        let mut t = 0.0;
        let mut readings = Vec::with_capacity(durations.len() * 2);
        for d in durations {
            readings.push(t);
            t += d;
            readings.push(t);
        }
        Self::new(readings)
    }
}

impl Clock for ScriptedClock {
    fn now(&self) -> f64 {
        let mut last = self.last.lock().unwrap();
        if let Some(next) = self.readings.lock().unwrap().pop_front() {
            *last = next;
        }
        *last
    }
}

/// Blocking HTTP client for the chat wire contract.
pub struct HttpChatTransport {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatTransport {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        Self {
            url: url.into(),
            key,
            agent: http_agent(),
        }
    }

    pub fn from_env() -> Option<Self> {
        let url = std::env::var(CHAT_URL_ENV)
            .ok()
            .filter(|u| !u.trim().is_empty())?;
        Some(Self::new(url, std::env::var(CHAT_KEY_ENV).ok()))
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        post_json(&self.agent, &self.url, self.key.as_deref(), request)
    }

    fn name(&self) -> String {
        format!("http:{}", self.url)
    }
}

pub(crate) fn http_agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(180)))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    url: &str,
    key: Option<&str>,
    body: &Req,
) -> Result<Resp, TransportError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| TransportError::Unavailable(e.to_string()))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(TransportError::Unavailable(format!("HTTP {status}")));
    }
    if !(200..300).contains(&status) {
        let detail = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(TransportError::Rejected(format!("HTTP {status}: {detail}")));
    }
    resp.body_mut()
        .read_json::<Resp>()
        .map_err(|e| TransportError::Rejected(format!("malformed response body: {e}")))
}

fn mock_usage(request: &ChatRequest, reply: &str) -> TokenUsage {
    TokenUsage {
        prompt_tokens: request
            .messages
            .iter()
            .map(|m| word_count(&m.content))
            .sum(),
        completion_tokens: word_count(reply),
    }
}

/// Replies with the last user message. Usage is whitespace word counts.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoChat;

impl ChatTransport for EchoChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let text = request.last_user_message().unwrap_or_default().to_string();
        let usage = mock_usage(request, &text);
        Ok(ChatResponse { text, usage })
    }

    fn name(&self) -> String {
        "echo-mock".into()
    }
}

/// Always replies with the same text and usage.
#[derive(Debug, Clone)]
pub struct FixedChat {
    pub text: String,
    pub usage: TokenUsage,
}

impl FixedChat {
    pub fn new(text: impl Into<String>, usage: TokenUsage) -> Self {
        Self {
            text: text.into(),
            usage,
        }
    }
}

impl ChatTransport for FixedChat {
    fn complete(&self, _request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        Ok(ChatResponse {
            text: self.text.clone(),
            usage: self.usage,
        })
    }

    fn name(&self) -> String {
        "fixed-mock".into()
    }
}

/// Answers with the context sentence sharing the most content words with
/// the question. Expects the answer prompt's `<memories>` and `<question>`
/// tags; ties go to the earliest sentence, and no overlap at all yields
/// "I don't know.".
#[derive(Debug, Default, Clone, Copy)]
pub struct ExtractiveChat;

pub const UNKNOWN_ANSWER: &str = "I don't know.";

impl ExtractiveChat {
    pub fn best_sentence(context: &str, question: &str) -> Option<String> {
        let wanted: HashSet<String> = content_tokens(question).into_iter().collect();
        let mut best: Option<(usize, String)> = None;
        for sentence in context_sentences(context) {
            let have: HashSet<String> = content_tokens(&sentence).into_iter().collect();
            let overlap = have.intersection(&wanted).count();
            if overlap > 0 && best.as_ref().is_none_or(|(score, _)| overlap > *score) {
                best = Some((overlap, sentence));
            }
        }
        best.map(|(_, s)| s)
    }
}

impl ChatTransport for ExtractiveChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let prompt = request.last_user_message().unwrap_or_default();
        let context = between(prompt, "<memories>", "</memories>").unwrap_or(prompt);
        let question = between(prompt, "<question>", "</question>")
            .unwrap_or_else(|| prompt.lines().last().unwrap_or_default());
        let text =
            Self::best_sentence(context, question).unwrap_or_else(|| UNKNOWN_ANSWER.to_string());
        let usage = mock_usage(request, &text);
        Ok(ChatResponse { text, usage })
    }

    fn name(&self) -> String {
        "extractive-mock".into()
    }
}

fn between<'a>(haystack: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = haystack.find(open)? + open.len();
    let end = haystack[start..].find(close)? + start;
    Some(&haystack[start..end])
}

/// Candidate answer sentences: body lines of the assembled context, minus
/// headers, section labels, separators and the keyword list.
fn context_sentences(context: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut in_keywords = false;
    for line in context.lines().map(str::trim) {
        if line.is_empty() || line == "---" || line.starts_with("MEMORY ") {
            continue;
        }
        if line.ends_with(':') && line.chars().all(|c| c.is_ascii_uppercase() || c == ':') {
            in_keywords = line == "KEYWORDS:";
            continue;
        }
        if in_keywords {
            continue;
        }
        let body = line.strip_prefix("- ").unwrap_or(line);
        out.extend(split_sentences(body));
    }
    out
}

fn split_sentences(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Replays canned replies in order and records every request it sees.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    replies: Mutex<VecDeque<Result<ChatResponse, TransportError>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(replies: impl IntoIterator<Item = Result<ChatResponse, TransportError>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::default(),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatTransport for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.requests.lock().unwrap().push(request.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Rejected("script exhausted".into())))
    }

    fn name(&self) -> String {
        "scripted-mock".into()
    }
}
