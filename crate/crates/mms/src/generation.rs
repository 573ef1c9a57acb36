//! Answer generation from retrieved memories.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::chat::{
    ChatMessage, ChatRequest, ChatTransport, Clock, EchoChat, ExtractiveChat, FixedChat,
    HttpChatTransport, RetryPolicy, SystemClock, TokenUsage, CHAT_URL_ENV,
};
use crate::error::{MmsError, Result};
use crate::extraction::UsageRecord;
use crate::prompts;

pub const ANSWER_TEMPERATURE: f64 = 0.7;

#[derive(Clone)]
pub struct Answerer {
    transport: Arc<dyn ChatTransport>,
    model: String,
    temperature: f64,
    template_id: String,
    retry: RetryPolicy,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Answerer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Answerer")
            .field("transport", &self.transport.name())
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .field("template_id", &self.template_id)
            .finish()
    }
}

impl Answerer {
    pub fn new(transport: Arc<dyn ChatTransport>) -> Self {
        Self {
            transport,
            model: String::new(),
            temperature: ANSWER_TEMPERATURE,
            template_id: prompts::ANSWER_V1.into(),
            retry: RetryPolicy::default(),
            clock: Arc::new(SystemClock::default()),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(MmsError::Config(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn with_template(mut self, template_id: impl Into<String>) -> Result<Self> {
        let id = template_id.into();
        prompts::template(&id)?;
        self.template_id = id;
        Ok(self)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn describe(&self) -> String {
        if self.model.is_empty() {
            self.transport.name()
        } else {
            format!("{}:{}", self.transport.name(), self.model)
        }
    }

    pub fn render_request(&self, question: &str, context: &str) -> Result<ChatRequest> {
        let template = prompts::template(&self.template_id)?;
        let prompt = prompts::render(template, &[("context", context), ("question", question)]);
        Ok(ChatRequest {
            model: self.model.clone(),
            temperature: self.temperature,
            messages: vec![ChatMessage::user(prompt)],
        })
    }

    /// Ask the backend to answer `question` from `context`.
    pub fn answer(&self, question: &str, context: &str) -> Result<(String, UsageRecord)> {
        let request = self.render_request(question, context)?;
        let started = self.clock.now();
        let response = self
            .retry
            .run(|| self.transport.complete(&request))
            .map_err(|(attempts, err)| MmsError::Generation {
                attempts,
                message: err.to_string(),
            })?;
        let wall_latency = (self.clock.now() - started).max(0.0);
        let text = response.text.trim();
        if text.is_empty() {
            return Err(MmsError::EmptyAnswer);
        }
        Ok((
            text.to_string(),
            UsageRecord {
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
                wall_latency,
            },
        ))
    }
}

/// Named chat backends selectable from configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChatBackend {
    EchoMock,
    ExtractiveMock,
    FixedMock(String),
    /// `MMS_CHAT_URL` / `MMS_CHAT_KEY`.
    Http,
}

impl ChatBackend {
    pub fn build(&self) -> Result<Arc<dyn ChatTransport>> {
        Ok(match self {
            ChatBackend::EchoMock => Arc::new(EchoChat),
            ChatBackend::ExtractiveMock => Arc::new(ExtractiveChat),
            ChatBackend::FixedMock(text) => {
                Arc::new(FixedChat::new(text.clone(), TokenUsage::default()))
            }
            ChatBackend::Http => Arc::new(
                HttpChatTransport::from_env()
                    .ok_or_else(|| MmsError::Config(format!("{CHAT_URL_ENV} is not set")))?,
            ),
        })
    }
}

impl FromStr for ChatBackend {
    type Err = MmsError;

    /// `echo-mock`, `extractive-mock`, `fixed-mock:<text>` or `http`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "echo-mock" => Ok(Self::EchoMock),
            "extractive-mock" => Ok(Self::ExtractiveMock),
            "http" => Ok(Self::Http),
            other => match other.strip_prefix("fixed-mock:") {
                Some(text) => Ok(Self::FixedMock(text.to_string())),
                None => Err(MmsError::InvalidArgument(format!(
                    "unknown chat backend {other:?} (expected echo-mock, extractive-mock, fixed-mock:<text> or http)"
                ))),
            },
        }
    }
}

impl fmt::Display for ChatBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChatBackend::EchoMock => f.write_str("echo-mock"),
            ChatBackend::ExtractiveMock => f.write_str("extractive-mock"),
            ChatBackend::FixedMock(text) => write!(f, "fixed-mock:{text}"),
            ChatBackend::Http => f.write_str("http"),
        }
    }
}
