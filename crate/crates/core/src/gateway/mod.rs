//! Uniform decision interface over chat-completion providers.
//!
//! A [`Channel`] wraps one provider with its sampling configuration, rate
//! limiter and concurrency cap. [`Channel::request_decision`] sends the
//! prompt as a single user message, parses the reply into a strategy and
//! re-sends the identical prompt on failure up to `max_retries` times.

mod clock;
mod http;
mod limiter;
mod mock;
mod parse;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::StrategyId;
use crate::strategies::{PolicyView, ScriptedPolicy};

pub use clock::{Clock, SystemClock, VirtualClock};
pub use http::{ChatMessage, ChatRequestBody, HttpProvider};
pub use limiter::{RateLimiter, Semaphore};
pub use mock::{mock_provider, MockProvider, MockScript};
pub use parse::{normalize_reply, parse_choice, ParseError};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_id: String,
    pub endpoint_url: String,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// Requests per minute; 0 means unlimited.
    #[serde(default = "default_rate")]
    pub rate_limit: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Delay before the first retry after a transport failure; doubles
    /// on each further failure.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Policy that stands in for this provider under `--mock`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<ScriptedPolicy>,
}

fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60_000
}
fn default_rate() -> u32 {
    60
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff() -> u64 {
    500
}

impl ProviderConfig {
    /// Configuration for an offline provider; nothing is ever sent.
    pub fn offline(provider_id: &str) -> Self {
        ProviderConfig {
            provider_id: provider_id.to_string(),
            endpoint_url: String::new(),
            model_id: provider_id.to_string(),
            temperature: 0.0,
            top_p: 1.0,
            top_k: None,
            api_key_env: String::new(),
            max_retries: default_retries(),
            timeout_ms: default_timeout(),
            rate_limit: 0,
            max_concurrency: default_concurrency(),
            backoff_ms: 0,
            mock: None,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let id = &self.provider_id;
        if id.trim().is_empty() {
            out.push("provider_id must be non-empty".to_string());
        }
        if !(self.temperature >= 0.0) {
            out.push(format!("provider {id}: temperature must be >= 0"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            out.push(format!("provider {id}: top_p must be in (0, 1]"));
        }
        if self.endpoint_url.trim().is_empty() {
            out.push(format!("provider {id}: endpoint_url must be non-empty"));
        }
        if self.api_key_env.trim().is_empty() {
            out.push(format!("provider {id}: api_key_env must name an environment variable"));
        }
        if let Some(p) = &self.mock {
            if let Err(e) = p.validate() {
                out.push(format!("provider {id}: mock policy: {e}"));
            }
        }
        out
    }

    fn backoff(&self, failures: u32) -> Duration {
        let factor = 1u64 << failures.saturating_sub(1).min(16);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor)).min(MAX_BACKOFF)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Network, timeout or non-success status; retried.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("sequence exhausted")]
    Exhausted,
    #[error("configuration error: {0}")]
    Config(String),
}

/// Game state handed to providers that simulate a player. Remote providers
/// ignore it; everything they see is in the prompt.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub view: PolicyView<'a>,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, prompt: &str, ctx: Option<&DecisionContext<'_>>, labels: &[String; 2])
        -> Result<String, ProviderError>;

    /// Whether wall-clock latency is meaningful for this provider.
    fn measures_latency(&self) -> bool {
        true
    }
}

/// One request/reply exchange, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen: StrategyId,
    pub raw_reply: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub provider_id: String,
    #[serde(default)]
    pub log: Vec<Attempt>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("provider unavailable after {} attempts: {last_error}", .log.len())]
    ProviderUnavailable { last_error: String, log: Vec<Attempt> },
    #[error("unparseable decision after {} attempts", .log.len())]
    Unparseable { log: Vec<Attempt> },
    #[error("sequence exhausted")]
    SequenceExhausted { log: Vec<Attempt> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty prompt")]
    EmptyPrompt,
}

impl GatewayError {
    pub fn log(&self) -> &[Attempt] {
        match self {
            GatewayError::ProviderUnavailable { log, .. }
            | GatewayError::Unparseable { log }
            | GatewayError::SequenceExhausted { log } => log,
            _ => &[],
        }
    }

    /// True when the failure was a bad reply rather than an unreachable
    /// provider.
    pub fn is_invalid_decision(&self) -> bool {
        matches!(self, GatewayError::Unparseable { .. } | GatewayError::SequenceExhausted { .. })
    }
}

/// Shared per-provider state: limiter, concurrency cap and clock.
pub struct ProviderRuntime {
    pub limiter: RateLimiter,
    pub permits: Semaphore,
    pub clock: Arc<dyn Clock>,
}

impl ProviderRuntime {
    pub fn new(cfg: &ProviderConfig, clock: Arc<dyn Clock>) -> Self {
        Self { limiter: RateLimiter::new(cfg.rate_limit), permits: Semaphore::new(cfg.max_concurrency), clock }
    }

    pub fn unlimited() -> Self {
        Self { limiter: RateLimiter::new(0), permits: Semaphore::new(usize::MAX), clock: Arc::new(SystemClock::default()) }
    }
}

/// A provider bound to its configuration and runtime.
#[derive(Clone)]
pub struct Channel {
    pub cfg: Arc<ProviderConfig>,
    pub provider: Arc<dyn ChatProvider>,
    pub runtime: Arc<ProviderRuntime>,
}

impl Channel {
    pub fn new(cfg: Arc<ProviderConfig>, provider: Arc<dyn ChatProvider>, runtime: Arc<ProviderRuntime>) -> Self {
        Self { cfg, provider, runtime }
    }

    pub fn request_decision(
        &self,
        prompt: &str,
        labels: &[String; 2],
        ctx: Option<&DecisionContext<'_>>,
    ) -> Result<Decision, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let clock = &*self.runtime.clock;
        let started = clock.now();
        let mut log = Vec::new();
        let mut transport_failures = 0;
        let mut last_transport: Option<String> = None;
        let total = self.cfg.max_retries + 1;
        for attempt in 1..=total {
            let result = {
                let _permit = self.runtime.permits.acquire();
                self.runtime.limiter.acquire(clock);
                self.provider.complete(prompt, ctx, labels)
            };
            match result {
                Ok(reply) => match parse_choice(&reply, labels) {
                    Ok(chosen) => {
                        log.push(Attempt { attempt, reply: Some(reply.clone()), error: None });
                        let latency_ms = if self.provider.measures_latency() {
                            (clock.now() - started).as_millis() as u64
                        } else {
                            0
                        };
                        return Ok(Decision {
                            chosen,
                            raw_reply: reply,
                            attempts: attempt,
                            latency_ms,
                            provider_id: self.cfg.provider_id.clone(),
                            log,
                        });
                    }
                    Err(e) => {
                        log.push(Attempt { attempt, reply: Some(reply), error: Some(e.to_string()) });
                        last_transport = None;
                    }
                },
                Err(ProviderError::Transport(msg)) => {
                    log.push(Attempt { attempt, reply: None, error: Some(msg.clone()) });
                    last_transport = Some(msg);
                    transport_failures += 1;
                    if attempt < total {
                        clock.sleep(self.cfg.backoff(transport_failures));
                    }
                }
                Err(ProviderError::Exhausted) => {
                    log.push(Attempt { attempt, reply: None, error: Some("sequence exhausted".into()) });
                    return Err(GatewayError::SequenceExhausted { log });
                }
                Err(ProviderError::Config(msg)) => return Err(GatewayError::Config(msg)),
            }
        }
        match last_transport {
            Some(last_error) => Err(GatewayError::ProviderUnavailable { last_error, log }),
            None => Err(GatewayError::Unparseable { log }),
        }
    }
}

/// Free-function form of [`Channel::request_decision`].
pub fn request_decision(
    channel: &Channel,
    prompt: &str,
    labels: &[String; 2],
    ctx: Option<&DecisionContext<'_>>,
) -> Result<Decision, GatewayError> {
    channel.request_decision(prompt, labels, ctx)
}

/// Replaces every occurrence of `secret` in `text`.
pub fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[REDACTED]")
    }
}
