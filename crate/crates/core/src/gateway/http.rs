use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{redact, ChatProvider, DecisionContext, ProviderConfig, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// OpenAI-compatible chat-completion request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequestBody {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
}

impl ChatRequestBody {
    pub fn new(cfg: &ProviderConfig, prompt: &str) -> Self {
        ChatRequestBody {
            model: cfg.model_id.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            top_k: cfg.top_k,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Provider speaking the OpenAI-compatible chat-completion protocol.
pub struct HttpProvider {
    cfg: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpProvider {
    /// Reads the API key from the environment variable named in `cfg`.
    pub fn from_env(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| {
            ProviderError::Config(format!(
                "environment variable {} for provider {} is not set",
                cfg.api_key_env, cfg.provider_id
            ))
        })?;
        Ok(Self::with_key(cfg, key))
    }

    pub fn with_key(cfg: ProviderConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, api_key, agent }
    }

    fn send(&self, body: &ChatRequestBody) -> Result<String, ProviderError> {
        let transport = |e: ureq::Error| ProviderError::Transport(redact(&e.to_string(), &self.api_key));
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let text: String = text.chars().take(200).collect();
            return Err(ProviderError::Transport(redact(&format!("HTTP {status}: {text}"), &self.api_key)));
        }
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(transport)?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transport("response has no choices".into()))
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, prompt: &str, _: Option<&DecisionContext<'_>>, _: &[String; 2]) -> Result<String, ProviderError> {
        self.send(&ChatRequestBody::new(&self.cfg, prompt))
    }
}
