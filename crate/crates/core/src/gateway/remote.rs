use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Backend, CompletionParams, CompletionRequest, GatewayError, Result};

/// Environment variable holding the bearer credential by default.
pub const DEFAULT_API_KEY_VAR: &str = "RECRANK_API_KEY";

const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable to read the credential from. A missing variable
    /// sends no Authorization header.
    pub api_key_var: String,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "recranker".into(),
            api_key_var: DEFAULT_API_KEY_VAR.into(),
            timeout: Duration::from_secs(60),
            attempts: 3,
            backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    top_p: f64,
    top_k: u32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

/// Client for an HTTP chat-completion endpoint.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

enum Failure {
    Retry(GatewayError),
    Fatal(GatewayError),
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        if cfg.attempts == 0 {
            return Err(GatewayError::Config("at least one attempt is required".into()));
        }
        let api_key = std::env::var(&cfg.api_key_var).ok().filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .new_agent();
        Ok(Self { cfg, agent, api_key })
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> std::result::Result<String, Failure> {
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Failure::Retry(GatewayError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text =
            resp.body_mut().read_to_string().map_err(|e| Failure::Retry(GatewayError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let err = GatewayError::Protocol { status, body: excerpt(&text) };
            return Err(if status == 429 || status >= 500 { Failure::Retry(err) } else { Failure::Fatal(err) });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(GatewayError::Protocol {
                status,
                body: format!("malformed response ({e}): {}", excerpt(&text)),
            })
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal(GatewayError::Protocol { status, body: "response has no choices".into() }))
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest<'_>, params: &CompletionParams) -> Result<String> {
        let message = request.message();
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: [Message { role: "user", content: &message }],
            temperature: params.temperature,
            top_p: params.top_p,
            top_k: params.top_k,
            max_tokens: params.max_tokens,
        };
        let mut delay = self.cfg.backoff;
        let mut last = None;
        for n in 1..=self.cfg.attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => {
                    warn!("request {} attempt {n}/{} failed: {e}", request.id, self.cfg.attempts);
                    last = Some(e);
                    if n < self.cfg.attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(last.unwrap_or_else(|| GatewayError::Transport("no attempt made".into())))
    }
}
