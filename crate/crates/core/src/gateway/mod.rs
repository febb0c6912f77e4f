//! Completion backends and response parsing.

mod oracle;
mod parse;
mod remote;
mod replay;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::PromptRecord;

pub use oracle::{OracleBackend, OracleConfig};
pub use parse::{
    parse_listwise, parse_pairwise, parse_pointwise, parse_response, tokens, ParsedResponse, Payload, Preference,
    TITLE_MATCH_THRESHOLD,
};
pub use remote::{RemoteBackend, RemoteConfig, DEFAULT_API_KEY_VAR};
pub use replay::{read_transcript, write_transcript, ReplayBackend, TranscriptEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("recorded request {0} has a different prompt")]
    ReplayMismatch(String),
    #[error("invalid decoding parameters: {0}")]
    InvalidParams(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self { temperature: 0.1, top_p: 0.1, top_k: 10, max_tokens: 256 }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidParams("temperature must be non-negative".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidParams("top_p must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One completion request. `id` is a correlation id unique within a run.
#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub id: String,
    pub prompt: &'a PromptRecord,
}

impl CompletionRequest<'_> {
    pub fn message(&self) -> String {
        self.prompt.message()
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>, params: &CompletionParams) -> Result<String>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest<'_>, params: &CompletionParams) -> Result<String> {
        (**self).complete(request, params)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest<'_>, params: &CompletionParams) -> Result<String> {
        (**self).complete(request, params)
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
    }
}

/// A backend plus call accounting, a bound on concurrent requests and an
/// optional transcript of every exchange.
pub struct Gateway<B> {
    backend: B,
    params: CompletionParams,
    max_in_flight: usize,
    slots: Slots,
    calls: AtomicUsize,
    transcript: Option<Mutex<Vec<TranscriptEntry>>>,
}

impl<B: Backend> Gateway<B> {
    pub fn new(backend: B, params: CompletionParams, max_in_flight: usize) -> Result<Self> {
        params.validate()?;
        if max_in_flight == 0 {
            return Err(GatewayError::Config("concurrency bound must be at least 1".into()));
        }
        Ok(Self {
            backend,
            params,
            max_in_flight,
            slots: Slots { free: Mutex::new(max_in_flight), cv: Condvar::new() },
            calls: AtomicUsize::new(0),
            transcript: None,
        })
    }

    /// Records every exchange for later replay.
    pub fn recording(mut self) -> Self {
        self.transcript = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn params(&self) -> &CompletionParams {
        &self.params
    }

    /// Requests issued so far, successful or not.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.slots.acquire();
        let out = self.backend.complete(request, &self.params);
        self.slots.release();
        if let Some(t) = &self.transcript {
            let entry = TranscriptEntry::new(request, &out);
            t.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
        }
        out
    }

    /// Completes every request, up to the concurrency bound at a time.
    /// Results come back in request order.
    pub fn complete_all(&self, requests: &[CompletionRequest<'_>]) -> Vec<Result<String>> {
        let workers = self.max_in_flight.min(requests.len());
        if workers <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<String>>>> = requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(r) = requests.get(i) else { break };
                    let out = self.complete(r);
                    *results[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(out);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every request completed"))
            .collect()
    }

    /// The recorded exchanges sorted by correlation id.
    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        let mut out = match &self.transcript {
            Some(t) => t.lock().unwrap_or_else(|e| e.into_inner()).clone(),
            None => Vec::new(),
        };
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}
