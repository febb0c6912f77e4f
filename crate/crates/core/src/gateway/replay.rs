use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Backend, CompletionParams, CompletionRequest, GatewayError, Result};

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub id: String,
    pub task: String,
    pub user: usize,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TranscriptEntry {
    pub(crate) fn new(request: &CompletionRequest<'_>, out: &Result<String>) -> Self {
        let (response, error) = match out {
            Ok(text) => (Some(text.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            id: request.id.clone(),
            task: request.prompt.task.as_str().to_string(),
            user: request.prompt.user,
            message: request.message(),
            response,
            error,
        }
    }
}

/// One JSON object per line.
pub fn write_transcript<W: Write>(w: &mut W, entries: &[TranscriptEntry]) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut *w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_transcript(text: &str) -> Result<Vec<TranscriptEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| GatewayError::Format(format!("line {}: {e}", n + 1))))
        .collect()
}

/// Serves recorded responses by correlation id. A request whose prompt text
/// differs from the recording is rejected.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, TranscriptEntry>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self { entries: entries.into_iter().map(|e| (e.id.clone(), e)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest<'_>, _: &CompletionParams) -> Result<String> {
        let e = self.entries.get(&request.id).ok_or_else(|| GatewayError::ReplayMiss(request.id.clone()))?;
        if e.message != request.message() {
            return Err(GatewayError::ReplayMismatch(request.id.clone()));
        }
        match (&e.response, &e.error) {
            (Some(text), _) => Ok(text.clone()),
            (None, Some(err)) => Err(GatewayError::Transport(format!("recorded failure: {err}"))),
            (None, None) => Err(GatewayError::Format(format!("entry {} has neither response nor error", e.id))),
        }
    }
}
