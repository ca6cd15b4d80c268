use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EpisodeTag, Message, ToolSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderRequest {
    pub tag: EpisodeTag,
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSpec>,
    pub temperature: f64,
}

impl ProviderRequest {
    /// Number of assistant turns already taken in this episode.
    pub fn turn(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.role == super::Role::Assistant)
            .count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn add(&mut self, other: Usage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    /// Assistant message: text and/or tool calls.
    pub message: Message,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    /// Worth retrying: transport errors, rate limits, 5xx.
    #[error("transient provider error: {0}")]
    Transient(String),
    #[error("provider error: {0}")]
    Fatal(String),
}

/// Chat-completion style model endpoint.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> std::result::Result<ProviderReply, ProviderError>;
}

/// Calls `provider`, retrying transient failures up to `attempts` times in
/// total with exponential backoff starting at `backoff`.
pub fn complete_with_retry(
    provider: &dyn Provider,
    request: &ProviderRequest,
    attempts: u32,
    backoff: Duration,
) -> Result<ProviderReply> {
    let attempts = attempts.max(1);
    let mut delay = backoff;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match provider.complete(request) {
            Ok(reply) => return Ok(reply),
            Err(ProviderError::Fatal(msg)) => return Err(Error::Provider(msg)),
            Err(ProviderError::Transient(msg)) => {
                tracing::warn!(attempt, error = %msg, "provider call failed");
                last = msg;
                if attempt < attempts {
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }
    Err(Error::Provider(format!("giving up after {attempts} attempts: {last}")))
}
