//! Offline provider replaying a JSON script.
//!
//! ```json
//! {
//!   "explore_files": [
//!     {"attempt": 1, "turns": [{"text": "...", "tool_calls": [{"name": "submit_patch", "arguments": {"patch": "..."}}]}]},
//!     {"turns": [...], "repeat": true}
//!   ],
//!   "debug_one": [{"turns": [...]}]
//! }
//! ```
//!
//! For each request the first episode of the request's phase whose `attempt`
//! and `slot` selectors match (absent selectors match anything) is used, and
//! the turn index is the number of assistant messages already in the request.
//! The provider keeps no state, so concurrent episodes replay identically.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::provider::{Provider, ProviderError, ProviderReply, ProviderRequest, Usage};
use super::{Message, Phase, ToolCall};
use crate::error::{Error, IoContext, Result};
use crate::util::estimate_tokens;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedTurn {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedCall>,
    /// Simulated transport failure for this turn.
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptedEpisode {
    #[serde(default)]
    attempt: Option<u32>,
    #[serde(default)]
    slot: Option<u32>,
    turns: Vec<ScriptedTurn>,
    /// Replay the last turn once the script runs out.
    #[serde(default)]
    repeat: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    phases: BTreeMap<Phase, Vec<ScriptedEpisode>>,
}

impl ScriptedProvider {
    pub fn from_json(text: &str) -> Result<Self> {
        let phases: BTreeMap<Phase, Vec<ScriptedEpisode>> =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("mock script: {e}")))?;
        for (phase, episodes) in &phases {
            if episodes.iter().any(|e| e.turns.is_empty()) {
                return Err(Error::InvalidConfig(format!(
                    "mock script: {phase} episode without turns"
                )));
            }
        }
        Ok(ScriptedProvider { phases })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).at(path)?)
    }

    fn episode(&self, request: &ProviderRequest) -> Option<&ScriptedEpisode> {
        let tag = request.tag;
        self.phases
            .get(&tag.phase)?
            .iter()
            .find(|e| e.attempt.is_none_or(|a| a == tag.attempt) && e.slot.is_none_or(|s| s == tag.slot))
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &ProviderRequest) -> std::result::Result<ProviderReply, ProviderError> {
        let tag = request.tag;
        let episode = self.episode(request).ok_or_else(|| {
            ProviderError::Fatal(format!(
                "mock script has no {} episode for attempt {} slot {}",
                tag.phase, tag.attempt, tag.slot
            ))
        })?;
        let turn_index = request.turn();
        let turn = match episode.turns.get(turn_index) {
            Some(turn) => turn,
            None if episode.repeat => episode.turns.last().expect("validated non-empty"),
            None => {
                return Err(ProviderError::Fatal(format!(
                    "mock script for {} attempt {} slot {} has no turn {}",
                    tag.phase,
                    tag.attempt,
                    tag.slot,
                    turn_index + 1
                )))
            }
        };
        if let Some(error) = &turn.error {
            return Err(ProviderError::Transient(error.clone()));
        }
        let tool_calls: Vec<ToolCall> = turn
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| ToolCall {
                id: format!("call_{turn_index}_{i}"),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        let prompt_tokens: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        let completion_tokens = estimate_tokens(&turn.text)
            + tool_calls
                .iter()
                .map(|c| estimate_tokens(&c.arguments.to_string()))
                .sum::<u64>();
        Ok(ProviderReply {
            message: Message::assistant(turn.text.clone(), tool_calls),
            usage: Usage {
                prompt_tokens,
                completion_tokens,
            },
        })
    }
}
