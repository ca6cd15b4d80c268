//! Sub-agent episodes: prompt rendering, the provider abstraction and the
//! provider-call / tool-dispatch loop.

mod episode;
pub mod prompts;
mod provider;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use episode::{run_subagent, AgentEnv, AgentTranscript, StopReason, SubAgentSpec, ToolEvent, ToolOutput, Toolbox};
pub use prompts::{render_prompt, Bindings};
pub use provider::{complete_with_retry, Provider, ProviderError, ProviderReply, ProviderRequest, Usage};
pub use scripted::{ScriptedProvider, ScriptedTurn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    GenerateTests,
    ExploreFiles,
    DebugOne,
    RevisePatch,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::GenerateTests,
        Phase::ExploreFiles,
        Phase::DebugOne,
        Phase::RevisePatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::GenerateTests => "generate_tests",
            Phase::ExploreFiles => "explore_files",
            Phase::DebugOne => "debug_one",
            Phase::RevisePatch => "revise_patch",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
            tool_calls,
            tool_call_id: None,
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Message {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }
}

/// Tool schema as published to the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// JSON Schema of the argument object.
    pub parameters: Value,
}

/// Identifies one episode within a run; scripted providers key on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeTag {
    pub phase: Phase,
    /// 1-based attempt index; 0 for Generate Tests.
    pub attempt: u32,
    /// Position in the Debug One schedule, 0 elsewhere.
    pub slot: u32,
}

impl EpisodeTag {
    pub fn new(phase: Phase, attempt: u32, slot: u32) -> Self {
        EpisodeTag { phase, attempt, slot }
    }
}
