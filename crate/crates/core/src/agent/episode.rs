use std::collections::BTreeSet;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use super::prompts::{render_prompt, Bindings};
use super::provider::{complete_with_retry, Provider, Usage};
use super::{EpisodeTag, Message, Phase, ProviderRequest, ToolSpec};
use crate::audit::{AuditEvent, EventSink, RecordKind};
use crate::error::Result;

/// Static description of one phase's episode.
#[derive(Debug, Clone)]
pub struct SubAgentSpec<'t> {
    pub phase: Phase,
    pub system_template: &'t str,
    pub user_template: &'t str,
    pub max_turns: u32,
    /// Tool whose successful call ends the episode.
    pub terminal_tool: &'static str,
}

/// Result of a tool invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    pub content: String,
    /// False for refusals and argument errors.
    pub ok: bool,
    /// Set by a terminal tool that accepted its input; ends the episode.
    pub terminal: Option<Value>,
}

impl ToolOutput {
    pub fn ok(content: impl Into<String>) -> Self {
        ToolOutput {
            content: content.into(),
            ok: true,
            terminal: None,
        }
    }

    pub fn refused(content: impl Into<String>) -> Self {
        ToolOutput {
            content: content.into(),
            ok: false,
            terminal: None,
        }
    }

    pub fn terminal(content: impl Into<String>, payload: Value) -> Self {
        ToolOutput {
            content: content.into(),
            ok: true,
            terminal: Some(payload),
        }
    }
}

/// The tools visible to one episode. `specs` doubles as the allowlist.
pub trait Toolbox {
    fn specs(&self) -> Vec<ToolSpec>;
    fn call(&mut self, name: &str, arguments: &Value) -> ToolOutput;
}

/// Provider settings shared by every episode of a run.
#[derive(Clone, Copy)]
pub struct AgentEnv<'a> {
    pub provider: &'a dyn Provider,
    pub temperature: f64,
    pub provider_attempts: u32,
    pub provider_backoff: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Terminal,
    TurnLimit,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolEvent {
    pub turn: u32,
    pub name: String,
    pub arguments: Value,
    pub result: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTranscript {
    pub tag: EpisodeTag,
    pub messages: Vec<Message>,
    pub tool_events: Vec<ToolEvent>,
    pub turns_used: u32,
    pub stop_reason: StopReason,
    /// Payload of the terminal tool call.
    pub output: Option<Value>,
    pub usage: Usage,
    pub provider_error: Option<String>,
}

impl AgentTranscript {
    pub fn last_assistant_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == super::Role::Assistant && !m.content.trim().is_empty())
            .map(|m| m.content.as_str())
    }
}

/// Runs one episode until the terminal tool succeeds, the turn limit is hit
/// or the provider fails for good. Template errors surface before any
/// provider call.
pub fn run_subagent(
    env: &AgentEnv<'_>,
    spec: &SubAgentSpec<'_>,
    bindings: &Bindings,
    tools: &mut dyn Toolbox,
    tag: EpisodeTag,
    sink: &dyn EventSink,
) -> Result<AgentTranscript> {
    let system = render_prompt(spec.system_template, &Bindings::new())?;
    let user = render_prompt(spec.user_template, bindings)?;
    let specs = tools.specs();
    let allowed: BTreeSet<String> = specs.iter().map(|s| s.name.clone()).collect();
    debug_assert!(allowed.contains(spec.terminal_tool));

    let emit = |kind, data| sink.emit(AuditEvent::new(tag.phase.as_str(), tag.attempt, kind, data));
    emit(
        RecordKind::PhaseTransition,
        json!({"event": "episode_start", "slot": tag.slot, "max_turns": spec.max_turns, "user_prompt": user}),
    );

    let mut transcript = AgentTranscript {
        tag,
        messages: vec![Message::system(system), Message::user(user)],
        tool_events: Vec::new(),
        turns_used: 0,
        stop_reason: StopReason::TurnLimit,
        output: None,
        usage: Usage::default(),
        provider_error: None,
    };

    'turns: while transcript.turns_used < spec.max_turns {
        let request = ProviderRequest {
            tag,
            messages: transcript.messages.clone(),
            tools: specs.clone(),
            temperature: env.temperature,
        };
        let reply = match complete_with_retry(env.provider, &request, env.provider_attempts, env.provider_backoff) {
            Ok(reply) => reply,
            Err(e) => {
                transcript.stop_reason = StopReason::ProviderError;
                transcript.provider_error = Some(e.to_string());
                emit(
                    RecordKind::LlmCall,
                    json!({"slot": tag.slot, "turn": transcript.turns_used + 1, "error": e.to_string()}),
                );
                break;
            }
        };
        transcript.turns_used += 1;
        let turn = transcript.turns_used;
        transcript.usage.add(reply.usage);
        let calls = reply.message.tool_calls.clone();
        emit(
            RecordKind::LlmCall,
            json!({
                "slot": tag.slot,
                "turn": turn,
                "prompt_tokens": reply.usage.prompt_tokens,
                "completion_tokens": reply.usage.completion_tokens,
                "text": reply.message.content,
                "tool_calls": calls.iter().map(|c| json!({"name": c.name, "arguments": c.arguments})).collect::<Vec<_>>(),
            }),
        );
        transcript.messages.push(reply.message);

        if calls.is_empty() {
            transcript.messages.push(Message::user(format!(
                "Your reply contained no tool call. Continue with the available tools and finish by calling `{}`.",
                spec.terminal_tool
            )));
            continue;
        }
        for call in calls {
            let output = if allowed.contains(&call.name) {
                tools.call(&call.name, &call.arguments)
            } else {
                ToolOutput::refused(format!(
                    "Unknown tool `{}`. Available tools: {}.",
                    call.name,
                    allowed.iter().cloned().collect::<Vec<_>>().join(", ")
                ))
            };
            emit(
                RecordKind::ToolCall,
                json!({
                    "slot": tag.slot,
                    "turn": turn,
                    "name": call.name,
                    "arguments": call.arguments,
                    "ok": output.ok,
                    "result": output.content,
                }),
            );
            transcript.tool_events.push(ToolEvent {
                turn,
                name: call.name.clone(),
                arguments: call.arguments.clone(),
                result: output.content.clone(),
                ok: output.ok,
            });
            transcript.messages.push(Message::tool(call.id, output.content));
            if let Some(payload) = output.terminal {
                transcript.output = Some(payload);
                transcript.stop_reason = StopReason::Terminal;
                break 'turns;
            }
        }
    }

    emit(
        RecordKind::PhaseTransition,
        json!({
            "event": "episode_end",
            "slot": tag.slot,
            "stop_reason": transcript.stop_reason,
            "turns_used": transcript.turns_used,
            "prompt_tokens": transcript.usage.prompt_tokens,
            "completion_tokens": transcript.usage.completion_tokens,
        }),
    );
    Ok(transcript)
}
