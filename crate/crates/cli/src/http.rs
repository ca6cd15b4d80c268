//! OpenAI-compatible chat-completions provider.

use std::fmt;
use std::time::Duration;

use serde_json::{json, Value};

use testfix_core::agent::{Message, Provider, ProviderError, ProviderReply, ProviderRequest, Role, ToolCall, Usage};

/// Environment variable holding the provider credential.
pub const API_KEY_ENV: &str = "TESTFIX_API_KEY";

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

// The key never appears in debug output.
impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpProvider {
    /// `endpoint` is the API base, e.g. `https://api.example.com/v1`.
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| format!("cannot build HTTP client: {e}"))?;
        Ok(HttpProvider {
            client,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            api_key: api_key.filter(|k| !k.is_empty()),
        })
    }

    pub fn from_env(endpoint: &str, model: &str, timeout: Duration) -> Result<Self, String> {
        Self::new(endpoint, model, std::env::var(API_KEY_ENV).ok(), timeout)
    }

    fn body(&self, request: &ProviderRequest) -> Value {
        let messages: Vec<Value> = request.messages.iter().map(encode_message).collect();
        let tools: Vec<Value> = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {"name": t.name, "description": t.description, "parameters": t.parameters},
                })
            })
            .collect();
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(tools);
        }
        body
    }
}

fn encode_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({"role": role, "content": m.content});
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": {"name": c.name, "arguments": c.arguments.to_string()},
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

/// Parses a chat-completions response body.
pub fn decode_reply(body: &Value) -> Result<ProviderReply, ProviderError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message".into()))?;
    let content = msg.get("content").and_then(Value::as_str).unwrap_or("").to_string();
    let mut calls = Vec::new();
    for (i, c) in msg
        .get("tool_calls")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .enumerate()
    {
        let name = c
            .pointer("/function/name")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Fatal(format!("tool call {i} has no function name")))?;
        let raw = c.pointer("/function/arguments");
        // Arguments normally arrive as a JSON string; keep unparsable text so
        // the tool layer can report it to the agent.
        let arguments = match raw {
            Some(Value::String(s)) => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())),
            Some(other) => other.clone(),
            None => json!({}),
        };
        let id = c
            .get("id")
            .and_then(Value::as_str)
            .map_or_else(|| format!("call_{i}"), str::to_string);
        calls.push(ToolCall {
            id,
            name: name.to_string(),
            arguments,
        });
    }
    let usage = Usage {
        prompt_tokens: body
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        completion_tokens: body
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ProviderReply {
        message: Message::assistant(content, calls),
        usage,
    })
}

impl Provider for HttpProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderReply, ProviderError> {
        let mut req = self.client.post(&self.url).json(&self.body(request));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transient(format!("request failed: {}", e.without_url())))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transient(format!("reading response: {}", e.without_url())))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(300).collect();
            let msg = format!("HTTP {status}: {snippet}");
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                ProviderError::Transient(msg)
            } else {
                ProviderError::Fatal(msg)
            });
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("response is not JSON: {e}")))?;
        decode_reply(&body)
    }
}
