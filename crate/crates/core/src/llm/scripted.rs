//! Deterministic provider replaying an ordered script of canned responses.
//!
//! Each call walks the script and answers with the first entry whose match
//! predicates all hold. String values in the canned response may contain
//! `{{artifact:NAME}}`, which resolves to the most recent absolute path
//! ending in `NAME` mentioned by a user or tool message of the request. This
//! stands in for a model reading a file path out of a tool log.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_response, ChatProvider, LlmError, ProviderRequest};
use crate::message::{Arguments, Message, Role, ToolCall};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptMatch {
    /// Agent named by the request's system message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    /// Substring of the latest user or tool message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_role: Option<Role>,
    /// `agent_name` of the last message in the request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_agent: Option<String>,
    /// Zero-based index of the call on this provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
}

impl ScriptMatch {
    fn matches(&self, request: &ProviderRequest, step: u64) -> bool {
        if let Some(agent) = &self.agent {
            if request.agent() != Some(agent.as_str()) {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            let latest = request
                .messages
                .iter()
                .rev()
                .find(|m| matches!(m.role, Role::User | Role::Tool));
            if !latest.is_some_and(|m| m.content.contains(needle.as_str())) {
                return false;
            }
        }
        let last = request.messages.last();
        if let Some(role) = self.last_role {
            if last.map(|m| m.role) != Some(role) {
                return false;
            }
        }
        if let Some(agent) = &self.last_agent {
            if last.and_then(|m| m.agent_name.as_deref()) != Some(agent.as_str()) {
                return false;
            }
        }
        self.step.is_none_or(|s| s == step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Arguments,
    /// Emit this call this many times.
    #[serde(default = "one")]
    pub repeat: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedCall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default)]
    pub when: ScriptMatch,
    pub response: ScriptedResponse,
}

#[derive(Debug)]
pub struct ScriptedProvider {
    entries: Vec<ScriptEntry>,
    cap: Option<u32>,
    step: Mutex<u64>,
}

impl ScriptedProvider {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            cap: None,
            step: Mutex::new(0),
        }
    }

    /// Loads a UTF-8 JSON array of script entries.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }

    /// Caps the number of tool calls per response, emulating a model that
    /// stops emitting calls past a limit.
    pub fn with_cap(mut self, cap: Option<u32>) -> Self {
        self.cap = cap;
        self
    }

    pub fn calls_made(&self) -> u64 {
        *self.step.lock().unwrap()
    }

    fn render(
        &self,
        response: &ScriptedResponse,
        request: &ProviderRequest,
        step: u64,
    ) -> Result<Message, LlmError> {
        let content = expand_str(&response.content, request)?;
        let mut calls = Vec::new();
        for call in &response.tool_calls {
            let mut arguments = Arguments::new();
            for (k, v) in &call.arguments {
                arguments.insert(k.clone(), expand_value(v, request)?);
            }
            for _ in 0..call.repeat {
                let id = format!("call_{step}_{}", calls.len());
                calls.push(ToolCall::new(id, call.name.clone(), arguments.clone()));
            }
        }
        let mut message = Message::assistant_with_calls(content, calls);
        message.agent_name = request.agent().map(str::to_string);
        Ok(message)
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<Message, LlmError> {
        request.validate()?;
        let step = {
            let mut guard = self.step.lock().unwrap();
            let step = *guard;
            *guard += 1;
            step
        };
        let entry = self
            .entries
            .iter()
            .find(|e| e.when.matches(request, step))
            .ok_or_else(|| LlmError::NoScriptMatch {
                step,
                agent: request.agent().map(str::to_string),
            })?;
        let message = self.render(&entry.response, request, step)?;
        check_response(request, message, self.cap)
    }
}

fn expand_value(value: &Value, request: &ProviderRequest) -> Result<Value, LlmError> {
    match value {
        Value::String(s) => Ok(Value::String(expand_str(s, request)?)),
        other => Ok(other.clone()),
    }
}

fn expand_str(text: &str, request: &ProviderRequest) -> Result<String, LlmError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{artifact:") {
        out.push_str(&rest[..start]);
        let after = &rest[start + "{{artifact:".len()..];
        let end = after
            .find("}}")
            .ok_or_else(|| LlmError::Script(format!("unterminated placeholder in {text:?}")))?;
        let name = &after[..end];
        let path = find_artifact(name, request).ok_or_else(|| {
            LlmError::Script(format!("no path ending in {name:?} in the conversation"))
        })?;
        out.push_str(&path.to_string_lossy());
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn find_artifact(name: &str, request: &ProviderRequest) -> Option<PathBuf> {
    const EDGE: &[char] = &[
        '"', '\'', '(', ')', ',', ';', ':', '?', '!', '.', '`', '[', ']',
    ];
    request
        .messages
        .iter()
        .rev()
        .filter(|m| matches!(m.role, Role::User | Role::Tool))
        .flat_map(|m| m.content.split_whitespace().rev())
        .map(|tok| Path::new(tok.trim_matches(EDGE)))
        .find(|p| {
            p.is_absolute()
                && p.file_name()
                    .is_some_and(|f| f.to_string_lossy().eq_ignore_ascii_case(name))
        })
        .map(Path::to_path_buf)
}
