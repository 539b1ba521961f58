//! Chat messages and tool calls shared by the graph, the providers and the tools.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Tool-call arguments keyed by parameter name.
pub type Arguments = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

/// A request from the model to invoke a named tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub arguments: Arguments,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: Arguments) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            arguments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_name: Option<String>,
}

impl Message {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
            agent_name: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_with_calls(content: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        Self {
            tool_calls: calls,
            ..Self::plain(Role::Assistant, content)
        }
    }

    pub fn tool(tool_call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(tool_call_id.into()),
            ..Self::plain(Role::Tool, content)
        }
    }

    pub fn with_agent(mut self, name: impl Into<String>) -> Self {
        self.agent_name = Some(name.into());
        self
    }

    pub fn has_tool_calls(&self) -> bool {
        self.role == Role::Assistant && !self.tool_calls.is_empty()
    }

    /// Checks the per-message role invariants. Cross-message invariants
    /// (tool replies referencing earlier calls) are checked by
    /// [`check_history`].
    pub fn check(&self) -> Result<(), String> {
        if self.role != Role::Assistant && !self.tool_calls.is_empty() {
            return Err(format!("{} message carries tool calls", self.role.as_str()));
        }
        match (self.role, &self.tool_call_id) {
            (Role::Tool, None) => Err("tool message without tool_call_id".into()),
            (Role::Tool, Some(_)) | (_, None) => Ok(()),
            (role, Some(_)) => Err(format!("{} message carries tool_call_id", role.as_str())),
        }
    }
}

/// Validates a full history: every message satisfies [`Message::check`] and
/// every tool reply answers a call issued by an earlier assistant message.
pub fn check_history(messages: &[Message]) -> Result<(), String> {
    let mut issued = std::collections::HashSet::new();
    for (i, m) in messages.iter().enumerate() {
        m.check().map_err(|e| format!("message {i}: {e}"))?;
        for call in &m.tool_calls {
            issued.insert(call.id.as_str());
        }
        if let Some(id) = &m.tool_call_id {
            if !issued.contains(id.as_str()) {
                return Err(format!("message {i}: reply to unknown tool call {id}"));
            }
        }
    }
    Ok(())
}

/// Tool call ids issued by assistants that have no tool reply yet.
pub fn unanswered_calls(messages: &[Message]) -> Vec<String> {
    let mut pending: Vec<String> = Vec::new();
    for m in messages {
        for call in &m.tool_calls {
            pending.push(call.id.clone());
        }
        if let Some(id) = &m.tool_call_id {
            if let Some(pos) = pending.iter().position(|p| p == id) {
                pending.remove(pos);
            }
        }
    }
    pending
}
