//! Chat-completion providers with function calling.
//!
//! Two implementations share the [`ChatProvider`] trait: [`HttpProvider`]
//! speaks the OpenAI-compatible `/chat/completions` wire format and
//! [`ScriptedProvider`] replays a fixture script for offline, reproducible
//! runs. Both pass their output through [`check_response`], which enforces
//! the tool-call cap and the bound tool schemas.

mod http;
mod scripted;
mod wire;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::message::{Arguments, Message, Role};

pub use http::HttpProvider;
pub use scripted::{ScriptEntry, ScriptMatch, ScriptedCall, ScriptedProvider, ScriptedResponse};
pub use wire::{decode_response, decode_wire, encode_wire};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("no script entry matches step {step} (agent {agent:?})")]
    NoScriptMatch { step: u64, agent: Option<String> },
    #[error("malformed wire document: {0}")]
    Decode(String),
    #[error("script error: {0}")]
    Script(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    String,
    Number,
    Integer,
    Boolean,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Number => "number",
            ParamType::Integer => "integer",
            ParamType::Boolean => "boolean",
        }
    }

    pub fn accepts(self, value: &Value) -> bool {
        match self {
            ParamType::String => value.is_string(),
            ParamType::Number => value.is_number(),
            ParamType::Integer => {
                value.is_i64() || value.is_u64() || value.as_f64().is_some_and(|f| f.fract() == 0.0)
            }
            ParamType::Boolean => value.is_boolean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub kind: ParamType,
    pub description: String,
    pub required: bool,
}

/// The binding contract between a model and a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: BTreeMap<String, ParamSpec>,
}

impl ToolSchema {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn param(
        mut self,
        name: impl Into<String>,
        kind: ParamType,
        description: impl Into<String>,
        required: bool,
    ) -> Self {
        self.parameters.insert(
            name.into(),
            ParamSpec {
                kind,
                description: description.into(),
                required,
            },
        );
        self
    }

    /// Checks presence of required arguments and the type of every declared
    /// argument. Undeclared arguments are ignored.
    pub fn check_arguments(&self, args: &Arguments) -> Result<(), String> {
        for (name, spec) in &self.parameters {
            match args.get(name) {
                None | Some(Value::Null) if spec.required => {
                    return Err(format!("missing required argument `{name}`"));
                }
                None | Some(Value::Null) => {}
                Some(v) if !spec.kind.accepts(v) => {
                    return Err(format!(
                        "argument `{name}` must be {}, got {v}",
                        spec.kind.as_str()
                    ));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSchema>,
    pub max_parallel_tool_calls: Option<u32>,
}

impl ProviderRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        let invalid = |m: String| Err(LlmError::InvalidRequest(m));
        if self.messages.is_empty() {
            return invalid("messages must not be empty".into());
        }
        match self.messages.iter().find(|m| m.role != Role::System) {
            Some(m) if m.role == Role::User => {}
            Some(m) => {
                return invalid(format!(
                    "first non-system message has role {}",
                    m.role.as_str()
                ))
            }
            None => return invalid("no user message".into()),
        }
        crate::message::check_history(&self.messages).map_err(LlmError::InvalidRequest)?;
        let mut names = HashSet::new();
        for tool in &self.tools {
            if tool.name.is_empty() {
                return invalid("tool with empty name".into());
            }
            if !names.insert(tool.name.as_str()) {
                return invalid(format!("duplicate tool {}", tool.name));
            }
        }
        if self.max_parallel_tool_calls == Some(0) {
            return invalid("max_parallel_tool_calls must be positive".into());
        }
        Ok(())
    }

    /// Name of the agent issuing the request, taken from the leading system
    /// message.
    pub fn agent(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .and_then(|m| m.agent_name.as_deref())
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<Message, LlmError>;
}

/// Applies the tool-call cap and verifies every emitted call against the
/// request's tool schemas.
pub fn check_response(
    request: &ProviderRequest,
    mut message: Message,
    provider_cap: Option<u32>,
) -> Result<Message, LlmError> {
    if message.role != Role::Assistant {
        return Err(LlmError::SchemaViolation(format!(
            "provider returned a {} message",
            message.role.as_str()
        )));
    }
    let cap = match (request.max_parallel_tool_calls, provider_cap) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    if let Some(cap) = cap {
        if message.tool_calls.len() > cap as usize {
            log::info!(
                "provider emitted {} tool calls, capped at {cap}",
                message.tool_calls.len()
            );
            message.tool_calls.truncate(cap as usize);
        }
    }
    for call in &message.tool_calls {
        let schema = request
            .tools
            .iter()
            .find(|t| t.name == call.name)
            .ok_or_else(|| LlmError::SchemaViolation(format!("unknown tool {}", call.name)))?;
        schema
            .check_arguments(&call.arguments)
            .map_err(|e| LlmError::SchemaViolation(format!("{}: {e}", call.name)))?;
    }
    Ok(message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::ToolCall;
    use serde_json::json;

    fn md_schema() -> ToolSchema {
        ToolSchema::new("run_md", "run one simulation")
            .param("structure_path", ParamType::String, "pdb file", true)
            .param("temperature", ParamType::Number, "kelvin", true)
            .param("seed", ParamType::Integer, "rng seed", false)
    }

    #[test]
    fn empty_messages_rejected() {
        let req = ProviderRequest {
            model: "m".into(),
            messages: vec![],
            tools: vec![],
            max_parallel_tool_calls: None,
        };
        assert!(matches!(req.validate(), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn first_non_system_must_be_user() {
        let req = ProviderRequest {
            model: "m".into(),
            messages: vec![Message::system("s"), Message::assistant("a")],
            tools: vec![],
            max_parallel_tool_calls: None,
        };
        assert!(req.validate().is_err());
    }

    #[test]
    fn argument_checks() {
        let s = md_schema();
        let mut args = Arguments::new();
        args.insert("temperature".into(), json!(313));
        let err = s.check_arguments(&args).unwrap_err();
        assert!(err.contains("structure_path"));
        args.insert("structure_path".into(), json!("/x.pdb"));
        assert!(s.check_arguments(&args).is_ok());
        args.insert("seed".into(), json!(1.5));
        assert!(s.check_arguments(&args).is_err());
        args.insert("seed".into(), json!(7));
        args.insert("temperature".into(), json!("hot"));
        assert!(s.check_arguments(&args).is_err());
    }

    #[test]
    fn response_is_capped_then_checked() {
        let req = ProviderRequest {
            model: "m".into(),
            messages: vec![Message::user("go")],
            tools: vec![md_schema()],
            max_parallel_tool_calls: None,
        };
        let mut args = Arguments::new();
        args.insert("structure_path".into(), json!("/x.pdb"));
        args.insert("temperature".into(), json!(313));
        let calls = (0..30)
            .map(|i| ToolCall::new(format!("c{i}"), "run_md", args.clone()))
            .collect();
        let msg = Message::assistant_with_calls("", calls);
        let out = check_response(&req, msg, Some(24)).unwrap();
        assert_eq!(out.tool_calls.len(), 24);

        let bad =
            Message::assistant_with_calls("", vec![ToolCall::new("z", "nope", Arguments::new())]);
        assert!(matches!(
            check_response(&req, bad, None),
            Err(LlmError::SchemaViolation(_))
        ));
    }
}
