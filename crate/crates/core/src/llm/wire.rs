//! OpenAI-compatible chat-completions JSON bodies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LlmError, ParamSpec, ParamType, ProviderRequest, ToolSchema};
use crate::message::{Arguments, Message, Role, ToolCall};

#[derive(Serialize, Deserialize)]
struct WireRequest {
    model: String,
    messages: Vec<WireMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tools: Vec<WireTool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_parallel_tool_calls: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    role: Role,
    #[serde(default)]
    content: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tool_calls: Vec<WireToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WireToolCall {
    id: String,
    #[serde(rename = "type")]
    kind: String,
    function: WireFunctionCall,
}

#[derive(Serialize, Deserialize)]
struct WireFunctionCall {
    name: String,
    /// JSON-encoded argument object.
    arguments: String,
}

#[derive(Serialize, Deserialize)]
struct WireTool {
    #[serde(rename = "type")]
    kind: String,
    function: WireFunctionDef,
}

#[derive(Serialize, Deserialize)]
struct WireFunctionDef {
    name: String,
    #[serde(default)]
    description: String,
    parameters: JsonSchemaObject,
}

#[derive(Serialize, Deserialize)]
struct JsonSchemaObject {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    properties: BTreeMap<String, JsonSchemaProperty>,
    #[serde(default)]
    required: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct JsonSchemaProperty {
    #[serde(rename = "type")]
    kind: ParamType,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

impl From<&Message> for WireMessage {
    fn from(m: &Message) -> Self {
        let tool_calls = m
            .tool_calls
            .iter()
            .map(|c| WireToolCall {
                id: c.id.clone(),
                kind: "function".into(),
                function: WireFunctionCall {
                    name: c.name.clone(),
                    arguments: serde_json::to_string(&c.arguments)
                        .expect("argument maps always serialize"),
                },
            })
            .collect();
        WireMessage {
            role: m.role,
            content: Some(m.content.clone()),
            tool_calls,
            tool_call_id: m.tool_call_id.clone(),
            name: m.agent_name.clone(),
        }
    }
}

impl TryFrom<WireMessage> for Message {
    type Error = LlmError;

    fn try_from(w: WireMessage) -> Result<Self, LlmError> {
        let tool_calls = w
            .tool_calls
            .into_iter()
            .map(|c| {
                let arguments: Arguments = if c.function.arguments.trim().is_empty() {
                    Arguments::new()
                } else {
                    serde_json::from_str(&c.function.arguments).map_err(|e| {
                        LlmError::Decode(format!(
                            "arguments of call {} are not a JSON object: {e}",
                            c.id
                        ))
                    })?
                };
                Ok(ToolCall {
                    id: c.id,
                    name: c.function.name,
                    arguments,
                })
            })
            .collect::<Result<Vec<_>, LlmError>>()?;
        Ok(Message {
            role: w.role,
            content: w.content.unwrap_or_default(),
            tool_calls,
            tool_call_id: w.tool_call_id,
            agent_name: w.name,
        })
    }
}

impl From<&ToolSchema> for WireTool {
    fn from(t: &ToolSchema) -> Self {
        let properties = t
            .parameters
            .iter()
            .map(|(name, p)| {
                (
                    name.clone(),
                    JsonSchemaProperty {
                        kind: p.kind,
                        description: p.description.clone(),
                    },
                )
            })
            .collect();
        let required = t
            .parameters
            .iter()
            .filter(|(_, p)| p.required)
            .map(|(name, _)| name.clone())
            .collect();
        WireTool {
            kind: "function".into(),
            function: WireFunctionDef {
                name: t.name.clone(),
                description: t.description.clone(),
                parameters: JsonSchemaObject {
                    kind: "object".into(),
                    properties,
                    required,
                },
            },
        }
    }
}

impl From<WireTool> for ToolSchema {
    fn from(w: WireTool) -> Self {
        let JsonSchemaObject {
            properties,
            required,
            ..
        } = w.function.parameters;
        let parameters = properties
            .into_iter()
            .map(|(name, p)| {
                let spec = ParamSpec {
                    kind: p.kind,
                    description: p.description,
                    required: required.contains(&name),
                };
                (name, spec)
            })
            .collect();
        ToolSchema {
            name: w.function.name,
            description: w.function.description,
            parameters,
        }
    }
}

/// Serializes a request as a chat-completions body.
pub fn encode_wire(request: &ProviderRequest) -> Vec<u8> {
    let body = WireRequest {
        model: request.model.clone(),
        messages: request.messages.iter().map(WireMessage::from).collect(),
        tools: request.tools.iter().map(WireTool::from).collect(),
        max_parallel_tool_calls: request.max_parallel_tool_calls,
    };
    serde_json::to_vec(&body).expect("wire request always serializes")
}

pub fn decode_wire(bytes: &[u8]) -> Result<ProviderRequest, LlmError> {
    let body: WireRequest =
        serde_json::from_slice(bytes).map_err(|e| LlmError::Decode(e.to_string()))?;
    Ok(ProviderRequest {
        model: body.model,
        messages: body
            .messages
            .into_iter()
            .map(Message::try_from)
            .collect::<Result<_, _>>()?,
        tools: body.tools.into_iter().map(ToolSchema::from).collect(),
        max_parallel_tool_calls: body.max_parallel_tool_calls,
    })
}

/// Extracts the first choice's message from a chat-completions response.
pub fn decode_response(bytes: &[u8]) -> Result<Message, LlmError> {
    let body: WireResponse =
        serde_json::from_slice(bytes).map_err(|e| LlmError::Decode(e.to_string()))?;
    let choice = body
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Decode("response has no choices".into()))?;
    Message::try_from(choice.message)
}
