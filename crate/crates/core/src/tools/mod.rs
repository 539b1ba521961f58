//! Tool registry and the non-simulation tools.

mod rundir;
mod search;
mod structure;

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::ToolSchema;
use crate::message::{Arguments, Message, ToolCall};

pub use rundir::{make_labeled_run_dir, make_run_dir};
pub use search::{
    search_tool, FixtureCorpus, HttpSearch, SearchBackend, SearchDocument, SearchError,
    SearchResult,
};
pub use structure::{
    fetch_structure, fetch_structure_tool, FetchError, FixtureStructures, RcsbStructures,
    StructureSource, RCSB_URL_TEMPLATE,
};

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool {0:?} is already registered")]
    DuplicateTool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionClass {
    /// Runs in the driver even under a parallel tool node's scheme choice.
    Inline,
    Parallel,
}

/// Per-invocation facts a behavior may use besides its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationContext {
    pub tool_call_id: String,
    /// Position of this call among same-named calls of one batch, or the
    /// member index inside an ensemble.
    pub run_index: u64,
    pub seed: u64,
    /// Extra suffix for run directories created by this invocation.
    pub run_label: Option<String>,
}

impl InvocationContext {
    pub fn new(tool_call_id: impl Into<String>, run_index: u64, base_seed: u64) -> Self {
        Self {
            tool_call_id: tool_call_id.into(),
            run_index,
            seed: base_seed ^ run_index,
            run_label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_call_id: String,
    pub status: ToolStatus,
    pub content: String,
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
}

impl ToolResult {
    pub fn ok(
        ctx: &InvocationContext,
        content: impl Into<String>,
        artifacts: Vec<PathBuf>,
    ) -> Self {
        Self {
            tool_call_id: ctx.tool_call_id.clone(),
            status: ToolStatus::Ok,
            content: content.into(),
            artifacts,
        }
    }

    pub fn error(tool_call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: tool_call_id.into(),
            status: ToolStatus::Error,
            content: content.into(),
            artifacts: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }

    pub fn to_message(&self) -> Message {
        let content = match self.status {
            ToolStatus::Ok => self.content.clone(),
            ToolStatus::Error => format!("Error: {}", self.content),
        };
        Message::tool(self.tool_call_id.clone(), content)
    }
}

pub type ToolBehavior = Arc<dyn Fn(&Arguments, &InvocationContext) -> ToolResult + Send + Sync>;

#[derive(Clone)]
pub struct ToolDef {
    pub schema: ToolSchema,
    pub execution_class: ExecutionClass,
    pub behavior: ToolBehavior,
}

impl fmt::Debug for ToolDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolDef")
            .field("name", &self.schema.name)
            .field("execution_class", &self.execution_class)
            .finish_non_exhaustive()
    }
}

impl ToolDef {
    pub fn new<F>(schema: ToolSchema, execution_class: ExecutionClass, behavior: F) -> Self
    where
        F: Fn(&Arguments, &InvocationContext) -> ToolResult + Send + Sync + 'static,
    {
        Self {
            schema,
            execution_class,
            behavior: Arc::new(behavior),
        }
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    /// Runs the behavior, turning a panic or a lying `ok` into an error
    /// result.
    pub fn invoke(&self, args: &Arguments, ctx: &InvocationContext) -> ToolResult {
        let result = match catch_unwind(AssertUnwindSafe(|| (self.behavior)(args, ctx))) {
            Ok(r) => r,
            Err(_) => {
                return ToolResult::error(
                    &ctx.tool_call_id,
                    format!("tool {} panicked", self.schema.name),
                )
            }
        };
        if result.is_ok() {
            if let Some(missing) = result.artifacts.iter().find(|p| !p.exists()) {
                return ToolResult::error(
                    &ctx.tool_call_id,
                    format!("reported artifact {} does not exist", missing.display()),
                );
            }
        }
        result
    }
}

/// Name-keyed tool set. Immutable once a workflow is built.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    tools: BTreeMap<String, ToolDef>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, def: ToolDef) -> Result<&mut Self, ToolError> {
        let name = def.schema.name.clone();
        if self.tools.contains_key(&name) {
            return Err(ToolError::DuplicateTool(name));
        }
        self.tools.insert(name, def);
        Ok(self)
    }

    pub fn lookup(&self, name: &str) -> Option<&ToolDef> {
        self.tools.get(name)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn schemas(&self) -> Vec<ToolSchema> {
        self.tools.values().map(|t| t.schema.clone()).collect()
    }

    /// Never fails: unknown tools and schema violations come back as error
    /// results carrying the call's id.
    pub fn validate_and_invoke(&self, call: &ToolCall, ctx: &InvocationContext) -> ToolResult {
        let Some(def) = self.lookup(&call.name) else {
            return ToolResult::error(&call.id, format!("unknown tool {:?}", call.name));
        };
        if let Err(e) = def.schema.check_arguments(&call.arguments) {
            return ToolResult::error(&call.id, format!("{}: {e}", call.name));
        }
        let mut result = def.invoke(&call.arguments, ctx);
        result.tool_call_id = call.id.clone();
        result
    }
}
