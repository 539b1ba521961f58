//! The workflow graph: nodes transform a shared [`GraphState`], static or
//! conditional edges pick the successor, and [`Graph::run`] drives the loop
//! until [`END`] or the iteration cap.
//!
//! Nodes never mutate the state directly. They return a [`NodeOutput`] that
//! the driver appends, so the message history can only grow.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{unanswered_calls, Message};

/// Reserved successor name that terminates a run.
pub const END: &str = "__end__";

pub const DEFAULT_MAX_ITERATIONS: u32 = 25;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {0:?} already exists")]
    DuplicateNode(String),
    #[error("{0:?} is reserved")]
    ReservedName(String),
    #[error("invalid graph: {0}")]
    GraphInvalid(String),
    #[error("node {0:?} has no outgoing edge")]
    NoEdge(String),
    #[error("router of {from:?} selected unknown node {target:?}")]
    UnknownNode { from: String, target: String },
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error("run ended with unanswered tool calls: {0:?}")]
    UnansweredToolCalls(Vec<String>),
    #[error("node {node:?} failed: {source}")]
    NodeFailed {
        node: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Structured events surfaced alongside the message history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// More structures were requested than search results were available
    /// to identify them.
    GuardViolation {
        requested: u64,
        search_k: u64,
        hint: String,
    },
    /// Fewer tool calls were emitted than the run count the model itself
    /// put into the call arguments.
    UnderProvisioned {
        tool: String,
        requested: u64,
        emitted: u64,
    },
    ToolNodePrecondition {
        node: String,
        detail: String,
    },
    SupervisorUnparseable {
        content: String,
    },
}

impl Warning {
    pub fn is_guard_violation(&self) -> bool {
        matches!(self, Warning::GuardViolation { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    pub messages: Vec<Message>,
    /// Node scheduled next, or [`END`].
    pub next: String,
    pub iteration: u32,
    pub truncated: bool,
    #[serde(default)]
    pub warnings: Vec<Warning>,
    /// Names of executed nodes, in order.
    #[serde(default)]
    pub trace: Vec<String>,
}

impl GraphState {
    pub fn new(prompt: impl Into<String>, entry: impl Into<String>) -> Self {
        Self {
            messages: vec![Message::user(prompt)],
            next: entry.into(),
            iteration: 0,
            truncated: false,
            warnings: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn last_message(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub fn has_guard_violation(&self) -> bool {
        self.warnings.iter().any(Warning::is_guard_violation)
    }
}

/// What a node contributes to the state.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct NodeOutput {
    pub messages: Vec<Message>,
    pub warnings: Vec<Warning>,
}

impl NodeOutput {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn message(message: Message) -> Self {
        Self {
            messages: vec![message],
            warnings: Vec::new(),
        }
    }
}

pub trait Node: Send + Sync {
    fn run(&self, state: &GraphState) -> Result<NodeOutput, GraphError>;
}

impl<F> Node for F
where
    F: Fn(&GraphState) -> Result<NodeOutput, GraphError> + Send + Sync,
{
    fn run(&self, state: &GraphState) -> Result<NodeOutput, GraphError> {
        self(state)
    }
}

pub type Router = Arc<dyn Fn(&GraphState) -> String + Send + Sync>;

/// Immutable once built; a `Graph` can be shared between concurrent runs.
#[derive(Clone, Default)]
pub struct Graph {
    nodes: BTreeMap<String, Arc<dyn Node>>,
    edges: BTreeMap<String, String>,
    conditional_edges: BTreeMap<String, Router>,
    entry: Option<String>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.keys().collect::<Vec<_>>())
            .field("edges", &self.edges)
            .field(
                "conditional_edges",
                &self.conditional_edges.keys().collect::<Vec<_>>(),
            )
            .field("entry", &self.entry)
            .finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(
        &mut self,
        name: impl Into<String>,
        node: impl Node + 'static,
    ) -> Result<&mut Self, GraphError> {
        let name = name.into();
        if name == END {
            return Err(GraphError::ReservedName(name));
        }
        if self.nodes.contains_key(&name) {
            return Err(GraphError::DuplicateNode(name));
        }
        self.nodes.insert(name, Arc::new(node));
        Ok(self)
    }

    pub fn add_edge(&mut self, from: impl Into<String>, to: impl Into<String>) -> &mut Self {
        self.edges.insert(from.into(), to.into());
        self
    }

    /// Conditional edges take precedence over a static edge on the same node.
    pub fn add_conditional_edge<F>(&mut self, from: impl Into<String>, router: F) -> &mut Self
    where
        F: Fn(&GraphState) -> String + Send + Sync + 'static,
    {
        self.conditional_edges.insert(from.into(), Arc::new(router));
        self
    }

    pub fn set_entry(&mut self, name: impl Into<String>) -> &mut Self {
        self.entry = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn entry(&self) -> Option<&str> {
        self.entry.as_deref()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let entry = self
            .entry
            .as_deref()
            .ok_or_else(|| GraphError::GraphInvalid("no entry node".into()))?;
        if !self.nodes.contains_key(entry) {
            return Err(GraphError::GraphInvalid(format!(
                "entry {entry:?} is not a node"
            )));
        }
        for (from, to) in &self.edges {
            if !self.nodes.contains_key(from) {
                return Err(GraphError::GraphInvalid(format!(
                    "edge source {from:?} is not a node"
                )));
            }
            if to != END && !self.nodes.contains_key(to) {
                return Err(GraphError::GraphInvalid(format!(
                    "edge {from:?} -> {to:?} is dangling"
                )));
            }
        }
        for from in self.conditional_edges.keys() {
            if !self.nodes.contains_key(from) {
                return Err(GraphError::GraphInvalid(format!(
                    "conditional edge source {from:?} is not a node"
                )));
            }
        }
        Ok(())
    }

    /// Selects the successor of `current`.
    pub fn route(&self, state: &GraphState, current: &str) -> Result<String, GraphError> {
        let target = if let Some(router) = self.conditional_edges.get(current) {
            router(state)
        } else if let Some(to) = self.edges.get(current) {
            to.clone()
        } else {
            return Err(GraphError::NoEdge(current.to_string()));
        };
        if target != END && !self.nodes.contains_key(&target) {
            return Err(GraphError::UnknownNode {
                from: current.to_string(),
                target,
            });
        }
        Ok(target)
    }

    /// Runs the graph from its entry node. Hitting `max_iterations` is not an
    /// error: the returned state is flagged `truncated`.
    pub fn run(&self, prompt: &str, max_iterations: u32) -> Result<GraphState, GraphError> {
        if max_iterations == 0 {
            return Err(GraphError::ZeroIterations);
        }
        self.validate()?;
        let entry = self.entry.clone().expect("validated");
        let mut state = GraphState::new(prompt, entry);

        while state.next != END {
            if state.iteration >= max_iterations {
                state.truncated = true;
                log::warn!("run truncated after {} iterations", state.iteration);
                return Ok(state);
            }
            let current = state.next.clone();
            let node = &self.nodes[&current];
            log::debug!("iteration {}: running {current}", state.iteration);
            let output = node.run(&state)?;
            state.messages.extend(output.messages);
            state.warnings.extend(output.warnings);
            state.trace.push(current.clone());
            state.iteration += 1;
            state.next = self.route(&state, &current)?;
        }

        let open = unanswered_calls(&state.messages);
        if !open.is_empty() {
            return Err(GraphError::UnansweredToolCalls(open));
        }
        Ok(state)
    }
}
