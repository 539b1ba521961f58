//! Prebuilt graphs: a single simulator agent with a tool node (workflow 1),
//! and a supervisor routing between a researcher and a simulator
//! (workflow 2).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dispatch::{make_ensemble_tool, DispatchScheme, ToolNode};
use crate::executor::Executor;
use crate::graph::{Graph, GraphError, GraphState, Node, NodeOutput, Warning, END};
use crate::llm::{ChatProvider, ProviderRequest, ToolSchema};
use crate::mdsim::{run_md_tool, CostModel};
use crate::message::{Message, Role, ToolCall};
use crate::tools::{
    fetch_structure_tool, search_tool, Registry, SearchBackend, StructureSource, ToolError,
    ToolResult,
};

pub const PROMPT_VERSION: &str = "v1";
pub const SUPERVISOR_PROMPT: &str = include_str!("../prompts/v1/supervisor.txt");
pub const RESEARCHER_PROMPT: &str = include_str!("../prompts/v1/researcher.txt");
pub const SIMULATOR_PROMPT: &str = include_str!("../prompts/v1/simulator.txt");

pub const SUPERVISOR: &str = "supervisor";
pub const RESEARCHER: &str = "researcher";
pub const SIMULATOR: &str = "simulator";
pub const RESEARCH_TOOLS: &str = "research_tools";
pub const SIMULATOR_TOOLS: &str = "simulator_tools";
/// Tool node of workflow 1.
pub const TOOLS: &str = "tools";

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("invalid workflow configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkflowKind {
    Wf1,
    Wf2,
}

fn default_search_k() -> usize {
    5
}
fn default_guard() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub workflow: WorkflowKind,
    pub scheme: DispatchScheme,
    #[serde(default = "default_search_k")]
    pub search_k: usize,
    #[serde(default = "default_guard")]
    pub requested_structures_guard: bool,
}

impl WorkflowConfig {
    pub fn new(workflow: WorkflowKind, scheme: DispatchScheme) -> Self {
        Self {
            workflow,
            scheme,
            search_k: default_search_k(),
            requested_structures_guard: default_guard(),
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.search_k == 0 {
            return Err(WorkflowError::ConfigInvalid(
                "search_k must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a workflow's nodes and tools are wired to.
#[derive(Clone)]
pub struct WorkflowEnv {
    pub provider: Arc<dyn ChatProvider>,
    pub model: String,
    pub max_parallel_tool_calls: Option<u32>,
    pub executor: Arc<Executor>,
    pub structures: Arc<dyn StructureSource>,
    pub search: Option<Arc<dyn SearchBackend>>,
    /// Downloaded structures land here.
    pub structures_dir: PathBuf,
    /// Parent of all simulation run directories.
    pub runs_dir: PathBuf,
    pub cost: CostModel,
    pub seed: u64,
}

impl fmt::Debug for WorkflowEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorkflowEnv")
            .field("model", &self.model)
            .field("max_parallel_tool_calls", &self.max_parallel_tool_calls)
            .field("structures", &self.structures)
            .field("search", &self.search)
            .field("structures_dir", &self.structures_dir)
            .field("runs_dir", &self.runs_dir)
            .field("cost", &self.cost)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

/// An LLM agent: sends its system prompt plus the shared history to the
/// provider and appends the reply, tagged with its name.
pub struct AgentNode {
    name: String,
    system_prompt: String,
    provider: Arc<dyn ChatProvider>,
    tools: Vec<ToolSchema>,
    model: String,
    max_parallel_tool_calls: Option<u32>,
}

impl fmt::Debug for AgentNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentNode")
            .field("name", &self.name)
            .field(
                "tools",
                &self.tools.iter().map(|t| &t.name).collect::<Vec<_>>(),
            )
            .finish_non_exhaustive()
    }
}

impl AgentNode {
    pub fn new(
        name: impl Into<String>,
        system_prompt: impl Into<String>,
        env: &WorkflowEnv,
        tools: Vec<ToolSchema>,
    ) -> Self {
        Self {
            name: name.into(),
            system_prompt: system_prompt.into(),
            provider: Arc::clone(&env.provider),
            tools,
            model: env.model.clone(),
            max_parallel_tool_calls: env.max_parallel_tool_calls,
        }
    }

    pub fn request(&self, state: &GraphState) -> ProviderRequest {
        let mut messages = Vec::with_capacity(state.messages.len() + 1);
        messages.push(Message::system(self.system_prompt.clone()).with_agent(self.name.clone()));
        messages.extend(state.messages.iter().cloned());
        ProviderRequest {
            model: self.model.clone(),
            messages,
            tools: self.tools.clone(),
            max_parallel_tool_calls: self.max_parallel_tool_calls,
        }
    }

    fn reply(&self, state: &GraphState) -> Result<Message, GraphError> {
        let reply =
            self.provider
                .complete(&self.request(state))
                .map_err(|e| GraphError::NodeFailed {
                    node: self.name.clone(),
                    source: Box::new(e),
                })?;
        Ok(reply.with_agent(self.name.clone()))
    }
}

impl Node for AgentNode {
    fn run(&self, state: &GraphState) -> Result<NodeOutput, GraphError> {
        self.reply(state).map(NodeOutput::message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupervisorDecision {
    Researcher,
    Simulator,
    Finish,
}

impl SupervisorDecision {
    fn target(self) -> &'static str {
        match self {
            SupervisorDecision::Researcher => RESEARCHER,
            SupervisorDecision::Simulator => SIMULATOR,
            SupervisorDecision::Finish => END,
        }
    }
}

/// The decision token in a supervisor reply, if exactly one of RESEARCHER,
/// SIMULATOR and FINISH occurs in it as a word.
pub fn parse_decision(content: &str) -> Option<SupervisorDecision> {
    let words: BTreeSet<&str> = content
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    let found: Vec<SupervisorDecision> = [
        ("RESEARCHER", SupervisorDecision::Researcher),
        ("SIMULATOR", SupervisorDecision::Simulator),
        ("FINISH", SupervisorDecision::Finish),
    ]
    .into_iter()
    .filter(|(token, _)| words.contains(token))
    .map(|(_, d)| d)
    .collect();
    match found.as_slice() {
        [d] => Some(*d),
        _ => None,
    }
}

struct SupervisorNode(AgentNode);

impl Node for SupervisorNode {
    fn run(&self, state: &GraphState) -> Result<NodeOutput, GraphError> {
        let reply = self.0.reply(state)?;
        let mut out = NodeOutput::empty();
        if reply.has_tool_calls() || parse_decision(&reply.content).is_none() {
            out.warnings.push(Warning::SupervisorUnparseable {
                content: reply.content.clone(),
            });
        }
        out.messages.push(reply);
        Ok(out)
    }
}

fn route_supervisor(state: &GraphState) -> String {
    state
        .last_message()
        .filter(|m| m.role == Role::Assistant && !m.has_tool_calls())
        .and_then(|m| parse_decision(&m.content))
        .map_or(END, SupervisorDecision::target)
        .to_string()
}

/// `Ok` iff `search_k > requested`: identifying `requested` structures
/// needs more search results than structures.
pub fn guard_requested_count(requested: u64, search_k: u64) -> Result<(), Warning> {
    if search_k > requested {
        return Ok(());
    }
    Err(Warning::GuardViolation {
        requested,
        search_k,
        hint: format!(
            "{requested} structures were requested but the search returns only {search_k} \
             results; set search_k to at least {} so every structure can be identified",
            requested + 1
        ),
    })
}

/// Distinct structures named by a batch of simulator tool calls: the
/// `pdb_id` of downloads and the file stem of `structure_path` arguments,
/// upper-cased.
pub fn requested_structures(calls: &[ToolCall]) -> BTreeSet<String> {
    calls
        .iter()
        .filter_map(|c| {
            if let Some(id) = c.arguments.get("pdb_id").and_then(Value::as_str) {
                return Some(id.trim().to_ascii_uppercase());
            }
            let path = c.arguments.get("structure_path").and_then(Value::as_str)?;
            Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().to_ascii_uppercase())
        })
        .collect()
}

/// Simulator tool node of workflow 2. With the guard on, a batch naming at
/// least `search_k` structures is refused: every call is answered with an
/// error and a guard-violation warning is raised.
struct GuardedToolNode {
    inner: ToolNode,
    search_k: Option<u64>,
}

impl Node for GuardedToolNode {
    fn run(&self, state: &GraphState) -> Result<NodeOutput, GraphError> {
        let calls = match self.inner.pending_calls(state) {
            Ok(c) => c,
            Err(w) => {
                return Ok(NodeOutput {
                    messages: Vec::new(),
                    warnings: vec![w],
                })
            }
        };
        if let Some(k) = self.search_k {
            let requested = requested_structures(calls).len() as u64;
            if let Err(violation) = guard_requested_count(requested, k) {
                let Warning::GuardViolation { hint, .. } = &violation else {
                    unreachable!()
                };
                let text = format!("blocked by the requested-structures guard: {hint}");
                return Ok(NodeOutput {
                    messages: calls
                        .iter()
                        .map(|c| ToolResult::error(&c.id, text.clone()).to_message())
                        .collect(),
                    warnings: vec![violation],
                });
            }
        }
        Ok(self.inner.answer(calls))
    }
}

fn simulator_registry(
    scheme: DispatchScheme,
    env: &WorkflowEnv,
) -> Result<Arc<Registry>, WorkflowError> {
    let mut registry = Registry::new();
    registry.register(fetch_structure_tool(
        Arc::clone(&env.structures),
        env.structures_dir.clone(),
    ))?;
    let run_md = run_md_tool(env.runs_dir.clone(), env.cost);
    match scheme {
        DispatchScheme::EnsembleFunction => {
            registry.register(make_ensemble_tool(run_md, Arc::clone(&env.executor)))?
        }
        _ => registry.register(run_md)?,
    };
    Ok(Arc::new(registry))
}

fn has_tool_calls(state: &GraphState) -> bool {
    state.last_message().is_some_and(Message::has_tool_calls)
}

pub fn build_workflow1(cfg: &WorkflowConfig, env: &WorkflowEnv) -> Result<Graph, WorkflowError> {
    if cfg.workflow != WorkflowKind::Wf1 {
        return Err(WorkflowError::ConfigInvalid(
            "build_workflow1 needs workflow wf1".into(),
        ));
    }
    cfg.validate()?;
    let registry = simulator_registry(cfg.scheme, env)?;
    let agent = AgentNode::new(SIMULATOR, SIMULATOR_PROMPT, env, registry.schemas());
    let tools = ToolNode::for_scheme(
        cfg.scheme,
        TOOLS,
        registry,
        Arc::clone(&env.executor),
        env.seed,
    );
    let mut g = Graph::new();
    g.add_node(SIMULATOR, agent)?.add_node(TOOLS, tools)?;
    g.set_entry(SIMULATOR)
        .add_conditional_edge(SIMULATOR, |s: &GraphState| {
            if has_tool_calls(s) { TOOLS } else { END }.to_string()
        })
        .add_edge(TOOLS, SIMULATOR);
    g.validate()?;
    Ok(g)
}

pub fn build_workflow2(cfg: &WorkflowConfig, env: &WorkflowEnv) -> Result<Graph, WorkflowError> {
    if cfg.workflow != WorkflowKind::Wf2 {
        return Err(WorkflowError::ConfigInvalid(
            "build_workflow2 needs workflow wf2".into(),
        ));
    }
    cfg.validate()?;
    let Some(search) = &env.search else {
        return Err(WorkflowError::ConfigInvalid(
            "workflow wf2 needs a search backend".into(),
        ));
    };
    let mut research = Registry::new();
    research.register(search_tool(Arc::clone(search), cfg.search_k))?;
    let research = Arc::new(research);
    let sim = simulator_registry(cfg.scheme, env)?;

    let supervisor = SupervisorNode(AgentNode::new(
        SUPERVISOR,
        SUPERVISOR_PROMPT,
        env,
        Vec::new(),
    ));
    let researcher = AgentNode::new(RESEARCHER, RESEARCHER_PROMPT, env, research.schemas());
    let simulator = AgentNode::new(SIMULATOR, SIMULATOR_PROMPT, env, sim.schemas());
    let research_tools = ToolNode::for_scheme(
        cfg.scheme,
        RESEARCH_TOOLS,
        research,
        Arc::clone(&env.executor),
        env.seed,
    );
    let simulator_tools = GuardedToolNode {
        inner: ToolNode::for_scheme(
            cfg.scheme,
            SIMULATOR_TOOLS,
            sim,
            Arc::clone(&env.executor),
            env.seed,
        ),
        search_k: cfg
            .requested_structures_guard
            .then_some(cfg.search_k as u64),
    };

    let mut g = Graph::new();
    g.add_node(SUPERVISOR, supervisor)?
        .add_node(RESEARCHER, researcher)?
        .add_node(RESEARCH_TOOLS, research_tools)?
        .add_node(SIMULATOR, simulator)?
        .add_node(SIMULATOR_TOOLS, simulator_tools)?;
    g.set_entry(SUPERVISOR)
        .add_conditional_edge(SUPERVISOR, route_supervisor)
        .add_conditional_edge(RESEARCHER, |s: &GraphState| {
            if has_tool_calls(s) {
                RESEARCH_TOOLS
            } else {
                SUPERVISOR
            }
            .to_string()
        })
        .add_edge(RESEARCH_TOOLS, RESEARCHER)
        .add_conditional_edge(SIMULATOR, |s: &GraphState| {
            if has_tool_calls(s) {
                SIMULATOR_TOOLS
            } else {
                SUPERVISOR
            }
            .to_string()
        })
        .add_conditional_edge(SIMULATOR_TOOLS, |s: &GraphState| {
            if s.has_guard_violation() {
                END
            } else {
                SIMULATOR
            }
            .to_string()
        });
    g.validate()?;
    Ok(g)
}

pub fn build_workflow(cfg: &WorkflowConfig, env: &WorkflowEnv) -> Result<Graph, WorkflowError> {
    match cfg.workflow {
        WorkflowKind::Wf1 => build_workflow1(cfg, env),
        WorkflowKind::Wf2 => build_workflow2(cfg, env),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::Arguments;
    use serde_json::json;

    #[test]
    fn decisions() {
        assert_eq!(
            parse_decision("RESEARCHER"),
            Some(SupervisorDecision::Researcher)
        );
        assert_eq!(
            parse_decision(" SIMULATOR.\n"),
            Some(SupervisorDecision::Simulator)
        );
        assert_eq!(parse_decision("FINISH"), Some(SupervisorDecision::Finish));
        assert_eq!(parse_decision("RESEARCHER then SIMULATOR"), None);
        assert_eq!(parse_decision("researcher"), None);
        assert_eq!(parse_decision("RESEARCHERS"), None);
        assert_eq!(parse_decision(""), None);
    }

    #[test]
    fn guard_examples() {
        assert!(guard_requested_count(8, 5)
            .unwrap_err()
            .is_guard_violation());
        assert!(guard_requested_count(8, 8).is_err());
        assert!(guard_requested_count(8, 10).is_ok());
        assert!(guard_requested_count(1, 2).is_ok());
    }

    #[test]
    fn requested_structures_from_arguments() {
        let call = |name: &str, v: serde_json::Value| {
            ToolCall::new("c", name, serde_json::from_value::<Arguments>(v).unwrap())
        };
        let calls = vec![
            call("fetch_structure", json!({"pdb_id": "1lyz"})),
            call("fetch_structure", json!({"pdb_id": "2LYZ"})),
            call("run_md", json!({"structure_path": "/s/1LYZ.pdb"})),
            call("run_md", json!({"structure_path": "/s/3LYZ.pdb"})),
            call("search", json!({"query": "x"})),
        ];
        let got: Vec<String> = requested_structures(&calls).into_iter().collect();
        assert_eq!(got, ["1LYZ", "2LYZ", "3LYZ"]);
    }

    #[test]
    fn prompts_name_supervisor_tokens() {
        for token in ["RESEARCHER", "SIMULATOR", "FINISH"] {
            assert!(SUPERVISOR_PROMPT.contains(token));
        }
        assert!(SIMULATOR_PROMPT.contains("total_runs"));
    }
}
