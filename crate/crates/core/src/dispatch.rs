//! The two ways of running tool calls on the executor: a tool node that
//! submits every call of an assistant message as its own task, and an
//! ensemble tool that takes a run count and fans out internally.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::executor::{wait_all, Executor};
use crate::graph::{GraphError, GraphState, Node, NodeOutput, Warning};
use crate::llm::ParamType;
use crate::message::{Role, ToolCall};
use crate::tools::{ExecutionClass, InvocationContext, Registry, ToolDef, ToolResult};

/// Argument a single-run tool call may carry to state how many runs the
/// user asked for in total. Used only for under-provisioning detection.
pub const TOTAL_RUNS_ARG: &str = "total_runs";

pub const NUM_RUNS_ARG: &str = "num_runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchScheme {
    SequentialNode,
    ParallelNode,
    EnsembleFunction,
}

impl DispatchScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            DispatchScheme::SequentialNode => "sequential_node",
            DispatchScheme::ParallelNode => "parallel_node",
            DispatchScheme::EnsembleFunction => "ensemble_function",
        }
    }
}

impl fmt::Display for DispatchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Invocation contexts for a batch: `run_index` counts calls of the same
/// tool, so the k-th `run_md` call gets index k whatever else is in the
/// batch.
pub fn batch_contexts(calls: &[ToolCall], base_seed: u64) -> Vec<InvocationContext> {
    let mut seen: BTreeMap<&str, u64> = BTreeMap::new();
    calls
        .iter()
        .map(|c| {
            let n = seen.entry(c.name.as_str()).or_insert(0);
            let ctx = InvocationContext::new(c.id.clone(), *n, base_seed);
            *n += 1;
            ctx
        })
        .collect()
}

/// One warning per tool whose calls carry a `total_runs` larger than the
/// number of calls emitted for it.
pub fn under_provisioning(calls: &[ToolCall]) -> Vec<Warning> {
    let mut per_tool: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for c in calls {
        let entry = per_tool.entry(c.name.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if let Some(r) = c.arguments.get(TOTAL_RUNS_ARG).and_then(Value::as_u64) {
            entry.0 = entry.0.max(r);
        }
    }
    per_tool
        .into_iter()
        .filter(|(_, (requested, emitted))| requested > emitted)
        .map(|(tool, (requested, emitted))| Warning::UnderProvisioned {
            tool: tool.to_string(),
            requested,
            emitted,
        })
        .collect()
}

enum Mode {
    Sequential,
    Parallel(Arc<Executor>),
}

/// Graph node answering the tool calls of the latest assistant message.
pub struct ToolNode {
    name: String,
    registry: Arc<Registry>,
    mode: Mode,
    base_seed: u64,
}

impl fmt::Debug for ToolNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolNode")
            .field("name", &self.name)
            .field("tools", &self.registry.len())
            .field(
                "mode",
                &match self.mode {
                    Mode::Sequential => "sequential",
                    Mode::Parallel(_) => "parallel",
                },
            )
            .finish()
    }
}

impl ToolNode {
    /// Calls run one at a time in the driver.
    pub fn sequential(name: impl Into<String>, registry: Arc<Registry>, base_seed: u64) -> Self {
        Self {
            name: name.into(),
            registry,
            mode: Mode::Sequential,
            base_seed,
        }
    }

    /// Every call, inline tools included, becomes one executor task.
    pub fn parallel(
        name: impl Into<String>,
        registry: Arc<Registry>,
        executor: Arc<Executor>,
        base_seed: u64,
    ) -> Self {
        Self {
            name: name.into(),
            registry,
            mode: Mode::Parallel(executor),
            base_seed,
        }
    }

    /// The node kind used by `scheme`: parallel for
    /// [`DispatchScheme::ParallelNode`], sequential otherwise.
    pub fn for_scheme(
        scheme: DispatchScheme,
        name: impl Into<String>,
        registry: Arc<Registry>,
        executor: Arc<Executor>,
        base_seed: u64,
    ) -> Self {
        match scheme {
            DispatchScheme::ParallelNode => Self::parallel(name, registry, executor, base_seed),
            _ => Self::sequential(name, registry, base_seed),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Runs `calls` and returns one result per call, in call order.
    pub fn execute(&self, calls: &[ToolCall]) -> Vec<ToolResult> {
        let contexts = batch_contexts(calls, self.base_seed);
        match &self.mode {
            Mode::Sequential => calls
                .iter()
                .zip(&contexts)
                .map(|(c, ctx)| self.registry.validate_and_invoke(c, ctx))
                .collect(),
            Mode::Parallel(executor) => {
                let mut slots: Vec<Option<ToolResult>> = vec![None; calls.len()];
                let mut handles = Vec::with_capacity(calls.len());
                for (i, (call, ctx)) in calls.iter().zip(contexts).enumerate() {
                    let registry = Arc::clone(&self.registry);
                    let call_owned = call.clone();
                    let submitted = executor.submit(call.name.clone(), move || {
                        Ok::<_, String>(registry.validate_and_invoke(&call_owned, &ctx))
                    });
                    match submitted {
                        Ok(h) => handles.push((i, h)),
                        Err(e) => slots[i] = Some(ToolResult::error(&call.id, e.to_string())),
                    }
                }
                let (indices, handles): (Vec<_>, Vec<_>) = handles.into_iter().unzip();
                for (i, outcome) in indices.into_iter().zip(wait_all(handles)) {
                    slots[i] = Some(match outcome {
                        Ok(r) => r,
                        Err(e) => ToolResult::error(&calls[i].id, e.to_string()),
                    });
                }
                slots
                    .into_iter()
                    .map(|s| s.expect("every slot filled"))
                    .collect()
            }
        }
    }

    /// Answers `calls` as tool messages, with under-provisioning warnings.
    pub fn answer(&self, calls: &[ToolCall]) -> NodeOutput {
        let results = self.execute(calls);
        NodeOutput {
            messages: results.iter().map(ToolResult::to_message).collect(),
            warnings: under_provisioning(calls),
        }
    }

    /// Tool calls of the latest message, or a precondition warning.
    pub fn pending_calls<'a>(&self, state: &'a GraphState) -> Result<&'a [ToolCall], Warning> {
        let detail = match state.last_message() {
            Some(m) if m.role == Role::Assistant && m.has_tool_calls() => return Ok(&m.tool_calls),
            Some(m) if m.role == Role::Assistant => "latest assistant message has no tool calls",
            Some(_) => "latest message is not an assistant message",
            None => "no messages",
        };
        Err(Warning::ToolNodePrecondition {
            node: self.name.clone(),
            detail: detail.to_string(),
        })
    }
}

impl Node for ToolNode {
    fn run(&self, state: &GraphState) -> Result<NodeOutput, GraphError> {
        Ok(match self.pending_calls(state) {
            Ok(calls) => self.answer(calls),
            Err(w) => NodeOutput {
                messages: Vec::new(),
                warnings: vec![w],
            },
        })
    }
}

/// Wraps a single-run tool as `{name}_ensemble`, which takes an extra
/// required `num_runs` and submits that many instances to `executor`.
/// Instance `i` gets seed `ctx.seed ^ i` (unless the call fixes `seed`) and
/// run label `run{i:04}`.
pub fn make_ensemble_tool(inner: ToolDef, executor: Arc<Executor>) -> ToolDef {
    let mut schema = inner.schema.clone();
    schema.name = format!("{}_ensemble", inner.schema.name);
    schema.description = format!(
        "{} Runs an ensemble of num_runs independent runs in parallel; call once with the \
         total run count.",
        inner.schema.description
    );
    schema.parameters.remove(TOTAL_RUNS_ARG);
    let schema = schema.param(
        NUM_RUNS_ARG,
        ParamType::Integer,
        "number of independent runs in the ensemble",
        true,
    );
    let inner_name = inner.schema.name.clone();
    ToolDef::new(schema, ExecutionClass::Inline, move |args, ctx| {
        let n = match args.get(NUM_RUNS_ARG).and_then(Value::as_i64) {
            Some(n) if n >= 1 => n as u64,
            _ => return ToolResult::error(&ctx.tool_call_id, "num_runs must be at least 1"),
        };
        let mut inner_args = args.clone();
        inner_args.remove(NUM_RUNS_ARG);
        let mut slots: Vec<Option<ToolResult>> = vec![None; n as usize];
        let mut handles = Vec::with_capacity(n as usize);
        for i in 0..n {
            let run_ctx = InvocationContext {
                tool_call_id: format!("{}#{i}", ctx.tool_call_id),
                run_index: i,
                seed: ctx.seed ^ i,
                run_label: Some(format!("run{i:04}")),
            };
            let inner = inner.clone();
            let a = inner_args.clone();
            let submitted = executor.submit(inner_name.clone(), move || {
                Ok::<_, String>(inner.invoke(&a, &run_ctx))
            });
            match submitted {
                Ok(h) => handles.push((i as usize, h)),
                Err(e) => slots[i as usize] = Some(ToolResult::error("", e.to_string())),
            }
        }
        let (indices, handles): (Vec<_>, Vec<_>) = handles.into_iter().unzip();
        for (i, outcome) in indices.into_iter().zip(wait_all(handles)) {
            slots[i] = Some(outcome.unwrap_or_else(|e| ToolResult::error("", e.to_string())));
        }
        let results: Vec<ToolResult> = slots.into_iter().map(|s| s.expect("filled")).collect();
        summarize_ensemble(ctx, &inner_name, &results)
    })
}

fn summarize_ensemble(ctx: &InvocationContext, inner: &str, results: &[ToolResult]) -> ToolResult {
    let failed = results.iter().filter(|r| !r.is_ok()).count();
    let mut content = format!(
        "Ensemble of {} {inner} runs: {} succeeded, {failed} failed.\n",
        results.len(),
        results.len() - failed
    );
    let mut artifacts = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if r.is_ok() {
            let listed: Vec<String> = r
                .artifacts
                .iter()
                .map(|p| p.display().to_string())
                .collect();
            let _ = writeln!(content, "[run {i}] ok: {}", listed.join(", "));
            artifacts.extend(r.artifacts.iter().cloned());
        } else {
            let _ = writeln!(content, "[run {i}] error: {}", r.content);
        }
    }
    if failed == results.len() {
        ToolResult::error(&ctx.tool_call_id, content)
    } else {
        ToolResult::ok(ctx, content, artifacts)
    }
}
