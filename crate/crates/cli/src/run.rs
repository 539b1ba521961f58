//! `toolflow run`: one workflow run and its output files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use toolflow::executor::Executor;
use toolflow::graph::{GraphState, Warning};
use toolflow::llm::{ChatProvider, HttpProvider, ScriptedProvider};
use toolflow::mdsim::{CostModel, MANIFEST_FILE};
use toolflow::message::{Message, Role};
use toolflow::tools::{
    FixtureCorpus, FixtureStructures, HttpSearch, RcsbStructures, SearchBackend, StructureSource,
};
use toolflow::workflows::{build_workflow, WorkflowEnv, SUPERVISOR};

use crate::config::{EnvOverrides, ProviderConfig, RunConfig, SearchConfig, StructuresConfig};
use crate::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_GUARD: i32 = 2;
pub const EXIT_TRUNCATED: i32 = 3;

pub const MESSAGES_FILE: &str = "messages.json";
pub const WARNINGS_FILE: &str = "warnings.json";
pub const TIMELINE_FILE: &str = "timeline.csv";
pub const RUNS_DIR: &str = "runs";
pub const STRUCTURES_DIR: &str = "structures";

#[derive(Debug)]
pub struct RunReport {
    pub state: GraphState,
    pub output_dir: PathBuf,
    /// Simulation run directories, sorted.
    pub run_dirs: Vec<PathBuf>,
    pub exit_code: i32,
}

impl RunReport {
    /// Last assistant reply that is neither a tool request nor a
    /// supervisor routing token.
    pub fn final_answer(&self) -> Option<&Message> {
        self.state
            .messages
            .iter()
            .rev()
            .find(|m| {
                m.role == Role::Assistant
                    && !m.has_tool_calls()
                    && m.agent_name.as_deref() != Some(SUPERVISOR)
            })
            .or_else(|| self.state.messages.last())
    }
}

/// 2 on a guard violation, 3 on truncation, 0 otherwise.
pub fn exit_code_for(state: &GraphState) -> i32 {
    if state.has_guard_violation() {
        EXIT_GUARD
    } else if state.truncated {
        EXIT_TRUNCATED
    } else {
        EXIT_OK
    }
}

fn provider(cfg: &RunConfig, env: &EnvOverrides) -> Result<Arc<dyn ChatProvider>, CliError> {
    Ok(match &cfg.provider {
        ProviderConfig::Scripted { script_path, .. } => Arc::new(
            ScriptedProvider::from_file(script_path)
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        ProviderConfig::Http { base_url, .. } => {
            let url = base_url
                .as_deref()
                .ok_or_else(|| CliError::Config("provider base_url is not set".into()))?;
            Arc::new(
                HttpProvider::new(url, env.api_key.clone())
                    .map_err(|e| CliError::Config(e.to_string()))?,
            )
        }
    })
}

fn search(cfg: &RunConfig) -> Result<Option<Arc<dyn SearchBackend>>, CliError> {
    let backend: Arc<dyn SearchBackend> = match &cfg.search {
        None => return Ok(None),
        Some(SearchConfig::Fixture { corpus_dir }) => {
            Arc::new(FixtureCorpus::load(corpus_dir).map_err(|e| CliError::Config(e.to_string()))?)
        }
        Some(SearchConfig::Http {
            endpoint,
            api_key_env,
        }) => {
            let key = api_key_env.as_ref().and_then(|k| std::env::var(k).ok());
            Arc::new(HttpSearch::new(endpoint, key).map_err(|e| CliError::Config(e.to_string()))?)
        }
    };
    Ok(Some(backend))
}

fn structures(cfg: &RunConfig) -> Result<Arc<dyn StructureSource>, CliError> {
    Ok(match &cfg.structures {
        StructuresConfig::Fixture { dir } => Arc::new(FixtureStructures::new(dir)),
        StructuresConfig::Rcsb { url_template } => Arc::new(
            match url_template {
                Some(t) => RcsbStructures::with_template(t),
                None => RcsbStructures::new(),
            }
            .map_err(|e| CliError::Config(e.to_string()))?,
        ),
    })
}

/// Run directories under `runs_dir` that hold a manifest, sorted.
pub fn list_run_dirs(runs_dir: &Path) -> Vec<PathBuf> {
    let Ok(entries) = std::fs::read_dir(runs_dir) else {
        return Vec::new();
    };
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    dirs
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs `prompt` through the configured workflow and writes
/// `messages.json`, `warnings.json`, `timeline.csv`, `runs/` and
/// `structures/` under the output directory.
pub fn execute(cfg: &RunConfig, env: &EnvOverrides, prompt: &str) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let runs_dir = out.join(RUNS_DIR);
    let structures_dir = out.join(STRUCTURES_DIR);
    for d in [out, &runs_dir, &structures_dir] {
        std::fs::create_dir_all(d).map_err(|e| CliError::Io(format!("{}: {e}", d.display())))?;
    }
    let executor = Arc::new(
        Executor::start(cfg.resources.clone()).map_err(|e| CliError::Config(e.to_string()))?,
    );
    let wf_env = WorkflowEnv {
        provider: provider(cfg, env)?,
        model: cfg.provider.model().to_string(),
        max_parallel_tool_calls: cfg.provider.max_parallel_tool_calls(),
        executor: Arc::clone(&executor),
        structures: structures(cfg)?,
        search: search(cfg)?,
        structures_dir,
        runs_dir: runs_dir.clone(),
        cost: CostModel::new(cfg.cost_scale),
        seed: cfg.seed,
    };
    let graph =
        build_workflow(&cfg.workflow, &wf_env).map_err(|e| CliError::Config(e.to_string()))?;
    log::info!(
        "running {:?} with scheme {} on {} workers",
        cfg.workflow.workflow,
        cfg.workflow.scheme,
        executor.total_workers()
    );
    let result = graph.run(prompt, cfg.max_iterations);
    executor.shutdown();
    executor
        .export_timeline(&out.join(TIMELINE_FILE))
        .map_err(|e| CliError::Io(e.to_string()))?;
    let state = result.map_err(|e| CliError::Run(e.to_string()))?;
    write_json(&out.join(MESSAGES_FILE), &state.messages)?;
    write_json(&out.join(WARNINGS_FILE), &state.warnings)?;
    for w in &state.warnings {
        match w {
            Warning::GuardViolation { hint, .. } => log::warn!("guard violation: {hint}"),
            Warning::UnderProvisioned {
                tool,
                requested,
                emitted,
            } => log::warn!("{tool}: {emitted} calls emitted for {requested} requested runs"),
            other => log::warn!("{other:?}"),
        }
    }
    if state.truncated {
        log::warn!("run stopped after {} iterations", state.iteration);
    }
    Ok(RunReport {
        exit_code: exit_code_for(&state),
        run_dirs: list_run_dirs(&runs_dir),
        output_dir: out.clone(),
        state,
    })
}

/// Reads `messages.json` back into the message model.
pub fn read_messages(output_dir: &Path) -> Result<Vec<Message>, CliError> {
    let path = output_dir.join(MESSAGES_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_warnings(output_dir: &Path) -> Result<Vec<Warning>, CliError> {
    let path = output_dir.join(WARNINGS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
