//! Bundled offline scenarios replaying the five experiment prompts, plus a
//! few variants that exercise the guard, the tool-call cap and scheme
//! equivalence.

use std::path::{Path, PathBuf};

use toolflow::dispatch::DispatchScheme;
use toolflow::executor::ResourceConfig;
use toolflow::workflows::{WorkflowConfig, WorkflowKind};

use crate::config::{EnvOverrides, ProviderConfig, RunConfig, SearchConfig, StructuresConfig};
use crate::run::{execute, RunReport};
use crate::CliError;

/// Replaced in prompt templates by the absolute path of a local copy of
/// the scenario's input structure.
pub const PDB_PATH_PLACEHOLDER: &str = "{PDB_PATH}";

const SAMPLE_INTERVAL_MS: f64 = 100.0;
const SEED: u64 = 20_240_901;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    /// Experiment row this scenario replays.
    pub run: u8,
    pub platform: &'static str,
    pub summary: &'static str,
    pub prompt_file: &'static str,
    pub script_file: &'static str,
    /// Structure copied next to the outputs and substituted for
    /// [`PDB_PATH_PLACEHOLDER`].
    pub local_structure: Option<&'static str>,
    pub workflow: WorkflowConfig,
    pub resources: ResourceConfig,
    pub max_parallel_tool_calls: Option<u32>,
    pub cost_scale: f64,
    pub expected_simulations: usize,
    pub expected_exit: i32,
    /// One of the five primary scenarios rather than a variant.
    pub primary: bool,
}

fn local(workers: u32) -> ResourceConfig {
    ResourceConfig {
        sample_interval_ms: SAMPLE_INTERVAL_MS,
        ..ResourceConfig::local(workers)
    }
}

fn batch(nodes: u32, per_node: u32, delay_ms: f64) -> ResourceConfig {
    ResourceConfig {
        sample_interval_ms: SAMPLE_INTERVAL_MS,
        ..ResourceConfig::simulated_batch(nodes, per_node, delay_ms)
    }
}

fn wf(kind: WorkflowKind, scheme: DispatchScheme, search_k: usize) -> WorkflowConfig {
    WorkflowConfig {
        search_k,
        ..WorkflowConfig::new(kind, scheme)
    }
}

pub fn all() -> Vec<Scenario> {
    use DispatchScheme::*;
    use WorkflowKind::*;
    let base = Scenario {
        name: "",
        run: 0,
        platform: "workstation",
        summary: "",
        prompt_file: "",
        script_file: "",
        local_structure: None,
        workflow: wf(Wf1, ParallelNode, 5),
        resources: local(4),
        max_parallel_tool_calls: None,
        cost_scale: 0.02,
        expected_simulations: 8,
        expected_exit: 0,
        primary: true,
    };
    vec![
        Scenario {
            name: "scenario-1",
            run: 1,
            summary: "8 simulations of a local PDB file; workflow 1, parallel tool node, 4 workers",
            prompt_file: "prompts/run1.txt",
            script_file: "scripts/run1.json",
            local_structure: Some("local/2kkj.pdb"),
            ..base.clone()
        },
        Scenario {
            name: "scenario-2",
            run: 2,
            summary: "download 2KKJ, 8 simulations; workflow 1, parallel tool node, 4 workers",
            prompt_file: "prompts/run2.txt",
            script_file: "scripts/run2.json",
            ..base.clone()
        },
        Scenario {
            name: "scenario-3",
            run: 3,
            summary: "NCBD/ACTR by name, researcher finds 1KBH, 8 simulations; workflow 2, 8 workers",
            prompt_file: "prompts/run3.txt",
            script_file: "scripts/run3.json",
            workflow: wf(Wf2, ParallelNode, 5),
            resources: local(8),
            ..base.clone()
        },
        Scenario {
            name: "scenario-4",
            run: 4,
            summary: "8 lysozyme structures with 10 search results (1LYZ-8LYZ); workflow 2, 8 workers",
            prompt_file: "prompts/run4.txt",
            script_file: "scripts/run4.json",
            workflow: wf(Wf2, ParallelNode, 10),
            resources: local(8),
            ..base.clone()
        },
        Scenario {
            name: "scenario-5",
            run: 5,
            platform: "simulated batch, 25 nodes x 4 workers",
            summary: "download 2KKJ, ensemble of 100 simulations; workflow 1, ensemble tool, 2 s queue delay",
            prompt_file: "prompts/run5.txt",
            script_file: "scripts/run5_ensemble.json",
            workflow: wf(Wf1, EnsembleFunction, 5),
            resources: batch(25, 4, 2000.0),
            expected_simulations: 100,
            ..base.clone()
        },
        Scenario {
            name: "scenario-4-k5",
            run: 4,
            summary: "run 4 with only 5 search results: the requested-structures guard stops the run",
            prompt_file: "prompts/run4.txt",
            script_file: "scripts/run4.json",
            workflow: wf(Wf2, ParallelNode, 5),
            resources: local(8),
            expected_simulations: 0,
            expected_exit: 2,
            primary: false,
            ..base.clone()
        },
        Scenario {
            name: "scenario-cap",
            run: 5,
            platform: "simulated batch, 25 nodes x 4 workers",
            summary: "run 5 through the parallel tool node with a 24-call cap: 24 of 100 runs, flagged",
            prompt_file: "prompts/run5.txt",
            script_file: "scripts/run5_node.json",
            resources: batch(25, 4, 0.0),
            max_parallel_tool_calls: Some(24),
            expected_simulations: 24,
            primary: false,
            ..base.clone()
        },
        Scenario {
            name: "scenario-2-ensemble",
            run: 2,
            summary: "run 2 through the ensemble tool instead of the parallel tool node",
            prompt_file: "prompts/run2.txt",
            script_file: "scripts/run2_ensemble.json",
            workflow: wf(Wf1, EnsembleFunction, 5),
            primary: false,
            ..base
        },
    ]
}

pub fn find(name: &str) -> Result<Scenario, CliError> {
    all()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| CliError::UnknownScenario(name.to_string()))
}

/// `AGENT_FIXTURES` if set, else the fixtures shipped with this crate.
pub fn fixtures_root(env: &EnvOverrides) -> PathBuf {
    env.fixtures
        .clone()
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"))
}

impl Scenario {
    pub fn config(&self, fixtures: &Path, output_dir: &Path) -> RunConfig {
        RunConfig {
            provider: ProviderConfig::Scripted {
                script_path: fixtures.join(self.script_file),
                model: None,
                max_parallel_tool_calls: self.max_parallel_tool_calls,
            },
            resources: self.resources.clone(),
            workflow: self.workflow.clone(),
            search: (self.workflow.workflow == WorkflowKind::Wf2).then(|| SearchConfig::Fixture {
                corpus_dir: fixtures.join("corpus"),
            }),
            structures: StructuresConfig::Fixture {
                dir: fixtures.join("structures"),
            },
            output_dir: output_dir.to_path_buf(),
            cost_scale: self.cost_scale,
            seed: SEED,
            max_iterations: toolflow::graph::DEFAULT_MAX_ITERATIONS,
        }
    }

    /// Writes `config.json` and `prompt.txt` into `output_dir` (plus the
    /// local input structure, if any) and returns the config and prompt.
    pub fn prepare(
        &self,
        fixtures: &Path,
        output_dir: &Path,
    ) -> Result<(RunConfig, String), CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(output_dir).map_err(|e| io(output_dir, e))?;
        let output_dir = std::fs::canonicalize(output_dir).map_err(|e| io(output_dir, e))?;
        let prompt_path = fixtures.join(self.prompt_file);
        let mut prompt = std::fs::read_to_string(&prompt_path).map_err(|e| io(&prompt_path, e))?;
        prompt = prompt.trim_end().to_string();
        if let Some(rel) = self.local_structure {
            let src = fixtures.join(rel);
            let input_dir = output_dir.join("input");
            std::fs::create_dir_all(&input_dir).map_err(|e| io(&input_dir, e))?;
            let dest = input_dir.join(src.file_name().unwrap_or_default());
            std::fs::copy(&src, &dest).map_err(|e| io(&src, e))?;
            prompt = prompt.replace(PDB_PATH_PLACEHOLDER, &dest.display().to_string());
        }
        let cfg = self.config(fixtures, &output_dir);
        let json = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
        let cfg_path = output_dir.join("config.json");
        std::fs::write(&cfg_path, json + "\n").map_err(|e| io(&cfg_path, e))?;
        let prompt_out = output_dir.join("prompt.txt");
        std::fs::write(&prompt_out, format!("{prompt}\n")).map_err(|e| io(&prompt_out, e))?;
        Ok((cfg, prompt))
    }

    pub fn run(&self, env: &EnvOverrides, output_dir: &Path) -> Result<RunReport, CliError> {
        let (cfg, prompt) = self.prepare(&fixtures_root(env), output_dir)?;
        execute(&cfg, env, &prompt)
    }

    pub fn prompt_text(&self, env: &EnvOverrides) -> String {
        std::fs::read_to_string(fixtures_root(env).join(self.prompt_file))
            .map(|s| s.trim_end().to_string())
            .unwrap_or_default()
    }
}
