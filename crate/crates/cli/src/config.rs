//! The run configuration document (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toolflow::executor::ResourceConfig;
use toolflow::graph::DEFAULT_MAX_ITERATIONS;
use toolflow::workflows::{WorkflowConfig, WorkflowKind};

use crate::CliError;

pub const ENV_API_KEY: &str = "AGENT_API_KEY";
pub const ENV_BASE_URL: &str = "AGENT_BASE_URL";
pub const ENV_FIXTURES: &str = "AGENT_FIXTURES";

/// Values read from the process environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnvOverrides {
    /// Bearer token for the chat provider.
    pub api_key: Option<String>,
    /// Replaces `provider.base_url`.
    pub base_url: Option<String>,
    /// Root against which relative fixture paths resolve.
    pub fixtures: Option<PathBuf>,
}

impl EnvOverrides {
    pub fn from_env() -> Self {
        let var = |k| std::env::var(k).ok().filter(|v: &String| !v.is_empty());
        Self {
            api_key: var(ENV_API_KEY),
            base_url: var(ENV_BASE_URL),
            fixtures: var(ENV_FIXTURES).map(PathBuf::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Scripted {
        script_path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_parallel_tool_calls: Option<u32>,
    },
    Http {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base_url: Option<String>,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_parallel_tool_calls: Option<u32>,
    },
}

impl ProviderConfig {
    pub fn max_parallel_tool_calls(&self) -> Option<u32> {
        match self {
            ProviderConfig::Scripted {
                max_parallel_tool_calls,
                ..
            }
            | ProviderConfig::Http {
                max_parallel_tool_calls,
                ..
            } => *max_parallel_tool_calls,
        }
    }

    pub fn model(&self) -> &str {
        match self {
            ProviderConfig::Scripted { model, .. } => model.as_deref().unwrap_or("scripted"),
            ProviderConfig::Http { model, .. } => model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchConfig {
    /// Directory of JSON search documents.
    Fixture { corpus_dir: PathBuf },
    Http {
        endpoint: String,
        /// Name of the environment variable holding the service's key.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuresConfig {
    /// Directory of `{ID}.pdb` files.
    Fixture { dir: PathBuf },
    Rcsb {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        url_template: Option<String>,
    },
}

impl Default for StructuresConfig {
    fn default() -> Self {
        StructuresConfig::Rcsb { url_template: None }
    }
}

fn default_max_iterations() -> u32 {
    DEFAULT_MAX_ITERATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub resources: ResourceConfig,
    pub workflow: WorkflowConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub structures: StructuresConfig,
    pub output_dir: PathBuf,
    /// Nanoseconds of emulated compute per atom-step; 0 disables it.
    #[serde(default)]
    pub cost_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves and validates the config at `path`. Relative fixture
    /// paths resolve against `env.fixtures` when set, everything else
    /// against the config file's directory.
    pub fn load(path: &Path, env: &EnvOverrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        cfg.resolve_paths(dir, env);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, config_dir: &Path, env: &EnvOverrides) {
        let fixtures = env.fixtures.as_deref().unwrap_or(config_dir);
        if let ProviderConfig::Scripted { script_path, .. } = &mut self.provider {
            *script_path = resolve(fixtures, script_path);
        }
        if let ProviderConfig::Http { base_url, .. } = &mut self.provider {
            if let Some(url) = &env.base_url {
                *base_url = Some(url.clone());
            }
        }
        if let Some(SearchConfig::Fixture { corpus_dir }) = &mut self.search {
            *corpus_dir = resolve(fixtures, corpus_dir);
        }
        if let StructuresConfig::Fixture { dir } = &mut self.structures {
            *dir = resolve(fixtures, dir);
        }
        self.output_dir = resolve(config_dir, &self.output_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        match &self.provider {
            ProviderConfig::Http { base_url: None, .. } => {
                return bad("provider kind http needs base_url (or AGENT_BASE_URL)")
            }
            ProviderConfig::Http { model, .. } if model.is_empty() => {
                return bad("provider kind http needs a model")
            }
            _ => {}
        }
        if self.provider.max_parallel_tool_calls() == Some(0) {
            return bad("max_parallel_tool_calls must be positive");
        }
        self.resources
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.workflow
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.workflow.workflow == WorkflowKind::Wf2 && self.search.is_none() {
            return bad("workflow wf2 needs a search backend");
        }
        if !(self.cost_scale >= 0.0 && self.cost_scale.is_finite()) {
            return bad("cost_scale must be a nonnegative number");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        Ok(())
    }
}
