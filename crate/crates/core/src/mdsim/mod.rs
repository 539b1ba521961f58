//! Toy molecular-dynamics workload.
//!
//! This is a stand-in for a real MD engine, kept faithful to what matters
//! for scheduling: the tool's argument surface (structure, temperature,
//! length, timestep), per-run provenance in a fresh run directory, and a
//! cost that grows with atom count and step count.
//!
//! **Units are reduced, not physical.** The temperature argument is used
//! verbatim as the reduced temperature (k_B = 1), so "313 K" means T = 313.
//! One femtosecond of requested timestep maps to [`REDUCED_TIME_PER_FS`]
//! reduced time units, and friction in 1/ps is converted accordingly. The
//! structure only contributes its atom count: the simulated system is a
//! 1-D harmonic chain with one particle per atom, capped at
//! [`MAX_PARTICLES`]. The optional [`CostModel`] sleep always uses the full
//! atom count, so load-imbalance ratios between structures are preserved.

mod chain;
mod pdb;

use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ParamType, ToolSchema};
use crate::message::Arguments;
use crate::tools::{make_labeled_run_dir, ExecutionClass, InvocationContext, ToolDef, ToolResult};

pub use chain::HarmonicChain;
pub use pdb::{parse_structure, StructureInfo};

pub const MAX_PARTICLES: u64 = 10_000;
pub const REDUCED_TIME_PER_FS: f64 = 0.01;
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0} contains no ATOM/HETATM records")]
    EmptyStructure(PathBuf),
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("filesystem error: {0}")]
    Filesystem(#[from] io::Error),
}

fn default_timestep() -> f64 {
    2.0
}
fn default_friction() -> f64 {
    1.0
}
fn default_report_interval() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub structure_path: PathBuf,
    pub temperature: f64,
    pub length_ps: f64,
    #[serde(default = "default_timestep")]
    pub timestep_fs: f64,
    #[serde(default = "default_friction")]
    pub friction_per_ps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_report_interval")]
    pub report_interval_steps: u64,
}

impl SimulationSpec {
    pub fn new(structure_path: impl Into<PathBuf>, temperature: f64, length_ps: f64) -> Self {
        Self {
            structure_path: structure_path.into(),
            temperature,
            length_ps,
            timestep_fs: default_timestep(),
            friction_per_ps: default_friction(),
            seed: 0,
            report_interval_steps: default_report_interval(),
        }
    }

    /// `round(length_ps * 1000 / timestep_fs)`
    pub fn steps(&self) -> u64 {
        (self.length_ps * 1000.0 / self.timestep_fs).round() as u64
    }

    pub fn frames(&self) -> u64 {
        self.steps() / self.report_interval_steps
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if !positive(self.temperature) {
            return bad("temperature must be positive");
        }
        if !positive(self.length_ps) {
            return bad("length_ps must be positive");
        }
        if !positive(self.timestep_fs) {
            return bad("timestep_fs must be positive");
        }
        if !(self.friction_per_ps >= 0.0 && self.friction_per_ps.is_finite()) {
            return bad("friction_per_ps must be nonnegative");
        }
        if self.report_interval_steps == 0 {
            return bad("report_interval_steps must be positive");
        }
        if self.steps() == 0 {
            return bad("length_ps / timestep_fs rounds to zero steps");
        }
        Ok(())
    }

    /// Builds a spec from `run_md` tool arguments; `seed` falls back to
    /// `default_seed` when the call does not set one.
    pub fn from_arguments(args: &Arguments, default_seed: u64) -> Result<Self, SimError> {
        let num = |k: &str| args.get(k).and_then(Value::as_f64);
        let int = |k: &str| {
            args.get(k)
                .and_then(|v| v.as_u64().or_else(|| v.as_f64().map(|f| f as u64)))
        };
        let path = args
            .get("structure_path")
            .and_then(Value::as_str)
            .ok_or_else(|| SimError::InvalidSpec("structure_path is required".into()))?;
        let mut spec = SimulationSpec::new(
            path,
            num("temperature")
                .ok_or_else(|| SimError::InvalidSpec("temperature is required".into()))?,
            num("length_ps")
                .ok_or_else(|| SimError::InvalidSpec("length_ps is required".into()))?,
        );
        if let Some(v) = num("timestep_fs") {
            spec.timestep_fs = v;
        }
        if let Some(v) = num("friction_per_ps") {
            spec.friction_per_ps = v;
        }
        if let Some(v) = int("report_interval_steps") {
            spec.report_interval_steps = v;
        }
        spec.seed = int("seed").unwrap_or(default_seed);
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub run_dir: PathBuf,
    pub trajectory_path: PathBuf,
    pub steps: u64,
    pub frames: u64,
    pub atom_count: u64,
    pub wall_ms: f64,
    pub mean_kinetic_per_dof: f64,
    pub status: SimStatus,
}

/// Contents of `manifest.json` in each run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: SimulationSpec,
    pub atom_count: u64,
    pub particles: u64,
    pub steps: u64,
    pub frames: u64,
    pub mean_kinetic_per_dof: f64,
    pub status: SimStatus,
    pub wall_ms: f64,
    pub run_dir: PathBuf,
    pub trajectory_path: PathBuf,
}

impl RunManifest {
    /// The manifest with wall time and paths of the run directory blanked,
    /// for comparing runs by content.
    pub fn content_key(&self) -> Self {
        Self {
            wall_ms: 0.0,
            run_dir: PathBuf::new(),
            trajectory_path: PathBuf::new(),
            ..self.clone()
        }
    }
}

/// Emulated compute cost, `scale_ns * atom_count * steps`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Nanoseconds per atom-step. Zero disables the sleep.
    pub scale_ns: f64,
}

impl CostModel {
    pub fn new(scale_ns: f64) -> Self {
        Self { scale_ns }
    }

    pub fn duration(&self, atom_count: u64, steps: u64) -> Duration {
        Duration::from_secs_f64(self.scale_ns.max(0.0) * atom_count as f64 * steps as f64 * 1e-9)
    }
}

/// Per-run options that are not part of the physical spec.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cost: CostModel,
    pub run_label: Option<String>,
}

/// Runs one simulation in a fresh run directory under `base_dir`, writing
/// `trajectory.csv` (step, potential, kinetic every report interval) and
/// `manifest.json`.
pub fn run_simulation(
    spec: &SimulationSpec,
    base_dir: &Path,
    opts: &RunOptions,
) -> Result<SimResult, SimError> {
    let started = Instant::now();
    spec.validate()?;
    let info = parse_structure(&spec.structure_path)?;
    let steps = spec.steps();
    let run_dir = make_labeled_run_dir(base_dir, opts.run_label.as_deref())?;

    let modeled = opts.cost.duration(info.atom_count, steps);
    if !modeled.is_zero() {
        std::thread::sleep(modeled);
    }

    let particles = info.atom_count.min(MAX_PARTICLES);
    let dt = spec.timestep_fs * REDUCED_TIME_PER_FS;
    let friction = spec.friction_per_ps / (1000.0 * REDUCED_TIME_PER_FS);
    let mut chain = HarmonicChain::new(
        particles as usize,
        spec.temperature,
        friction,
        dt,
        spec.seed,
    );

    let trajectory_path = run_dir.join(TRAJECTORY_FILE);
    let mut out = BufWriter::new(std::fs::File::create(&trajectory_path)?);
    writeln!(out, "step,potential,kinetic")?;
    let half = steps / 2;
    let mut ke_sum = 0.0;
    let mut ke_samples = 0u64;
    let mut frames = 0u64;
    let mut row = String::new();
    for step in 1..=steps {
        chain.step();
        let ke = chain.kinetic();
        if step > half {
            ke_sum += ke;
            ke_samples += 1;
        }
        if step % spec.report_interval_steps == 0 {
            row.clear();
            let _ = writeln!(row, "{step},{},{ke}", chain.potential());
            out.write_all(row.as_bytes())?;
            frames += 1;
        }
    }
    out.flush()?;
    let mean_kinetic_per_dof = ke_sum / (ke_samples.max(1) as f64 * particles as f64);
    let wall_ms = started.elapsed().as_secs_f64() * 1000.0;

    let result = SimResult {
        run_dir: run_dir.clone(),
        trajectory_path: trajectory_path.clone(),
        steps,
        frames,
        atom_count: info.atom_count,
        wall_ms,
        mean_kinetic_per_dof,
        status: SimStatus::Ok,
    };
    let manifest = RunManifest {
        spec: spec.clone(),
        atom_count: info.atom_count,
        particles,
        steps,
        frames,
        mean_kinetic_per_dof,
        status: SimStatus::Ok,
        wall_ms,
        run_dir,
        trajectory_path,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
    std::fs::write(result.run_dir.join(MANIFEST_FILE), json)?;
    Ok(result)
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, SimError> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| SimError::FileUnreadable {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| SimError::InvalidSpec(format!("{}: {e}", path.display())))
}

pub fn run_md_schema() -> ToolSchema {
    ToolSchema::new(
        "run_md",
        "Run one molecular dynamics simulation of a PDB structure. Call once per requested run.",
    )
    .param(
        "structure_path",
        ParamType::String,
        "absolute path of the input PDB file",
        true,
    )
    .param(
        "temperature",
        ParamType::Number,
        "temperature in kelvin",
        true,
    )
    .param(
        "length_ps",
        ParamType::Number,
        "simulation length in picoseconds",
        true,
    )
    .param(
        "timestep_fs",
        ParamType::Number,
        "integration timestep in femtoseconds (default 2)",
        false,
    )
    .param(
        "friction_per_ps",
        ParamType::Number,
        "thermostat friction in 1/ps (default 1)",
        false,
    )
    .param("seed", ParamType::Integer, "random seed", false)
    .param(
        "report_interval_steps",
        ParamType::Integer,
        "steps between trajectory frames (default 100)",
        false,
    )
    .param(
        "total_runs",
        ParamType::Integer,
        "total number of simulations the user asked for",
        false,
    )
}

/// The `run_md` tool: one simulation per call, run directories under
/// `runs_dir`.
pub fn run_md_tool(runs_dir: PathBuf, cost: CostModel) -> ToolDef {
    ToolDef::new(
        run_md_schema(),
        ExecutionClass::Parallel,
        move |args, ctx| run_md_invoke(args, ctx, &runs_dir, cost),
    )
}

fn run_md_invoke(
    args: &Arguments,
    ctx: &InvocationContext,
    runs_dir: &Path,
    cost: CostModel,
) -> ToolResult {
    let spec = match SimulationSpec::from_arguments(args, ctx.seed) {
        Ok(s) => s,
        Err(e) => return ToolResult::error(&ctx.tool_call_id, e.to_string()),
    };
    let opts = RunOptions {
        cost,
        run_label: ctx.run_label.clone(),
    };
    match run_simulation(&spec, runs_dir, &opts) {
        Ok(r) => ToolResult::ok(
            ctx,
            format!(
                "Simulation of {} at {} K for {} ps finished: {} steps, {} frames, seed {}. \
                 Trajectory: {}",
                spec.structure_path.display(),
                spec.temperature,
                spec.length_ps,
                r.steps,
                r.frames,
                spec.seed,
                r.trajectory_path.display()
            ),
            vec![r.trajectory_path.clone(), r.run_dir.join(MANIFEST_FILE)],
        ),
        Err(e) => ToolResult::error(&ctx.tool_call_id, e.to_string()),
    }
}
