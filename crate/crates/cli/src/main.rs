use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toolflow_cli::config::{EnvOverrides, RunConfig};
use toolflow_cli::plot::plot_file;
use toolflow_cli::run::{execute, RunReport, EXIT_ERROR};
use toolflow_cli::scenarios;
use toolflow_cli::CliError;

#[derive(Parser)]
#[command(
    name = "toolflow",
    version,
    about = "Run LLM agent workflows with parallel tool calls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a prompt through the workflow described by a config file.
    Run(RunArgs),
    /// Render a timeline CSV as an SVG.
    Plot { timeline: PathBuf, svg: PathBuf },
    /// List or run the bundled offline scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(
        long,
        conflicts_with = "prompt_file",
        required_unless_present = "prompt_file"
    )]
    prompt: Option<String>,
    #[arg(long)]
    prompt_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScenarioAction {
    List,
    Run {
        name: String,
        /// Output directory (default: scenario-runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn report(r: &RunReport) {
    if let Some(m) = r.final_answer() {
        println!("{}", m.content);
    }
    eprintln!(
        "{} simulation run(s), {} warning(s); outputs in {}",
        r.run_dirs.len(),
        r.state.warnings.len(),
        r.output_dir.display()
    );
}

fn run(args: RunArgs, env: &EnvOverrides) -> Result<i32, CliError> {
    let cfg = RunConfig::load(&args.config, env)?;
    let prompt = match (args.prompt, args.prompt_file) {
        (Some(p), _) => p,
        (None, Some(path)) => std::fs::read_to_string(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        (None, None) => return Err(CliError::Config("no prompt given".into())),
    };
    let r = execute(&cfg, env, &prompt)?;
    report(&r);
    Ok(r.exit_code)
}

fn scenarios_cmd(action: ScenarioAction, env: &EnvOverrides) -> Result<i32, CliError> {
    match action {
        ScenarioAction::List => {
            for s in scenarios::all() {
                println!(
                    "{:<20} run {} | {} | {}{}",
                    s.name,
                    s.run,
                    s.platform,
                    s.summary,
                    if s.primary { "" } else { " (variant)" }
                );
                println!("{:<20} prompt: {}", "", s.prompt_text(env));
            }
            Ok(0)
        }
        ScenarioAction::Run { name, out } => {
            let s = scenarios::find(&name)?;
            let out = out.unwrap_or_else(|| PathBuf::from("scenario-runs").join(s.name));
            let r = s.run(env, &out)?;
            report(&r);
            Ok(r.exit_code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let env = EnvOverrides::from_env();
    let result = match cli.command {
        Command::Run(args) => run(args, &env),
        Command::Plot { timeline, svg } => plot_file(&timeline, &svg).map(|()| 0),
        Command::Scenarios { action } => scenarios_cmd(action, &env),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
