use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use icudg::commands;
use icudg::AppResult;

/// Multi-site ICU outcome prediction under domain shift.
#[derive(Debug, Parser)]
#[command(name = "icudg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file (TOML).
    #[arg(long, short, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overrides `name` from the config.
    #[arg(long, global = true)]
    name: Option<String>,
    /// Worker threads for independent jobs; defaults to the available cores.
    #[arg(long, global = true, env = "ICUDG_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate the synthetic multi-site dataset.
    Synth,
    /// Apply exclusions and write the attrition report.
    Cohort,
    /// Derive hourly or per-stay labels for the cohort.
    Label,
    /// Fit normalisation per model and write splits.
    Featurize,
    /// Train every model of the experiment matrix.
    Train,
    /// Score trained models and write results and calibration curves.
    Evaluate,
    /// Run every stage end to end.
    Reproduce,
}

fn run(cli: &Cli) -> AppResult<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| icudg::AppError::Runtime(e.to_string()))?;
    }
    let cfg = commands::load_config(&cli.config, cli.output_dir.as_deref(), cli.name.as_deref())?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Cohort => commands::cohort(&cfg),
        Command::Label => commands::label(&cfg),
        Command::Featurize => commands::featurize(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Reproduce => commands::reproduce(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icudg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
