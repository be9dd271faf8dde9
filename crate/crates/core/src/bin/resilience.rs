use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use resilience::pipeline::{self, PipelineConfig, Stage};
use resilience::Error;

#[derive(Parser)]
#[command(name = "resilience", version, about = "Academic resilience indicators, models and explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table.
    Synth(Common),
    /// Build the four resilience labels and the rates table.
    Indicators(Common),
    /// Group summaries with Welch tests per indicator.
    Summarize(Common),
    /// Cross-validated model selection per indicator.
    GridSearch(Common),
    /// Fit the selected model per indicator.
    Fit(Common),
    /// SHAP values, importance, beeswarm and local profiles.
    Explain(Common),
    /// Partial dependence curves on relative-probability and odds scales.
    Depend(Common),
    /// Paired importance across school sub-systems.
    Subsample(Common),
    /// Verify an output directory's manifest and print a summary.
    Report(Common),
    /// Every stage.
    Run(Common),
}

fn load(common: &Common) -> Result<PipelineConfig, Error> {
    let mut config = match &common.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(o) = &common.out {
        config.out_dir = o.clone();
    }
    Ok(config)
}

/// Stage failures exit with 3; anything caught before a stage starts is a
/// configuration problem and exits with 2.
fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Stage { .. } => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, stages) = match &cli.command {
        Command::Synth(c) => (c, vec![Stage::Ingest]),
        Command::Indicators(c) => (c, vec![Stage::Indicators]),
        Command::Summarize(c) => (c, vec![Stage::Summaries]),
        Command::GridSearch(c) => (c, vec![Stage::GridSearch]),
        Command::Fit(c) => (c, vec![Stage::FinalFit]),
        Command::Explain(c) => (c, vec![Stage::Explain]),
        Command::Depend(c) => (c, vec![Stage::Dependence]),
        Command::Subsample(c) => (c, vec![Stage::Subsample]),
        Command::Report(c) => (c, vec![]),
        Command::Run(c) => (c, Stage::ALL.to_vec()),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let config = match load(common) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return exit_for(&e);
        }
    };
    if stages.is_empty() {
        return match pipeline::report(&config.out_dir, std::io::stdout().lock()) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(3),
            Err(e) => {
                error!("{e}");
                ExitCode::from(3)
            }
        };
    }
    match pipeline::run_stages(&config, &stages) {
        Ok(m) => {
            println!("{} artifacts written to {}", m.artifacts.len(), config.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            exit_for(&e)
        }
    }
}
