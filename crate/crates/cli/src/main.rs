use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedmed_cli::audit::cmd_audit;
use fedmed_cli::generate::{cmd_generate, GenerateArgs};
use fedmed_cli::run::{cmd_run, RunArgs, Workflow};
use fedmed_cli::{CliError, EXIT_OK};

#[derive(Parser)]
#[command(name = "fedmed", version, about = "Federated clinical analytics over simulated gateways")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic site cohorts, their OMOP export and a manifest.
    Generate {
        /// JSON generator config.
        #[arg(long, conflicts_with = "default")]
        config: Option<PathBuf>,
        /// Use the built-in two-site config (the default when --config is absent).
        #[arg(long)]
        default: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "FEDMED_SEED")]
        seed: Option<u64>,
    },
    /// Stand up the federation over generated data and run a workflow.
    Run {
        #[arg(long, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<Workflow>()))]
        workflow: Workflow,
        #[arg(long)]
        data: PathBuf,
        /// JSON asset policy applied to every dataset.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Output directory (default: <data>/results).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        event_threshold: f64,
        #[arg(long, default_value_t = 30)]
        interval_width_days: i64,
        #[arg(long, default_value_t = 30)]
        max_rounds: u32,
        /// Principal components to report.
        #[arg(long, default_value_t = 4)]
        components: usize,
        /// Bins per axis for the binned scatter.
        #[arg(long, default_value_t = 12)]
        scatter_bins: u32,
    },
    /// Check a run's message log for identifiers and sub-threshold counts.
    Audit {
        /// The run's manifest.json.
        #[arg(long)]
        run: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, default: _, out, seed } => {
            let m = cmd_generate(&GenerateArgs { config, out: out.clone(), seed })?;
            println!("wrote {} files to {}", m.outputs.len(), out.display());
        }
        Command::Run {
            workflow,
            data,
            policy,
            out,
            event_threshold,
            interval_width_days,
            max_rounds,
            components,
            scatter_bins,
        } => {
            let args = RunArgs {
                workflow,
                data,
                policy,
                out,
                event_threshold,
                interval_width_days,
                max_rounds,
                components,
                scatter_bins,
            };
            let m = cmd_run(&args)?;
            println!("{} jobs, {} files in {}", m.job_ids.len(), m.outputs.len(), args.out_dir().display());
        }
        Command::Audit { run } => {
            cmd_audit(&run)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
