use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use g2flow_cli::check::{run_suite, Mutation};
use g2flow_cli::run::{cmd_flow, cmd_perturb, cmd_spectrum};
use g2flow_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "g2flow", version, about = "Laplacian flow of closed G2 structures on flat 7-tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the randomized algebraic identity suite and print a JSON report.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random points per pointwise identity.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Corrupt the model forms to exercise the suite.
        #[arg(long, value_enum, hide = true)]
        mutate: Option<Mutation>,
    },
    /// Run a flow and write series, checkpoints, summary and plot.
    Flow {
        config: PathBuf,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Print the analytic and discrete first eigenvalue on exact 3-forms.
    Spectrum { config: PathBuf },
    /// Validate a config and write its initial structure as a checkpoint.
    Perturb { config: PathBuf },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("G2FLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::Config(format!("G2FLOW_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Check { seed, samples, mutate } => {
            let report = run_suite(seed, samples, mutate);
            print_json(&report);
            match report.first_failure {
                Some(name) => Err(CliError::Identity(name)),
                None => Ok(()),
            }
        }
        Command::Flow { config, resume } => {
            let summary = cmd_flow(RunConfig::load(&config)?, resume)?;
            print_json(&summary);
            Ok(())
        }
        Command::Spectrum { config } => {
            let r = cmd_spectrum(RunConfig::load(&config)?)?;
            println!("lambda1 analytic {:.12} discrete {:.12}", r.lambda1_analytic, r.lambda1_discrete);
            Ok(())
        }
        Command::Perturb { config } => {
            print_json(&cmd_perturb(RunConfig::load(&config)?)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("g2flow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
