use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use degsde::error::Error;
use degsde::scenario::{self, ScenarioConfig};

/// Experiments for degenerate SDEs with rough drifts.
#[derive(Parser)]
#[command(name = "degsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Write outputs to `<dir>/<scenario>` instead of the configured directory.
        #[arg(long, env = "DEGSDE_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Parse and check a config file without running it.
    Validate { config: PathBuf },
    /// Print the built-in scenarios.
    ListScenarios {
        /// Print CSV instead of aligned text.
        #[arg(long)]
        csv: bool,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } => ExitCode::from(2),
        Error::HypothesisViolation { .. } => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    exit_code(&e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios { csv } => {
            if csv {
                print!("{}", scenario::catalog_csv());
            } else {
                for l in scenario::catalog_lines() {
                    println!("{l}");
                }
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match ScenarioConfig::from_file(&config).and_then(|c| c.validate().map(|_| c)) {
            Ok(c) => {
                println!("{}: ok ({})", config.display(), c.scenario.name());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run { config, output_dir } => {
            let cfg = match ScenarioConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match scenario::run(&cfg, output_dir.as_deref()) {
                Ok((out, dir)) => {
                    print!("{}", out.summary_text());
                    println!("outputs in {}", dir.display());
                    if out.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(4)
                    }
                }
                Err(e) => fail(e),
            }
        }
    }
}
