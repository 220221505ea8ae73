use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rfan_cli::{run_from_config, Overrides};

#[derive(Parser)]
#[command(name = "rfan", version, about = "Run seeded adaptive-trial experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every design in a config file and write the result tables.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of seeds (overrides `n_seeds`).
        #[arg(long)]
        seeds: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seeds, jobs } => {
            match run_from_config(&config, &Overrides { out, seeds, jobs }) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
    }
}
