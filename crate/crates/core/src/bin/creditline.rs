use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use creditline::config::RunConfig;
use creditline::report::report_summary;
use creditline::tasks::{run, TaskError};

#[derive(Parser)]
#[command(
    name = "creditline",
    version,
    about = "Dividend, credit-line and investment policies of a cash-constrained firm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed of the Monte Carlo estimators (overrides `numerics.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the summary of a finished run.
    Report { dir: PathBuf },
}

const CONFIG_ERROR: u8 = 2;
const SOLVER_FAILURE: u8 = 3;
const VALIDATION_FAILURE: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, threads } => {
            let mut cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(s) = seed {
                cfg.numerics.seed = s;
            }
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("cannot set thread count: {e}");
                }
            }
            let result = run(&cfg);
            match report_summary(&cfg.output_dir) {
                Ok(s) => print!("{s}"),
                Err(e) => eprintln!("{e}"),
            }
            match result {
                Ok(_) => ExitCode::SUCCESS,
                Err(e @ TaskError::Validation(_)) => {
                    eprintln!("{e}");
                    ExitCode::from(VALIDATION_FAILURE)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(SOLVER_FAILURE)
                }
            }
        }
        Command::Report { dir } => match report_summary(&dir) {
            Ok(s) => {
                print!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
    }
}
