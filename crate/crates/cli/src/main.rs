use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cemflow_cli::run::{execute, Command, RunOptions};
use cemflow_cli::CliError;

/// Multiscale convection-diffusion experiments.
#[derive(Parser, Debug)]
#[command(name = "cemflow", version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Medium seed; overrides `medium.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cemflow: {}", CliError::Schema(format!("--threads: {e}")));
            return ExitCode::from(2);
        }
    }
    let opts = RunOptions { config: args.config, out: args.out, threads: args.threads, seed: args.seed };
    match execute(args.command, &opts) {
        Ok(summary) => {
            println!("{} rows written to {}", summary.rows.len(), summary.out_dir.join("results.csv").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cemflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
