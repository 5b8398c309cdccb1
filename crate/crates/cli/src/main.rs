use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fcd_cli::{config, execute, Stage};

/// Frequency-feature adversarial defense pipeline.
#[derive(Parser)]
#[command(name = "fcd", version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long, required_unless_present = "print_schema")]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stage to run.
    #[arg(long, value_enum, default_value_t = Stage::RunAll)]
    stage: Stage,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the config JSON Schema and exit.
    #[arg(long)]
    print_schema: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if args.print_schema {
        print!("{}", config::schema_json());
        return ExitCode::SUCCESS;
    }
    let path = args.config.expect("clap enforces --config");
    match execute(&path, args.seed, args.stage, args.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
