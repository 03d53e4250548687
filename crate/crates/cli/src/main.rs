use std::process::ExitCode;

use clap::Parser;
use imbassl_cli::{run, Cli, SEED_ENV};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let seeds = std::env::var(SEED_ENV).ok();
    match run(&cli, seeds.as_deref()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
