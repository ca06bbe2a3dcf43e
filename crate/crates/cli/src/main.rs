use std::process::ExitCode;

use clap::Parser;
use homfit_cli::{commands, Cli, RunConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(cli.command, &cli.flags).and_then(|cfg| commands::run(&cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("homfit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
