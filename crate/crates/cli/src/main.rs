use std::process::ExitCode;

use clap::Parser;
use soqal_cli::{execute, seed_base_from, Cli, SEED_BASE_VAR};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let base = std::env::var(SEED_BASE_VAR).ok();
    let result = seed_base_from(base.as_deref()).and_then(|base| execute(cli, base));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
