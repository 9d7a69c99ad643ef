use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use herald::cli::{execute, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(Some(out)) => {
            if std::io::stdout().write_all(out.as_bytes()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
