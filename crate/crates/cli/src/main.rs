use std::process::ExitCode;

use clap::Parser;
use pillarvote::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("pillarvote: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        // The panic message is already on stderr.
        Err(_) => ExitCode::from(4),
    }
}
