use std::io::Write;
use std::process::ExitCode;

use attnflow_cli::{run, Cli};
use attnflow_core::report::{error_document, to_canonical};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(doc)) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(doc.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(err) => {
            eprint!("{}", to_canonical(&error_document(&err)));
            ExitCode::from(1)
        }
    }
}
