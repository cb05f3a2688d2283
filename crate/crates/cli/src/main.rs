use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use shardcalc_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rendered = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let written = match &rendered.path {
        Some(path) => std::fs::write(path, rendered.text.as_bytes()),
        None => std::io::stdout().lock().write_all(rendered.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
