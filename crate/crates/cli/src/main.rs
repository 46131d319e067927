use std::fs;
use std::io::Write;
use std::process::ExitCode;

use zkpcn_cli::{describe, execute, parse_cli, CliError};

fn run() -> Result<(), CliError> {
    let cli = parse_cli(std::env::args_os())?;
    eprint!("{}", describe(&cli));
    let csv = execute(&cli)?;
    match &cli.out {
        Some(path) => fs::write(path, csv).map_err(|source| CliError::File {
            path: path.clone(),
            source,
        })?,
        None => {
            let _ = std::io::stdout().write_all(csv.as_bytes());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => e.exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
