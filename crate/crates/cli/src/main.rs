use std::io;
use std::process::ExitCode;

use clap::Parser;

use repscore_cli::{run, Cli, Exit};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let exit = match run(cli, &mut stdout.lock()) {
        Ok(exit) => exit,
        Err(err) => {
            eprintln!("error: {err:#}");
            Exit::for_error(&err)
        }
    };
    ExitCode::from(exit as u8)
}
