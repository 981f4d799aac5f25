//! `conic-ke`: batch driver for the conic Kähler–Einstein laboratory.

use std::process::ExitCode;

use clap::Parser;
use conic_ke_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
