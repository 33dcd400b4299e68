//! Command-line front end wiring the tomography pipeline end to end.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure,
//! 64 usage error. Randomized commands require a seed, either via
//! `--seed` or the `PMME_LAB_SEED` environment variable (flag wins), and
//! record it in their outputs. With `--no-timestamp` the outputs are
//! byte-identical across repeated runs.

mod commands;

use clap::error::ErrorKind;
use clap::Parser;
use commands::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    std::process::exit(0);
                }
                _ => 64,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                pmme_lab::Error::Numerical(_) => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}
