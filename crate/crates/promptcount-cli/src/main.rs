//! Binary entry point: parse arguments, dispatch, and map every error onto
//! the stable exit-code contract (2 usage/io, 3 domain).

use clap::Parser;
use promptcount_cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
