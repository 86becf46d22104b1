mod cli;
mod commands;

use clap::Parser;

fn main() {
    let parsed = cli::Cli::parse();
    if let Err(err) = commands::run(parsed) {
        eprintln!("error: {}", err.message);
        std::process::exit(err.exit_code);
    }
}
