use clap::Parser;
use mcnn_cli::{run, Cli};

fn main() -> std::process::ExitCode {
    run(Cli::parse()).into()
}
