use std::process::ExitCode;

use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("RANKPROP_LOG_LEVEL").unwrap_or_else(|_| EnvFilter::new("error"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let args: Vec<String> = std::env::args().skip(1).collect();
    let wants_info = args.iter().any(|a| matches!(a.as_str(), "-h" | "--help" | "-V" | "--version" | "help"));
    if wants_info || args.is_empty() {
        // let clap render help and version itself
        use clap::Parser;
        rankprop_cli::cli::Cli::parse();
    }
    match rankprop_cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::FAILURE
        }
    }
}
