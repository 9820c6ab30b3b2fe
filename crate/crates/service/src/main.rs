use std::io::IsTerminal;

use clap::Parser;
use tracing::Level;

use crowdrule_service::commands::{run, Cli};

#[tokio::main]
async fn main() -> std::process::ExitCode {
    let level = std::env::var("CROWDRULE_LOG")
        .ok()
        .and_then(|v| v.parse::<Level>().ok())
        .unwrap_or(Level::INFO);
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(Cli::parse()).await {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
