use clap::Parser;
use tracing_subscriber::EnvFilter;

use elitepol_cli::{run, Cli, STAGE_FAILURE};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .init();
    let code = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt.block_on(run(cli)),
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            STAGE_FAILURE
        }
    };
    std::process::exit(code);
}
