use std::net::SocketAddr;
use std::path::PathBuf;

use axum::http::HeaderValue;
use clap::Parser;
use scenario_api::{router, Config};
use scenario_core::registry::Registry;

#[derive(Parser)]
#[command(name = "scenario-api", version, about = "HTTP service for the scenario editor")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory holding scenarios/ and catalog/.
    #[arg(long, default_value = "workspace")]
    workspace: PathBuf,
    /// TOML registry overrides, as for the CLI.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Allowed CORS origin; repeat for several. Any origin when omitted.
    #[arg(long)]
    cors_origin: Vec<HeaderValue>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let registry = match &args.config {
        Some(path) => Registry::from_toml(&std::fs::read_to_string(path)?)?,
        None => Registry::builtin(),
    };
    let app = router(Config {
        workspace: args.workspace,
        registry,
        cors_origins: args.cors_origin,
    });
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
