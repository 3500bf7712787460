use std::net::SocketAddr;
use std::path::PathBuf;

use attnflow_server::{router, AppState};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "attnflow-server", version, about = "HTTP session server for attention-flow graphs")]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "ATTNFLOW_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory that session `path` sources are resolved against.
    #[arg(long, env = "ATTNFLOW_FIXTURES", default_value = "fixtures")]
    fixtures: PathBuf,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!(addr = %args.listen, fixtures = %args.fixtures.display(), "listening");
    axum::serve(listener, router(AppState::new(args.fixtures))).await
}
