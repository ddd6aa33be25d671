use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use simweave::harness::{Behavior, FakeDriverFactory};
use simweave::llm::Gateway;
use simweave::pipeline::{parse_journal, replay_journal, Engine};
use simweave::prompts::Registry;
use simweave_server::{router, AppState, FileStore, ServerConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "simweave",
    version,
    about = "Authoring service for interactive simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP service, configured from SIMWEAVE_* variables.
    Serve,
    /// Rebuild a session from its journal and print it as JSON.
    Replay {
        journal: PathBuf,
        /// Cassette answering the journal's model requests.
        #[arg(long)]
        cassette: PathBuf,
        /// Fake-driver behavior file.
        #[arg(long)]
        behavior: Option<PathBuf>,
    },
    /// List the prompt templates with their checksums.
    Prompts,
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

async fn serve() -> Result<(), BoxError> {
    let config = ServerConfig::from_env()?;
    let engine = Engine::new(
        Arc::new(Registry::builtin()?),
        Arc::new(config.gateway.build()?),
        config.drivers()?,
    );
    let store = Arc::new(FileStore::open(&config.store)?);
    let app = router(AppState::new(engine, store));
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %config.listen, store = %config.store.display(), mode = ?config.gateway.mode, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn replay(
    journal: PathBuf,
    cassette: PathBuf,
    behavior: Option<PathBuf>,
) -> Result<(), BoxError> {
    let events = parse_journal(&std::fs::read_to_string(&journal)?)?;
    let behavior = match behavior {
        Some(p) => Behavior::load(&p)?,
        None => Behavior::default(),
    };
    let engine = Engine::new(
        Arc::new(Registry::builtin()?),
        Arc::new(Gateway::replay_file(&cassette)?),
        Arc::new(FakeDriverFactory::new(behavior)),
    );
    let session = replay_journal(&engine, &events).await?;
    emit(&serde_json::to_string_pretty(&session)?)
}

fn prompts() -> Result<(), BoxError> {
    let registry = Registry::builtin()?;
    let listing: String = registry
        .iter()
        .map(|t| format!("{:<28} {}\n", t.id.as_str(), t.checksum()))
        .collect();
    emit(listing.trim_end())
}

/// Prints to stdout; a reader that hung up early is not an error.
fn emit(text: &str) -> Result<(), BoxError> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Cmd::Serve => serve().await,
        Cmd::Replay {
            journal,
            cassette,
            behavior,
        } => replay(journal, cassette, behavior).await,
        Cmd::Prompts => prompts(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
