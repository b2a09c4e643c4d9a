//! `tweetguard` command-line client.
//!
//! Every command talks to the HTTP service: an embedded one on an ephemeral
//! loopback port, or the one given with `--server`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 internal error.

mod args;
mod commands;

use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use tweetguard_client::{Client, ClientError};
use tweetguard_core::api::ErrorKind;

use args::{Cli, Command};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Io(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e.kind() {
            Some(ErrorKind::Config) => Failure::Config(e.to_string()),
            Some(ErrorKind::Input) => Failure::Io(e.to_string()),
            Some(ErrorKind::NotFound | ErrorKind::Internal) => Failure::Internal(e.to_string()),
            None => Failure::Io(format!("service unreachable: {e}")),
        }
    }
}

/// Client for `--server`, or for a freshly started embedded service.
pub async fn connect(server: Option<&str>) -> Result<Client, Failure> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => {
            let (addr, _) = tweetguard_server::spawn(SocketAddr::from(([127, 0, 0, 1], 0)))
                .await
                .map_err(|e| Failure::Io(format!("cannot start embedded service: {e}")))?;
            tracing::debug!(%addr, "embedded service listening");
            Ok(Client::new(format!("http://{addr}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(3);
        }
    };
    let server = cli.server.as_deref();
    let result = rt.block_on(async {
        match cli.command {
            Command::Serve { bind } => commands::serve(&bind).await,
            Command::Run(a) => commands::run(server, a).await,
            Command::Eval(a) => commands::eval(server, a).await,
            Command::Bench(a) => commands::bench(server, a).await,
            Command::Gen(a) => commands::gen(server, a).await,
            Command::Tune(a) => commands::tune(server, a).await,
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
