//! `surfbeam` command-line pipeline and HTTP service.
//!
//! The batch commands ([`commands`]) simulate runs into directories, append
//! adjustments and write quality reports; [`service`] serves stored runs
//! over HTTP for interactive steering of the adjustment.

pub mod commands;
pub mod config;
pub mod error;
pub mod service;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

pub use error::{CliError, CliResult};

/// Bind, announce the bound address, then serve `path` until interrupted.
pub fn cmd_serve(
    path: &Path,
    host: &str,
    port: u16,
    cache_mb: usize,
    announce: impl FnOnce(SocketAddr),
) -> CliResult<()> {
    let workspace = service::Workspace::open(path)?;
    let listener = std::net::TcpListener::bind((host, port)).map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => CliError::usage(format!("PORT_IN_USE: {host}:{port} is already in use")),
        _ => CliError::usage(format!("cannot bind {host}:{port}: {e}")),
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let state = Arc::new(service::AppState::new(workspace, cache_mb.saturating_mul(1 << 20)));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        announce(addr);
        service::serve(listener, state, service::shutdown_signal()).await
    })?;
    Ok(())
}
