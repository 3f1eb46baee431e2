//! HTTP/JSON API over an [`Engine`]: search, read a document with its
//! evaluation context, submit an evaluation, fetch the position-change report.

mod api;
mod config;

pub use api::{router, ApiError};
pub use config::{build_engine, ApiConfig, ConfigError, LISTEN_ENV};

use std::sync::Arc;

use expertrank_core::Engine;

/// Binds `config.listen` and serves until the process is stopped.
pub async fn serve(config: &ApiConfig, engine: Arc<Engine>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine)).await
}
