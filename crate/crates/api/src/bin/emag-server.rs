//! Runs the HTTP service.
//!
//! Environment: `BIND_ADDR` (default `127.0.0.1:8080`), `DATA_DIR`
//! (default `data`), `CONFIG_PATH` (optional JSON config),
//! `REBUILD_INTERVAL_SECS` (default 3600, 0 disables the periodic
//! recommender rebuild) and `ADMIN_TOKEN` (opens the `/admin` routes).

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use emag_api::{router, AppState};
use emag_core::{Engine, EngineConfig, Store};
use tracing_subscriber::EnvFilter;

fn env_or(name: &str, default: &str) -> String {
    std::env::var(name).ok().filter(|v| !v.is_empty()).unwrap_or_else(|| default.to_string())
}

fn engine_from_env() -> Result<Engine, String> {
    let config = match std::env::var("CONFIG_PATH").ok().filter(|p| !p.is_empty()) {
        Some(path) => EngineConfig::load(&PathBuf::from(&path)).map_err(|e| format!("{path}: {e}"))?,
        None => EngineConfig::default(),
    };
    let dir = PathBuf::from(env_or("DATA_DIR", "data"));
    let store = Store::open(&dir).map_err(|e| format!("opening {}: {e}", dir.display()))?;
    if store.truncated_on_open() > 0 {
        tracing::warn!(bytes = store.truncated_on_open(), "discarded a torn log tail");
    }
    Ok(Engine::new(store, config))
}

async fn rebuild_periodically(engine: Arc<Engine>, every: Duration) {
    let mut ticker = tokio::time::interval(every);
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let engine = engine.clone();
        match tokio::task::spawn_blocking(move || engine.rebuild()).await {
            Ok(Ok(version)) => tracing::debug!(version, "periodic rebuild"),
            Ok(Err(e)) => tracing::warn!(error = %e, "periodic rebuild failed"),
            Err(e) => tracing::error!(error = %e, "rebuild task panicked"),
        }
    }
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let engine = match engine_from_env() {
        Ok(e) => Arc::new(e),
        Err(e) => {
            eprintln!("emag-server: {e}");
            return ExitCode::from(1);
        }
    };
    let interval: u64 = match env_or("REBUILD_INTERVAL_SECS", "3600").parse() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("emag-server: REBUILD_INTERVAL_SECS: {e}");
            return ExitCode::from(2);
        }
    };
    if interval > 0 {
        tokio::spawn(rebuild_periodically(engine.clone(), Duration::from_secs(interval)));
    }

    let admin_token = std::env::var("ADMIN_TOKEN").ok().filter(|t| !t.is_empty());
    let app = router(AppState::new(engine, admin_token));
    let addr = env_or("BIND_ADDR", "127.0.0.1:8080");
    let listener = match tokio::net::TcpListener::bind(&addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("emag-server: binding {addr}: {e}");
            return ExitCode::from(1);
        }
    };
    tracing::info!(%addr, "listening");
    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await {
        eprintln!("emag-server: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
