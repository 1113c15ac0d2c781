//! HTTP/JSON service for building sound memories: projects, scene upload,
//! the music dialogue, effect bindings, recording sessions and renders.

mod app;
pub mod backend;
pub mod config;
pub mod error;

use std::net::SocketAddr;
use std::sync::Arc;

use soundscape_core::agent::{DescriberPort, MockDescriber, MockMusicGenerator, MusicGenPort};
use soundscape_core::store::ProjectStore;
use thiserror::Error;
use tokio::net::TcpListener;

pub use app::{router, AppState, Shared, MAX_UPLOAD_BYTES};
pub use config::{BackendMode, ServerConfig};
pub use error::ApiError;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("opening store {path}: {message}")]
    Store { path: String, message: String },
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens the store and picks the backends named in `config`.
pub fn build_state(config: &ServerConfig) -> Result<Shared, ServeError> {
    let store_err = |message: String| ServeError::Store {
        path: config.store.display().to_string(),
        message,
    };
    let store = ProjectStore::open(&config.store).map_err(|e| store_err(e.to_string()))?;
    let (describer, generator): (Box<dyn DescriberPort>, Box<dyn MusicGenPort>) = match &config.backend {
        BackendMode::Mock => (Box::new(MockDescriber), Box::new(MockMusicGenerator)),
        BackendMode::Http(http) => (
            Box::new(backend::HttpDescriber::new(http)),
            Box::new(backend::HttpMusicGenerator::new(http)),
        ),
    };
    let state = AppState::new(store, describer, generator, None).map_err(|e| store_err(e.message))?;
    Ok(Arc::new(state))
}

/// A bound listener that has not started serving yet.
pub struct Server {
    listener: TcpListener,
    state: Shared,
}

impl Server {
    pub async fn bind(addr: &str, state: Shared) -> Result<Self, ServeError> {
        let listener = TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> Result<(), ServeError> {
        axum::serve(self.listener, router(self.state)).await?;
        Ok(())
    }
}

/// Serves `state` on an ephemeral localhost port from a dedicated thread
/// and runtime, for embedding and tests. The server lives until the process
/// exits.
pub fn serve_in_background(state: Shared) -> std::io::Result<SocketAddr> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
            Ok(rt) => rt,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        };
        runtime.block_on(async move {
            let server = match Server::bind("127.0.0.1:0", state).await {
                Ok(s) => s,
                Err(e) => {
                    let _ = tx.send(Err(std::io::Error::other(e.to_string())));
                    return;
                }
            };
            let _ = tx.send(server.local_addr());
            if let Err(e) = server.run().await {
                log::error!("background server stopped: {e}");
            }
        });
    });
    rx.recv().map_err(std::io::Error::other)?
}
