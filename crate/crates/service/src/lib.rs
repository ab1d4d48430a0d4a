//! HTTP session API for interactive labeling.
//!
//! A session wraps one fitted forest and its supervised overlay. The expert
//! loop is strictly sequential: `POST /sessions/{id}/query` hands out one
//! point, `POST /sessions/{id}/labels` answers it, and only then can the next
//! query be issued. Every state change is appended to the session's event
//! log and a checkpoint is rewritten after each label, so a restarted server
//! resumes exactly where it stopped.

mod api;
pub mod config;
mod error;
pub mod resource;
pub mod store;

pub use api::{router, TOKEN_HEADER};
pub use config::ServiceConfig;
pub use error::ApiError;
pub use resource::{CreateRequest, SessionResource, Status};

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

type Shared = Arc<tokio::sync::RwLock<SessionResource>>;

/// Shared server state: configuration and the live sessions.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Shared>>,
}

impl AppState {
    /// Opens the data directory and reloads every persisted session.
    /// Sessions that fail to load are logged and skipped.
    pub fn open(config: ServiceConfig) -> std::io::Result<Self> {
        let root = config.sessions_dir();
        std::fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&root)? {
            let path = entry?.path();
            if !path.is_dir() {
                continue;
            }
            match SessionResource::open(&path) {
                Ok(res) => {
                    sessions.insert(res.id().to_string(), Arc::new(tokio::sync::RwLock::new(res)));
                }
                Err(e) => log::warn!("skipping session {}: {}", path.display(), e.message),
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), root.display());
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                sessions: RwLock::new(sessions),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.sessions.read().expect("session map").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn get(&self, id: &str) -> Result<Shared, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn all(&self) -> Vec<Shared> {
        self.inner.sessions.read().expect("session map").values().cloned().collect()
    }

    fn insert(&self, res: SessionResource) {
        let id = res.id().to_string();
        self.inner
            .sessions
            .write()
            .expect("session map")
            .insert(id, Arc::new(tokio::sync::RwLock::new(res)));
    }
}

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let bind = config.bind;
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
