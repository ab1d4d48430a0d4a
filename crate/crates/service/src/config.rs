use std::net::SocketAddr;
use std::path::PathBuf;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 16 * 1024 * 1024;

/// Runtime settings of the HTTP service.
///
/// Environment variables:
/// - `ALIF_BIND`: listen address (default `127.0.0.1:8080`)
/// - `ALIF_DATA_DIR`: session store and named datasets (default `./alif-data`)
/// - `ALIF_AUTH_TOKEN`: when set, `/sessions` requires `x-alif-token` or a bearer token
/// - `ALIF_STATIC_DIR`: static files served under `/ui/` (default `<data dir>/ui`)
/// - `ALIF_MAX_UPLOAD_BYTES`: request body limit (default 16 MiB)
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub auth_token: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub max_upload_bytes: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid {var}: {message}")]
pub struct ConfigError {
    pub var: &'static str,
    pub message: String,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            bind: DEFAULT_BIND.parse().expect("default bind address"),
            data_dir: data_dir.into(),
            auth_token: None,
            static_dir: None,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
        }
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::new(get("ALIF_DATA_DIR").unwrap_or_else(|| "alif-data".into()));
        if let Some(bind) = get("ALIF_BIND") {
            cfg.bind = bind.parse().map_err(|e| ConfigError {
                var: "ALIF_BIND",
                message: format!("{bind:?}: {e}"),
            })?;
        }
        cfg.auth_token = get("ALIF_AUTH_TOKEN").filter(|t| !t.is_empty());
        cfg.static_dir = get("ALIF_STATIC_DIR").map(PathBuf::from);
        if let Some(limit) = get("ALIF_MAX_UPLOAD_BYTES") {
            cfg.max_upload_bytes = limit.parse().map_err(|e| ConfigError {
                var: "ALIF_MAX_UPLOAD_BYTES",
                message: format!("{limit:?}: {e}"),
            })?;
        }
        Ok(cfg)
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn static_root(&self) -> PathBuf {
        self.static_dir.clone().unwrap_or_else(|| self.data_dir.join("ui"))
    }
}
