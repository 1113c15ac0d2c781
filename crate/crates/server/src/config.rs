use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_STORE: &str = "soundscape-data";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown backend mode {0:?} (expected mock or http)")]
    UnknownBackend(String),
    #[error("http backend needs {0}")]
    MissingUrl(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BackendMode {
    #[default]
    Mock,
    Http(HttpBackendConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpBackendConfig {
    pub describe_url: String,
    pub generate_url: String,
    pub auth_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub addr: String,
    pub store: PathBuf,
    pub backend: BackendMode,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            addr: DEFAULT_ADDR.to_string(),
            store: PathBuf::from(DEFAULT_STORE),
            backend: BackendMode::Mock,
        }
    }
}

/// Every field optional, so a file, the environment and command-line flags
/// can each fill in part of the picture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub addr: Option<String>,
    pub store: Option<PathBuf>,
    pub backend: Option<String>,
    pub describe_url: Option<String>,
    pub generate_url: Option<String>,
    pub auth_token: Option<String>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// `SOUNDSCAPE_ADDR`, `SOUNDSCAPE_STORE`, `SOUNDSCAPE_BACKEND`,
    /// `SOUNDSCAPE_DESCRIBE_URL`, `SOUNDSCAPE_GENERATE_URL`,
    /// `SOUNDSCAPE_AUTH_TOKEN`.
    pub fn from_env_with(get: impl Fn(&str) -> Option<String>) -> Self {
        PartialConfig {
            addr: get("SOUNDSCAPE_ADDR"),
            store: get("SOUNDSCAPE_STORE").map(PathBuf::from),
            backend: get("SOUNDSCAPE_BACKEND"),
            describe_url: get("SOUNDSCAPE_DESCRIBE_URL"),
            generate_url: get("SOUNDSCAPE_GENERATE_URL"),
            auth_token: get("SOUNDSCAPE_AUTH_TOKEN"),
        }
    }

    pub fn from_env() -> Self {
        Self::from_env_with(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    /// Fields set in `other` win.
    pub fn overlay(self, other: PartialConfig) -> Self {
        PartialConfig {
            addr: other.addr.or(self.addr),
            store: other.store.or(self.store),
            backend: other.backend.or(self.backend),
            describe_url: other.describe_url.or(self.describe_url),
            generate_url: other.generate_url.or(self.generate_url),
            auth_token: other.auth_token.or(self.auth_token),
        }
    }

    pub fn resolve(self) -> Result<ServerConfig, ConfigError> {
        let defaults = ServerConfig::default();
        let backend = match self.backend.as_deref().unwrap_or("mock") {
            "mock" => BackendMode::Mock,
            "http" => BackendMode::Http(HttpBackendConfig {
                describe_url: self.describe_url.ok_or(ConfigError::MissingUrl("describe_url"))?,
                generate_url: self.generate_url.ok_or(ConfigError::MissingUrl("generate_url"))?,
                auth_token: self.auth_token,
            }),
            other => return Err(ConfigError::UnknownBackend(other.to_string())),
        };
        Ok(ServerConfig {
            addr: self.addr.unwrap_or(defaults.addr),
            store: self.store.unwrap_or(defaults.store),
            backend,
        })
    }
}
