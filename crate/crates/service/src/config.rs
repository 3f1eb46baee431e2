use std::fs;
use std::path::{Path, PathBuf};

use expertrank_core::corpus::{self, StopWordSet};
use expertrank_core::{Engine, EngineError, Settings};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Overrides [`ApiConfig::listen`].
pub const LISTEN_ENV: &str = "EXPERTRANK_LISTEN";

fn default_listen() -> String {
    "127.0.0.1:8080".to_string()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Service configuration, read from a JSON file. Ranking and learning
/// settings sit at the top level next to the paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Corpus to ingest when the store is not initialized yet.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
    /// Store directory. Without one the service keeps everything in memory.
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(flatten)]
    pub settings: Settings,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            listen: default_listen(),
            corpus: None,
            stopwords: None,
            store: None,
            settings: Settings::default(),
        }
    }
}

impl ApiConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = serde_json::from_slice(&bytes).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Applies the listen-address environment override.
    pub fn with_env(mut self) -> Self {
        if let Ok(addr) = std::env::var(LISTEN_ENV) {
            if !addr.trim().is_empty() {
                self.listen = addr;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.settings.validate()?;
        let w = &self.settings.section_weights;
        if [w.folder, w.name, w.body].iter().any(|s| *s <= 0.0) {
            return Err(ConfigError::Invalid(
                "section weights must be positive".into(),
            ));
        }
        if self.settings.alpha <= 0.0 {
            return Err(ConfigError::Invalid("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Opens the configured store, ingesting the corpus first if the store is
/// new. Settings from the configuration take precedence over stored ones.
pub fn build_engine(config: &ApiConfig) -> Result<Engine, ConfigError> {
    config.validate()?;
    let stopwords = match &config.stopwords {
        Some(path) => StopWordSet::load(path).map_err(EngineError::from)?,
        None => StopWordSet::new(),
    };
    let settings = config.settings.clone();
    match (&config.store, &config.corpus) {
        (Some(store), _) if Engine::is_initialized(store) => {
            Ok(Engine::open_with(store, Some(settings))?)
        }
        (Some(store), Some(corpus)) => {
            let corpus = corpus::ingest(corpus).map_err(EngineError::from)?;
            Ok(Engine::init(store, corpus, stopwords, settings)?)
        }
        (None, Some(corpus)) => {
            let corpus = corpus::ingest(corpus).map_err(EngineError::from)?;
            Ok(Engine::in_memory(corpus, stopwords, settings)?)
        }
        (_, None) => Err(ConfigError::Invalid(
            "a corpus is required unless the store is already initialized".into(),
        )),
    }
}
