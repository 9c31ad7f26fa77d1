//! Runtime configuration, loaded from TOML. Secrets are never stored here;
//! providers read API keys from the environment variable named in the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::semantic::{EmbeddingProvider, HttpEmbedder, MockEmbedder, ProviderError};
use crate::summarize::{HttpSummarizer, MockSummarizer, PromptTemplates, RegenerationPolicy, SummaryProvider};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Output directory of `ingest`.
    pub data_dir: PathBuf,
    /// Server persistence directory.
    pub store_dir: PathBuf,
    /// Overrides the built-in prompt templates when set.
    pub prompt_dir: Option<PathBuf>,
    pub seed: u64,
    pub embedding_dim: usize,
    /// Users with fewer ratings are not given a portrait.
    pub min_ratings: usize,
    pub session_gap_minutes: i64,
    pub regeneration: RegenerationSettings,
    pub embedding: ProviderSettings,
    pub llm: ProviderSettings,
    pub server: ServerSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("data"),
            store_dir: PathBuf::from("store"),
            prompt_dir: None,
            seed: 42,
            embedding_dim: 64,
            min_ratings: 20,
            session_gap_minutes: 30,
            regeneration: RegenerationSettings::default(),
            embedding: ProviderSettings::default(),
            llm: ProviderSettings::default(),
            server: ServerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RegenerationSettings {
    pub fraction_threshold: f64,
    pub absolute_threshold: u64,
    pub cadence_hours: i64,
}

impl Default for RegenerationSettings {
    fn default() -> Self {
        RegenerationSettings {
            fraction_threshold: 0.10,
            absolute_threshold: 10,
            cadence_hours: 24,
        }
    }
}

impl RegenerationSettings {
    pub fn policy(&self) -> RegenerationPolicy {
        RegenerationPolicy {
            fraction_threshold: self.fraction_threshold,
            absolute_threshold: self.absolute_threshold,
            cadence: chrono::Duration::hours(self.cadence_hours),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub http: HttpSettings,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            kind: ProviderKind::Mock,
            http: HttpSettings::default(),
        }
    }
}

/// OpenAI-compatible endpoint settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: String::new(),
            api_key_env: None,
            timeout_secs: 30,
            retries: 2,
        }
    }
}

impl HttpSettings {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn api_key(&self) -> Result<Option<String>, ProviderError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ProviderError::Config(format!("environment variable {var} not set"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSettings {
    pub bind: String,
    /// Environment variable holding an optional static bearer token.
    pub token_env: Option<String>,
    /// Interval of the background regeneration sweep, in seconds.
    pub sweep_interval_secs: u64,
    /// Snapshot the portrait log after this many appended versions.
    pub snapshot_every: u64,
}

impl Default for ServerSettings {
    fn default() -> Self {
        ServerSettings {
            bind: "127.0.0.1:8080".into(),
            token_env: None,
            sweep_interval_secs: 86_400,
            snapshot_every: 1000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("parsing config {0}: {1}")]
    Parse(PathBuf, toml::de::Error),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("prompt templates: {0}")]
    Prompts(std::io::Error),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_owned(), e))?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(path.to_owned(), e))
    }

    pub fn embedder(&self) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        Ok(match self.embedding.kind {
            ProviderKind::Mock => Arc::new(MockEmbedder::new(self.embedding_dim, self.seed)),
            ProviderKind::Http => Arc::new(HttpEmbedder::new(
                self.embedding.http.clone(),
                self.embedding_dim,
            )?),
        })
    }

    pub fn summarizer(&self) -> Result<Arc<dyn SummaryProvider>, ConfigError> {
        Ok(match self.llm.kind {
            ProviderKind::Mock => Arc::new(MockSummarizer),
            ProviderKind::Http => Arc::new(HttpSummarizer::new(self.llm.http.clone())?),
        })
    }

    pub fn templates(&self) -> Result<PromptTemplates, ConfigError> {
        match &self.prompt_dir {
            None => Ok(PromptTemplates::default()),
            Some(dir) => PromptTemplates::load(dir).map_err(ConfigError::Prompts),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_policy() {
        let cfg: Config = toml::from_str("").unwrap();
        let p = cfg.regeneration.policy();
        assert_eq!(p.fraction_threshold, 0.10);
        assert_eq!(p.absolute_threshold, 10);
        assert_eq!(p.cadence, chrono::Duration::hours(24));
        assert_eq!(cfg.session_gap_minutes, 30);
        assert_eq!(cfg.min_ratings, 20);
    }

    #[test]
    fn partial_file() {
        let cfg: Config = toml::from_str(
            "seed = 3\n[llm]\nkind = \"http\"\n[llm.http]\nmodel = \"m\"\napi_key_env = \"NOPE_NOT_SET_X\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.llm.kind, ProviderKind::Http);
        assert!(cfg.llm.http.api_key().is_err());
        assert_eq!(cfg.embedding.kind, ProviderKind::Mock);
    }
}
