//! `finsql.toml`: one file for every component, secrets through
//! environment variables named in it.

use anyhow::{bail, Context, Result};
use finsql_core::llm::{RemoteConfig, RetryPolicy};
use finsql_core::sqlgen::PipelineConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const DEFAULT_CONFIG: &str = "finsql.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Warehouse file, index and traces live here unless overridden.
    pub data_dir: PathBuf,
    pub warehouse: WarehouseConfig,
    pub provider: Option<ProviderConfig>,
    /// Judge for evaluation; the main provider when absent.
    pub judge: Option<ProviderConfig>,
    pub retry: RetryPolicy,
    pub embedder: EmbedderConfig,
    pub pipeline: PipelineConfig,
    pub server: ServerConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from(".finsql"),
            warehouse: WarehouseConfig::default(),
            provider: None,
            judge: None,
            retry: RetryPolicy::default(),
            embedder: EmbedderConfig::default(),
            pipeline: PipelineConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarehouseConfig {
    /// Connection string; `FINSQL_DATABASE_URL` wins over it, and
    /// `<data_dir>/warehouse.db` is used when neither is set.
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Scripted { script: PathBuf },
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_dimension() -> usize {
    256
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashing {
            dimension: default_dimension(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub trace_capacity: usize,
    /// Trace directory; `<data_dir>/traces` when absent.
    pub trace_dir: Option<PathBuf>,
    /// Allowed browser origins; any origin when empty.
    pub cors_origins: Vec<String>,
    pub ask_deadline_secs: u64,
    /// When set, requests must carry this variable's value in `x-api-key`.
    pub api_key_env: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            trace_capacity: 1000,
            trace_dir: None,
            cors_origins: Vec::new(),
            ask_deadline_secs: 60,
            api_key_env: None,
        }
    }
}

impl ServerConfig {
    pub fn ask_deadline(&self) -> Duration {
        Duration::from_secs(self.ask_deadline_secs)
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid config")
    }

    /// Loads `path`, or `finsql.toml` in the working directory when it
    /// exists, or the defaults. An explicit path must exist.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (path, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG), false),
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text).with_context(|| format!("in {}", path.display())),
            Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => bail!("cannot read config {}: {e}", path.display()),
        }
    }

    /// Applies `--provider` and `--script`.
    pub fn override_provider(&mut self, kind: Option<&str>, script: Option<&Path>) -> Result<()> {
        match (kind, script) {
            (None, None) => {}
            (Some("scripted") | None, Some(s)) => {
                self.provider = Some(ProviderConfig::Scripted { script: s.to_path_buf() });
            }
            (Some("scripted"), None) => match &self.provider {
                Some(ProviderConfig::Scripted { .. }) => {}
                _ => bail!("missing key `provider.script`: the scripted provider needs --script or a script path"),
            },
            (Some("remote"), _) => match &self.provider {
                Some(ProviderConfig::Remote(_)) => {}
                _ => bail!("missing key `provider.base_url`: the remote provider needs a [provider] section with kind = \"remote\""),
            },
            (Some(other), _) => bail!("unknown provider `{other}` (expected scripted or remote)"),
        }
        Ok(())
    }

    pub fn trace_dir(&self) -> PathBuf {
        self.server
            .trace_dir
            .clone()
            .unwrap_or_else(|| self.data_dir.join("traces"))
    }

    pub fn index_path(&self) -> PathBuf {
        self.data_dir.join("index.tsv")
    }
}
