//! Builds the long-lived pieces (warehouse, index, few-shots, gateways)
//! from a [`Config`].

use crate::config::{Config, EmbedderConfig, ProviderConfig};
use anyhow::{bail, Context, Result};
use finsql_core::finstore::{roster, Warehouse, DATABASE_URL_ENV};
use finsql_core::llm::{ChatProvider, Gateway, RemoteChatProvider, ScriptedProvider};
use finsql_core::sqlgen::{build_index, FewShotStore, Pipeline, PipelineConfig};
use finsql_core::vecindex::{Embedder, HashingEmbedder, RemoteEmbedder, VectorIndex};
use finsql_core::Strategy;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

pub const MISSING_PROVIDER: &str =
    "no provider configured: missing key `provider.kind` (add a [provider] section or pass --script)";

/// Opens the warehouse named by `FINSQL_DATABASE_URL`, then `warehouse.url`,
/// then `<data_dir>/warehouse.db`.
pub fn open_warehouse(cfg: &Config) -> Result<Warehouse> {
    if let Ok(url) = std::env::var(DATABASE_URL_ENV) {
        return Warehouse::open_url(&url).with_context(|| format!("opening {DATABASE_URL_ENV}={url}"));
    }
    if let Some(url) = &cfg.warehouse.url {
        return Warehouse::open_url(url).with_context(|| format!("opening warehouse.url {url}"));
    }
    std::fs::create_dir_all(&cfg.data_dir).with_context(|| format!("creating {}", cfg.data_dir.display()))?;
    let path = cfg.data_dir.join("warehouse.db");
    Warehouse::open(&path).with_context(|| format!("opening {}", path.display()))
}

pub fn embedder(cfg: &Config) -> Result<Arc<dyn Embedder>> {
    Ok(match &cfg.embedder {
        EmbedderConfig::Hashing { dimension } => {
            if *dimension == 0 {
                bail!("embedder.dimension must be positive");
            }
            Arc::new(HashingEmbedder::new(*dimension, vec![2, 3]))
        }
        EmbedderConfig::Remote {
            base_url,
            model,
            api_key_env,
        } => {
            let key = match api_key_env {
                Some(var) => {
                    Some(std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?)
                }
                None => None,
            };
            Arc::new(RemoteEmbedder::new(base_url, model, key, Duration::from_secs(30)))
        }
    })
}

pub fn fewshots(cfg: &Config, warehouse: &Warehouse) -> Result<FewShotStore> {
    FewShotStore::builtin(warehouse.catalog(), &cfg.pipeline.policy).context("loading built-in few-shot examples")
}

fn company_names() -> BTreeMap<String, String> {
    roster().into_iter().map(|c| (c.stock_code, c.name)).collect()
}

pub fn build_fresh_index(
    warehouse: &Warehouse,
    fewshots: &FewShotStore,
    embedder: Arc<dyn Embedder>,
) -> Result<VectorIndex> {
    build_index(warehouse, fewshots, embedder, &company_names(), Strategy::default()).context("building the index")
}

pub fn save_index(index: &VectorIndex, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    index.save(BufWriter::new(file)).context("writing the index")
}

/// The saved index when there is one, otherwise a fresh build.
pub fn load_or_build_index(
    cfg: &Config,
    warehouse: &Warehouse,
    fewshots: &FewShotStore,
    embedder: Arc<dyn Embedder>,
) -> Result<VectorIndex> {
    let path = cfg.index_path();
    match File::open(&path) {
        Ok(f) => VectorIndex::load(BufReader::new(f), embedder)
            .map(|i| i.with_strategy(Strategy::default()))
            .with_context(|| format!("loading {}", path.display())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => build_fresh_index(warehouse, fewshots, embedder),
        Err(e) => Err(e).with_context(|| format!("opening {}", path.display())),
    }
}

pub fn provider(pc: &ProviderConfig) -> Result<Arc<dyn ChatProvider>> {
    Ok(match pc {
        ProviderConfig::Scripted { script } => {
            Arc::new(ScriptedProvider::load(script).map_err(|e| anyhow::anyhow!("script {}: {e}", script.display()))?)
        }
        ProviderConfig::Remote(rc) => Arc::new(RemoteChatProvider::new(rc).map_err(anyhow::Error::msg)?),
    })
}

pub fn gateway(cfg: &Config, pc: &ProviderConfig) -> Result<Gateway> {
    Ok(Gateway::new(provider(pc)?).with_retry(cfg.retry.clone()))
}

/// Everything a question needs. Runs are serialized when the provider's
/// answers depend on call order.
pub struct Service {
    pub config: Config,
    pub warehouse: Arc<Warehouse>,
    pub index: Arc<VectorIndex>,
    pub fewshots: Arc<FewShotStore>,
    pub gateway: Option<Gateway>,
    pub judge: Option<Gateway>,
    run_lock: Mutex<()>,
}

impl Service {
    pub fn new(
        config: Config,
        warehouse: Arc<Warehouse>,
        index: Arc<VectorIndex>,
        fewshots: Arc<FewShotStore>,
        gateway: Option<Gateway>,
        judge: Option<Gateway>,
    ) -> Self {
        Self {
            config,
            warehouse,
            index,
            fewshots,
            gateway,
            judge,
            run_lock: Mutex::new(()),
        }
    }

    /// Builds every component. A missing provider is not an error here;
    /// callers that need one use [`Service::require_gateway`].
    pub fn from_config(config: Config) -> Result<Self> {
        let warehouse = open_warehouse(&config)?;
        let fewshots = fewshots(&config, &warehouse)?;
        let index = load_or_build_index(&config, &warehouse, &fewshots, embedder(&config)?)?;
        let gateway = config.provider.as_ref().map(|p| gateway(&config, p)).transpose()?;
        let judge = match &config.judge {
            Some(j) => Some(self::gateway(&config, j)?),
            None => gateway.clone(),
        };
        Ok(Self::new(
            config,
            Arc::new(warehouse),
            Arc::new(index),
            Arc::new(fewshots),
            gateway,
            judge,
        ))
    }

    pub fn require_gateway(&self) -> Result<&Gateway> {
        self.gateway.as_ref().context(MISSING_PROVIDER)
    }

    pub fn pipeline(&self, gateway: Gateway, config: PipelineConfig) -> Pipeline {
        Pipeline::new(
            self.warehouse.clone(),
            self.index.clone(),
            self.fewshots.clone(),
            gateway,
            config,
        )
    }

    /// Held for the length of a run when the provider is order-dependent.
    pub fn run_guard(&self, gateway: &Gateway) -> Option<MutexGuard<'_, ()>> {
        (!gateway.provider().concurrency_safe()).then(|| self.run_lock.lock().unwrap_or_else(|p| p.into_inner()))
    }
}
