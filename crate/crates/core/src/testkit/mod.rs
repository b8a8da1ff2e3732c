//! Ready-made fixtures for tests, benches and demos: a seeded warehouse
//! wired to a scripted provider, and generated SQL corpora.

mod corpus;

pub use corpus::{mutation_corpus, select_corpus, FuzzCase};

use crate::finstore::{roster, seed_fixture, FixtureProfile, Warehouse};
use crate::guard::QueryPolicy;
use crate::llm::{Gateway, RetryPolicy, ScriptedProvider};
use crate::sqlgen::{build_index, FewShotStore, Pipeline, PipelineConfig};
use crate::vecindex::{HashingEmbedder, VectorIndex};
use crate::Strategy;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

/// Warehouse, index and few-shots for one fixture profile, shared by every
/// pipeline built from it.
#[derive(Clone)]
pub struct FixtureWorld {
    pub warehouse: Arc<Warehouse>,
    pub index: Arc<VectorIndex>,
    pub fewshots: Arc<FewShotStore>,
}

impl FixtureWorld {
    pub fn new(profile: &FixtureProfile) -> Self {
        let warehouse = seed_fixture(profile).expect("fixture seeds");
        let fewshots = FewShotStore::builtin(warehouse.catalog(), &QueryPolicy::default()).expect("built-in few-shots");
        let names: BTreeMap<String, String> = roster().into_iter().map(|c| (c.stock_code, c.name)).collect();
        let index = build_index(
            &warehouse,
            &fewshots,
            Arc::new(HashingEmbedder::default()),
            &names,
            Strategy::default(),
        )
        .expect("index builds");
        Self {
            warehouse: Arc::new(warehouse),
            index: Arc::new(index),
            fewshots: Arc::new(fewshots),
        }
    }

    pub fn test() -> Self {
        Self::new(&FixtureProfile::test())
    }

    /// A pipeline answering from `script`, without retry backoff.
    pub fn scripted_pipeline(&self, script: &str, config: PipelineConfig) -> Pipeline {
        let provider = ScriptedProvider::parse(script).expect("script parses");
        let gateway = Gateway::new(Arc::new(provider)).with_retry(RetryPolicy {
            retries: 2,
            base_backoff: Duration::ZERO,
        });
        self.pipeline(gateway, config)
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
}
