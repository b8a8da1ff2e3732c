use super::embed::{EmbedError, Embedder};
use crate::exec::Strategy;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    Industry,
    Company,
    Account,
    Ratio,
    #[serde(rename = "fewshot")]
    FewShot,
}

impl Namespace {
    pub const ALL: [Namespace; 5] = [
        Namespace::Industry,
        Namespace::Company,
        Namespace::Account,
        Namespace::Ratio,
        Namespace::FewShot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Industry => "industry",
            Namespace::Company => "company",
            Namespace::Account => "account",
            Namespace::Ratio => "ratio",
            Namespace::FewShot => "fewshot",
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Namespace {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Namespace::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| IndexError::UnknownNamespace(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedEntry {
    pub namespace: Namespace,
    pub id: String,
    pub surface_text: String,
    pub vector: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub surface_text: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("unknown namespace `{0}`")]
    UnknownNamespace(String),
    #[error("namespace `{namespace}` holds {expected}-dimensional vectors, got {actual}")]
    DimensionMismatch {
        namespace: Namespace,
        expected: usize,
        actual: usize,
    },
    #[error("refusing to store a zero vector for `{0}`")]
    ZeroVector(String),
    #[error("search depth k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index file: {0}")]
    Persist(String),
}

#[derive(Debug, Default)]
struct Space {
    dimension: usize,
    entries: Vec<EmbeddedEntry>,
    norms: Vec<f64>,
    by_id: HashMap<String, usize>,
}

/// Exhaustive cosine index over a handful of namespaces. Writers take an
/// exclusive lock; searches share a read lock.
pub struct VectorIndex {
    embedder: Arc<dyn Embedder>,
    spaces: RwLock<HashMap<Namespace, Space>>,
    strategy: Strategy,
}

impl fmt::Debug for VectorIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorIndex")
            .field("embedder", &self.embedder.provider_id())
            .field("strategy", &self.strategy)
            .finish()
    }
}

impl VectorIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder,
            spaces: RwLock::new(HashMap::new()),
            strategy: Strategy::default(),
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn upsert(&self, entry: EmbeddedEntry) -> Result<(), IndexError> {
        let norm = entry.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(IndexError::ZeroVector(entry.id));
        }
        let mut spaces = self.spaces.write().unwrap_or_else(|p| p.into_inner());
        let space = spaces.entry(entry.namespace).or_insert_with(|| Space {
            dimension: entry.vector.len(),
            ..Space::default()
        });
        if space.dimension != entry.vector.len() {
            return Err(IndexError::DimensionMismatch {
                namespace: entry.namespace,
                expected: space.dimension,
                actual: entry.vector.len(),
            });
        }
        match space.by_id.get(&entry.id) {
            Some(&i) => {
                space.entries[i] = entry;
                space.norms[i] = norm;
            }
            None => {
                space.by_id.insert(entry.id.clone(), space.entries.len());
                space.entries.push(entry);
                space.norms.push(norm);
            }
        }
        Ok(())
    }

    /// Embeds `text` with the index's embedder and stores it.
    pub fn upsert_text(
        &self,
        namespace: Namespace,
        id: &str,
        text: &str,
        metadata: BTreeMap<String, String>,
    ) -> Result<(), IndexError> {
        let vector = self.embedder.embed(text)?;
        self.upsert(EmbeddedEntry {
            namespace,
            id: id.to_string(),
            surface_text: text.to_string(),
            vector,
            metadata,
        })
    }

    pub fn len(&self, namespace: Namespace) -> usize {
        let spaces = self.spaces.read().unwrap_or_else(|p| p.into_inner());
        spaces.get(&namespace).map_or(0, |s| s.entries.len())
    }

    pub fn is_empty(&self) -> bool {
        let spaces = self.spaces.read().unwrap_or_else(|p| p.into_inner());
        spaces.values().all(|s| s.entries.is_empty())
    }

    pub fn contains_namespace(&self, namespace: Namespace) -> bool {
        self.spaces
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .contains_key(&namespace)
    }

    pub fn search(&self, namespace: Namespace, query_text: &str, k: usize) -> Result<Vec<Candidate>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if !self.contains_namespace(namespace) {
            return Err(IndexError::UnknownNamespace(namespace.to_string()));
        }
        let q = self.embedder.embed(query_text)?;
        self.search_vector(namespace, &q, k)
    }

    /// Top-`k` entries by cosine similarity, ties broken by ascending id.
    pub fn search_vector(&self, namespace: Namespace, query: &[f64], k: usize) -> Result<Vec<Candidate>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let spaces = self.spaces.read().unwrap_or_else(|p| p.into_inner());
        let space = spaces
            .get(&namespace)
            .ok_or_else(|| IndexError::UnknownNamespace(namespace.to_string()))?;
        if query.len() != space.dimension {
            return Err(IndexError::DimensionMismatch {
                namespace,
                expected: space.dimension,
                actual: query.len(),
            });
        }
        let qnorm = query.iter().map(|x| x * x).sum::<f64>().sqrt();
        let idx: Vec<usize> = (0..space.entries.len()).collect();
        let scores: Vec<f64> = self.strategy.map(&idx, |&i| {
            if qnorm == 0.0 {
                return 0.0;
            }
            let dot: f64 = space.entries[i].vector.iter().zip(query).map(|(a, b)| a * b).sum();
            (dot / (space.norms[i] * qnorm)).clamp(-1.0, 1.0)
        });
        let mut order = idx;
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| space.entries[a].id.cmp(&space.entries[b].id))
        });
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| {
                let e = &space.entries[i];
                Candidate {
                    id: e.id.clone(),
                    surface_text: e.surface_text.clone(),
                    score: scores[i],
                    metadata: e.metadata.clone(),
                }
            })
            .collect())
    }

    /// Snapshot of every stored entry, ordered by namespace then id.
    pub fn entries(&self) -> Vec<EmbeddedEntry> {
        let spaces = self.spaces.read().unwrap_or_else(|p| p.into_inner());
        let mut out: Vec<EmbeddedEntry> = spaces.values().flat_map(|s| s.entries.iter().cloned()).collect();
        out.sort_by(|a, b| a.namespace.cmp(&b.namespace).then_with(|| a.id.cmp(&b.id)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecindex::HashingEmbedder;

    fn index() -> VectorIndex {
        VectorIndex::new(Arc::new(HashingEmbedder::default()))
    }

    fn entry(id: &str, v: Vec<f64>) -> EmbeddedEntry {
        EmbeddedEntry {
            namespace: Namespace::Ratio,
            id: id.into(),
            surface_text: id.into(),
            vector: v,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn own_text_scores_one() {
        let ix = index();
        ix.upsert_text(Namespace::Ratio, "ROE", "Return on Equity", BTreeMap::new())
            .unwrap();
        ix.upsert_text(Namespace::Ratio, "NIM", "Net Interest Margin", BTreeMap::new())
            .unwrap();
        let hits = ix.search(Namespace::Ratio, "Return on Equity", 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, "ROE");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn same_id_replaces() {
        let ix = index();
        ix.upsert_text(Namespace::Ratio, "X", "first", BTreeMap::new()).unwrap();
        ix.upsert_text(Namespace::Ratio, "X", "second", BTreeMap::new())
            .unwrap();
        let hits = ix.search(Namespace::Ratio, "first", 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].surface_text, "second");
    }

    #[test]
    fn k_clamped_to_population() {
        let ix = index();
        ix.upsert_text(Namespace::Company, "HPG", "HPG", BTreeMap::new())
            .unwrap();
        assert_eq!(ix.search(Namespace::Company, "anything", 5).unwrap().len(), 1);
    }

    #[test]
    fn identical_vectors_tie_break_by_id() {
        let ix = index();
        ix.upsert(entry("b", vec![1.0, 0.0])).unwrap();
        ix.upsert(entry("a", vec![2.0, 0.0])).unwrap();
        ix.upsert(entry("c", vec![0.0, 1.0])).unwrap();
        let hits = ix.search_vector(Namespace::Ratio, &[1.0, 0.0], 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ix = index();
        assert!(matches!(
            ix.upsert(entry("z", vec![0.0, 0.0])),
            Err(IndexError::ZeroVector(_))
        ));
        ix.upsert(entry("a", vec![1.0, 0.0])).unwrap();
        assert!(matches!(
            ix.upsert(entry("b", vec![1.0, 0.0, 0.0])),
            Err(IndexError::DimensionMismatch {
                expected: 2,
                actual: 3,
                ..
            })
        ));
        assert!(matches!(
            ix.search_vector(Namespace::Ratio, &[1.0, 0.0], 0),
            Err(IndexError::InvalidK)
        ));
        assert!(matches!(
            ix.search(Namespace::Company, "x", 1),
            Err(IndexError::UnknownNamespace(_))
        ));
        assert!("bogus".parse::<Namespace>().is_err());
    }
}
