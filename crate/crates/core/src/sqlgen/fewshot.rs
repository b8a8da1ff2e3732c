use crate::finstore::SchemaCatalog;
use crate::guard::{self, QueryPolicy, Verdict};
use crate::vecindex::{Namespace, VectorIndex};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commentary: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum FewShotError {
    #[error("few-shot file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("few-shot example {index} ({question:?}) fails the query guard: {violations}")]
    Guard {
        index: usize,
        question: String,
        violations: String,
    },
}

/// Worked question/SQL pairs. Every query passes the guard cleanly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FewShotStore {
    examples: Vec<FewShotExample>,
}

const BUILTIN: &str = include_str!("../../assets/fewshots.json");

impl FewShotStore {
    pub fn new(
        examples: Vec<FewShotExample>,
        catalog: &SchemaCatalog,
        policy: &QueryPolicy,
    ) -> Result<Self, FewShotError> {
        for (index, ex) in examples.iter().enumerate() {
            let report = guard::check(&ex.sql, catalog, policy);
            if report.verdict != Verdict::Pass {
                return Err(FewShotError::Guard {
                    index,
                    question: ex.question.clone(),
                    violations: report.describe(),
                });
            }
        }
        Ok(Self { examples })
    }

    /// Reads a JSON array of examples.
    pub fn from_json(text: &str, catalog: &SchemaCatalog, policy: &QueryPolicy) -> Result<Self, FewShotError> {
        Self::new(serde_json::from_str(text)?, catalog, policy)
    }

    pub fn builtin(catalog: &SchemaCatalog, policy: &QueryPolicy) -> Result<Self, FewShotError> {
        Self::from_json(BUILTIN, catalog, policy)
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub(crate) fn index_into(&self, index: &VectorIndex) -> Result<(), crate::vecindex::IndexError> {
        for (i, ex) in self.examples.iter().enumerate() {
            let meta = BTreeMap::from([("example".to_string(), i.to_string())]);
            index.upsert_text(Namespace::FewShot, &format!("fs{i:04}"), &ex.question, meta)?;
        }
        Ok(())
    }
}

/// Top-k examples by question similarity, skipping repeated SQL text. An
/// empty or missing few-shot namespace yields no examples.
pub fn retrieve_fewshots(question: &str, index: &VectorIndex, store: &FewShotStore, k: usize) -> Vec<FewShotExample> {
    if k == 0 || store.is_empty() || !index.contains_namespace(Namespace::FewShot) {
        return Vec::new();
    }
    let hits = match index.search(Namespace::FewShot, question, store.len()) {
        Ok(h) => h,
        Err(e) => {
            tracing::warn!(error = %e, "few-shot search failed");
            return Vec::new();
        }
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for hit in hits {
        let Some(ex) = hit
            .metadata
            .get("example")
            .and_then(|i| i.parse::<usize>().ok())
            .and_then(|i| store.examples.get(i))
        else {
            continue;
        };
        if seen.insert(ex.sql.trim().to_string()) {
            out.push(ex.clone());
            if out.len() == k {
                break;
            }
        }
    }
    out
}
