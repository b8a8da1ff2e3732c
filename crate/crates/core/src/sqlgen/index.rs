use super::FewShotStore;
use crate::finstore::{CodeInfo, ExecLimits, Warehouse};
use crate::vecindex::{Embedder, IndexError, Namespace, VectorIndex};
use crate::Strategy;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("reading the warehouse: {0}")]
    Warehouse(#[from] crate::finstore::ExecError),
}

fn meta(code: &str, label: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("code".to_string(), code.to_string()),
        ("label".to_string(), label.to_string()),
    ])
}

fn index_codes(index: &VectorIndex, ns: Namespace, codes: &BTreeMap<String, CodeInfo>) -> Result<(), IndexError> {
    for (code, info) in codes {
        let m = meta(code, &info.label);
        index.upsert_text(ns, code, &info.label, m.clone())?;
        for (i, alias) in info.aliases.iter().enumerate() {
            index.upsert_text(ns, &format!("{code}#{}", i + 1), alias, m.clone())?;
        }
    }
    Ok(())
}

/// Builds every namespace: industries and tickers from the warehouse,
/// account and ratio codes from the catalog, and the few-shot questions.
/// `company_names` adds a searchable display name per ticker.
pub fn build_index(
    warehouse: &Warehouse,
    fewshots: &FewShotStore,
    embedder: Arc<dyn Embedder>,
    company_names: &BTreeMap<String, String>,
    strategy: Strategy,
) -> Result<VectorIndex, BuildError> {
    let index = VectorIndex::new(embedder).with_strategy(strategy);
    let limits = ExecLimits {
        row_cap: 1_000_000,
        timeout: Duration::from_secs(30),
    };
    let read = |sql: &str| match warehouse.execute_readonly(sql, &limits) {
        Ok(t) => Ok(t.rows),
        Err(e) if e.kind == crate::finstore::ExecErrorKind::Empty => Ok(Vec::new()),
        Err(e) => Err(e),
    };

    for row in read("SELECT DISTINCT industry FROM company_info WHERE industry IS NOT NULL ORDER BY industry")? {
        let name = row[0].to_string();
        index.upsert_text(Namespace::Industry, &name, &name, meta(&name, &name))?;
    }
    for row in read("SELECT stock_code FROM company_info ORDER BY stock_code")? {
        let code = row[0].to_string();
        let label = company_names.get(&code).cloned().unwrap_or_else(|| code.clone());
        index.upsert_text(Namespace::Company, &code, &code, meta(&code, &label))?;
        if label != code {
            index.upsert_text(Namespace::Company, &format!("{code}#name"), &label, meta(&code, &label))?;
        }
    }
    let catalog = warehouse.catalog();
    index_codes(&index, Namespace::Account, &catalog.category_codes)?;
    index_codes(&index, Namespace::Ratio, &catalog.ratio_codes)?;
    fewshots.index_into(&index)?;
    Ok(index)
}
