use crate::guard::ast::Query;
use crate::guard::parse_query;
use crate::{ResultTable, Value};
use std::collections::BTreeSet;

/// Relative tolerance for numeric cells in execution accuracy.
pub const REL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("execution times must be positive (pred {pred}, gold {gold})")]
    NonPositiveTime { pred: f64, gold: f64 },
}

/// A metric value plus the reason it was forced to its floor, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Graded<T> {
    pub value: T,
    pub warning: Option<String>,
}

impl<T> Graded<T> {
    fn ok(value: T) -> Self {
        Self { value, warning: None }
    }

    fn floor(value: T, warning: String) -> Self {
        Self {
            value,
            warning: Some(warning),
        }
    }
}

fn parse_pair(pred: &str, gold: &str) -> Result<(Query, Query), String> {
    let p = parse_query(pred).map_err(|e| format!("prediction does not parse: {e}"))?;
    let g = parse_query(gold).map_err(|e| format!("gold does not parse: {e}"))?;
    Ok((p, g))
}

/// Canonical form used for exact matching: keywords and identifiers
/// case-folded, whitespace collapsed, no trailing semicolon.
pub fn normalize_sql(sql: &str) -> Option<String> {
    parse_query(sql).ok().map(|q| q.to_string())
}

pub fn exact_match(pred: &str, gold: &str) -> Graded<bool> {
    match parse_pair(pred, gold) {
        Ok((p, g)) => Graded::ok(p.to_string() == g.to_string()),
        Err(w) => Graded::floor(false, w),
    }
}

/// The six clause kinds compared by component matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Clause {
    Select,
    From,
    Where,
    GroupBy,
    OrderBy,
    Limit,
}

/// Clause sets of the outer query; absent clauses are left out.
pub fn clause_sets(q: &Query) -> Vec<(Clause, BTreeSet<String>)> {
    let s = q.body.leftmost_select();
    let mut out = Vec::new();
    let set = |items: Vec<String>| items.into_iter().collect::<BTreeSet<_>>();

    out.push((
        Clause::Select,
        set(s.projection.iter().map(|i| i.to_string()).collect()),
    ));
    let tables: Vec<String> = s
        .from
        .iter()
        .flat_map(|t| std::iter::once(t.relation.to_string()).chain(t.joins.iter().map(|j| j.relation.to_string())))
        .collect();
    if !tables.is_empty() {
        out.push((Clause::From, set(tables)));
    }
    if let Some(w) = &s.selection {
        out.push((
            Clause::Where,
            set(w.conjuncts().iter().map(|c| c.to_string()).collect()),
        ));
    }
    if !s.group_by.is_empty() {
        out.push((Clause::GroupBy, set(s.group_by.iter().map(|e| e.to_string()).collect())));
    }
    if !q.order_by.is_empty() {
        out.push((Clause::OrderBy, set(q.order_by.iter().map(|o| o.to_string()).collect())));
    }
    if let Some(l) = &q.limit {
        out.push((Clause::Limit, BTreeSet::from([l.value.to_string()])));
    }
    out
}

/// Share of the gold query's clause sets that the prediction reproduces.
pub fn component_match(pred: &str, gold: &str) -> Graded<f64> {
    let (p, g) = match parse_pair(pred, gold) {
        Ok(pair) => pair,
        Err(w) => return Graded::floor(0.0, w),
    };
    let pred_sets = clause_sets(&p);
    let gold_sets = clause_sets(&g);
    let matched = gold_sets
        .iter()
        .filter(|(kind, set)| pred_sets.iter().any(|(k, s)| k == kind && s == set))
        .count();
    Graded::ok(matched as f64 / gold_sets.len() as f64)
}

fn cells_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Null, Value::Null) => true,
        (Value::Null, _) | (_, Value::Null) | (Value::Text(_), _) | (_, Value::Text(_)) => false,
        _ => {
            let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            x == y || (x - y).abs() <= REL_TOLERANCE * x.abs().max(y.abs())
        }
    }
}

fn rows_equal(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cells_equal(x, y))
}

/// Prediction columns reordered to the gold layout: by name when both
/// tables carry the same set of names, otherwise by position.
fn aligned_rows(pred: &ResultTable, gold: &ResultTable) -> Option<Vec<Vec<Value>>> {
    if pred.columns.len() != gold.columns.len() {
        return None;
    }
    let lower = |cols: &[String]| cols.iter().map(|c| c.to_lowercase()).collect::<Vec<_>>();
    let (pn, gn) = (lower(&pred.columns), lower(&gold.columns));
    let names_align = pn.iter().collect::<BTreeSet<_>>() == gn.iter().collect::<BTreeSet<_>>()
        && pn.iter().collect::<BTreeSet<_>>().len() == pn.len();
    let order: Vec<usize> = if names_align {
        gn.iter().map(|g| pn.iter().position(|p| p == g).unwrap()).collect()
    } else {
        (0..pred.columns.len()).collect()
    };
    Some(
        pred.rows
            .iter()
            .map(|r| {
                order
                    .iter()
                    .map(|&i| r.get(i).cloned().unwrap_or(Value::Null))
                    .collect()
            })
            .collect(),
    )
}

/// Whether the prediction holds the same rows as the gold table. Row order
/// only matters when `ordered` is set.
pub fn execution_accuracy(pred: &ResultTable, gold: &ResultTable, ordered: bool) -> bool {
    let Some(rows) = aligned_rows(pred, gold) else {
        return false;
    };
    if rows.len() != gold.rows.len() {
        return false;
    }
    if ordered {
        return rows.iter().zip(&gold.rows).all(|(p, g)| rows_equal(p, g));
    }
    let mut used = vec![false; rows.len()];
    gold.rows.iter().all(
        |g| match rows.iter().enumerate().position(|(i, p)| !used[i] && rows_equal(p, g)) {
            Some(i) => {
                used[i] = true;
                true
            }
            None => false,
        },
    )
}

/// `sqrt(gold_time / pred_time)` for a correct prediction, else 0. Capped
/// at 1 so a prediction faster than gold scores the same as an equal one.
pub fn valid_efficiency_score(ex: bool, pred_time: f64, gold_time: f64) -> Result<f64, MetricError> {
    if !(pred_time > 0.0 && gold_time > 0.0) {
        return Err(MetricError::NonPositiveTime {
            pred: pred_time,
            gold: gold_time,
        });
    }
    Ok(if ex {
        (gold_time / pred_time).sqrt().min(1.0)
    } else {
        0.0
    })
}

/// Whether the gold SQL fixes its row order with a top-level ORDER BY.
pub fn has_top_level_order(sql: &str) -> bool {
    parse_query(sql).is_ok_and(|q| !q.order_by.is_empty())
}
