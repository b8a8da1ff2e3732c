//! Query policy and the checks that enforce it.

use super::ast::*;
use super::{parse_sql, Span};
use crate::finstore::catalog::TABLE_NAMES;
use crate::finstore::SchemaCatalog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Functions a query may call. Anything else is rejected.
const ALLOWED_FUNCTIONS: &[&str] = &[
    "abs",
    "avg",
    "coalesce",
    "concat",
    "count",
    "date",
    "group_concat",
    "ifnull",
    "iif",
    "instr",
    "length",
    "lower",
    "ltrim",
    "max",
    "min",
    "nullif",
    "replace",
    "round",
    "rtrim",
    "strftime",
    "substr",
    "substring",
    "sum",
    "total",
    "trim",
    "upper",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PolicyConfig", into = "PolicyConfig")]
pub struct QueryPolicy {
    pub require_limit: bool,
    pub max_limit: u64,
    pub require_quarter_condition: bool,
    pub allow_ctes: bool,
    pub allowed_tables: BTreeSet<String>,
}

impl Default for QueryPolicy {
    fn default() -> Self {
        Self {
            require_limit: true,
            max_limit: 1000,
            require_quarter_condition: true,
            allow_ctes: true,
            allowed_tables: TABLE_NAMES.iter().map(|t| t.to_string()).collect(),
        }
    }
}

impl QueryPolicy {
    /// Always true; there is no way to admit writes.
    pub fn read_only(&self) -> bool {
        true
    }

    fn allows_table(&self, name: &str) -> bool {
        self.allowed_tables.iter().any(|t| t.eq_ignore_ascii_case(name))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PolicyConfig {
    require_limit: bool,
    max_limit: u64,
    require_quarter_condition: bool,
    allow_ctes: bool,
    allowed_tables: BTreeSet<String>,
    read_only: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        QueryPolicy::default().into()
    }
}

impl From<QueryPolicy> for PolicyConfig {
    fn from(p: QueryPolicy) -> Self {
        Self {
            require_limit: p.require_limit,
            max_limit: p.max_limit,
            require_quarter_condition: p.require_quarter_condition,
            allow_ctes: p.allow_ctes,
            allowed_tables: p.allowed_tables,
            read_only: true,
        }
    }
}

impl TryFrom<PolicyConfig> for QueryPolicy {
    type Error = String;

    fn try_from(c: PolicyConfig) -> Result<Self, String> {
        if !c.read_only {
            return Err("read_only cannot be disabled".into());
        }
        if c.max_limit == 0 {
            return Err("max_limit must be positive".into());
        }
        Ok(Self {
            require_limit: c.require_limit,
            max_limit: c.max_limit,
            require_quarter_condition: c.require_quarter_condition,
            allow_ctes: c.allow_ctes,
            allowed_tables: c.allowed_tables,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Syntax,
    SingleStatement,
    ReadOnly,
    UnknownTable,
    UnknownColumn,
    UnknownFunction,
    CteNotAllowed,
    QuarterCondition,
    LimitMissing,
    LimitExceeded,
}

impl Rule {
    /// Rewritable violations are fixed by the guard instead of rejected.
    pub fn is_rewritable(self) -> bool {
        matches!(self, Rule::LimitMissing | Rule::LimitExceeded)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Syntax => "syntax",
            Rule::SingleStatement => "single_statement",
            Rule::ReadOnly => "read_only",
            Rule::UnknownTable => "unknown_table",
            Rule::UnknownColumn => "unknown_column",
            Rule::UnknownFunction => "unknown_function",
            Rule::CteNotAllowed => "cte_not_allowed",
            Rule::QuarterCondition => "quarter_condition",
            Rule::LimitMissing => "limit_missing",
            Rule::LimitExceeded => "limit_exceeded",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub location: Option<Span>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some(span) => write!(f, "{} at byte {}: {}", self.rule, span.start, self.message),
            None => write!(f, "{}: {}", self.rule, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Rewritten,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten_sql: Option<String>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>, rewritten: impl FnOnce() -> String) -> Self {
        let (verdict, rewritten_sql) = if violations.iter().any(|v| !v.rule.is_rewritable()) {
            (Verdict::Reject, None)
        } else if violations.is_empty() {
            (Verdict::Pass, None)
        } else {
            (Verdict::Rewritten, Some(rewritten()))
        };
        Self {
            verdict,
            violations,
            rewritten_sql,
        }
    }

    /// The SQL that may be executed: the original on pass, the rewrite on
    /// rewritten, nothing on reject.
    pub fn executable<'a>(&'a self, original: &'a str) -> Option<&'a str> {
        match self.verdict {
            Verdict::Pass => Some(original),
            Verdict::Rewritten => self.rewritten_sql.as_deref(),
            Verdict::Reject => None,
        }
    }

    /// One violation per line.
    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Parses and validates in one step; malformed SQL is a `syntax` rejection.
pub fn check(sql: &str, catalog: &SchemaCatalog, policy: &QueryPolicy) -> ValidationReport {
    match parse_sql(sql) {
        Ok(script) => validate(&script, catalog, policy),
        Err(e) => ValidationReport {
            verdict: Verdict::Reject,
            violations: vec![Violation {
                rule: Rule::Syntax,
                location: Some(Span::new(e.offset, e.offset)),
                message: e.message,
            }],
            rewritten_sql: None,
        },
    }
}

pub fn validate(script: &Script, catalog: &SchemaCatalog, policy: &QueryPolicy) -> ValidationReport {
    let mut v = Validator {
        catalog,
        policy,
        violations: Vec::new(),
    };
    if script.statements.len() != 1 {
        v.push(
            Rule::SingleStatement,
            None,
            format!("expected a single statement, found {}", script.statements.len()),
        );
    }
    for stmt in &script.statements {
        if let Statement::Other { verb, span } = stmt {
            v.push(
                Rule::ReadOnly,
                Some(*span),
                format!("{verb} statements are not allowed"),
            );
        }
    }
    let query = match script.statements.as_slice() {
        [Statement::Query(q)] => q,
        _ => return ValidationReport::from_violations(v.violations, String::new),
    };

    v.query(query, &[], None);

    if !policy.allow_ctes {
        let mut ctes = Vec::new();
        collect_ctes(query, &mut ctes);
        for name in ctes {
            v.push(
                Rule::CteNotAllowed,
                Some(name.span),
                format!("common table expression `{name}` is not allowed"),
            );
        }
    }

    if policy.require_quarter_condition && !has_quarter_condition(query) {
        v.push(
            Rule::QuarterCondition,
            Some(query.span),
            "no condition on a `quarter` column".into(),
        );
    }

    match &query.limit {
        None if policy.require_limit => v.push(
            Rule::LimitMissing,
            Some(Span::new(query.span.end, query.span.end)),
            format!("no LIMIT; appending LIMIT {}", policy.max_limit),
        ),
        Some(l) if l.value > policy.max_limit => v.push(
            Rule::LimitExceeded,
            Some(l.span),
            format!("LIMIT {} exceeds {}; clamping", l.value, policy.max_limit),
        ),
        _ => {}
    }

    ValidationReport::from_violations(v.violations, || {
        let mut fixed = (**query).clone();
        let value = match &query.limit {
            Some(l) => l.value.min(policy.max_limit),
            None => policy.max_limit,
        };
        fixed.limit = Some(Limit {
            value,
            span: Span::default(),
        });
        fixed.to_string()
    })
}

/// True when some comparison, IN or BETWEEN predicate anywhere in the query
/// tests a column named `quarter`.
pub(crate) fn has_quarter_condition(query: &Query) -> bool {
    let is_quarter = |e: &Expr| matches!(e, Expr::Column { name, .. } if name.key() == "quarter");
    let mut found = false;
    query.visit_exprs(&mut |e| {
        found |= match e {
            Expr::Binary { left, op, right } => op.is_comparison() && (is_quarter(left) || is_quarter(right)),
            Expr::InList { expr, .. } | Expr::InSubquery { expr, .. } | Expr::Between { expr, .. } => is_quarter(expr),
            _ => false,
        };
    });
    found
}

fn collect_ctes<'a>(q: &'a Query, out: &mut Vec<&'a Ident>) {
    if let Some(with) = &q.with {
        for cte in &with.ctes {
            out.push(&cte.name);
            collect_ctes(&cte.query, out);
        }
    }
    let mut nested = Vec::new();
    collect_set_queries(&q.body, &mut nested);
    q.visit_exprs(&mut |e| nested.extend(e.subqueries()));
    for n in nested {
        collect_ctes(n, out);
    }
}

fn collect_set_queries<'a>(s: &'a SetExpr, out: &mut Vec<&'a Query>) {
    match s {
        SetExpr::Query(q) => out.push(q),
        SetExpr::SetOperation { left, right, .. } => {
            collect_set_queries(left, out);
            collect_set_queries(right, out);
        }
        SetExpr::Select(sel) => {
            for twj in &sel.from {
                for f in std::iter::once(&twj.relation).chain(twj.joins.iter().map(|j| &j.relation)) {
                    if let TableFactor::Derived { subquery, .. } = f {
                        out.push(subquery);
                    }
                }
            }
        }
    }
}

/// A table visible in a scope. `columns: None` means unknown, which
/// suppresses follow-on column errors after an unresolved table.
struct Relation {
    binding: String,
    columns: Option<Vec<String>>,
}

struct Scope<'a> {
    relations: Vec<Relation>,
    /// Output aliases of the SELECT, usable in later clauses.
    aliases: Vec<String>,
    parent: Option<&'a Scope<'a>>,
}

impl Scope<'_> {
    fn find(&self, binding: &str) -> Option<&Relation> {
        self.relations
            .iter()
            .find(|r| r.binding.eq_ignore_ascii_case(binding))
            .or_else(|| self.parent.and_then(|p| p.find(binding)))
    }

    fn resolves(&self, column: &str) -> bool {
        let here = self.aliases.iter().any(|a| a.eq_ignore_ascii_case(column))
            || self.relations.iter().any(|r| match &r.columns {
                None => true,
                Some(cols) => cols.iter().any(|c| c.eq_ignore_ascii_case(column)),
            });
        here || self.parent.is_some_and(|p| p.resolves(column))
    }
}

/// CTE name and its output columns.
type CteEnv = Vec<(String, Option<Vec<String>>)>;

struct Validator<'a> {
    catalog: &'a SchemaCatalog,
    policy: &'a QueryPolicy,
    violations: Vec<Violation>,
}

impl Validator<'_> {
    fn push(&mut self, rule: Rule, location: Option<Span>, message: String) {
        self.violations.push(Violation {
            rule,
            location,
            message,
        });
    }

    /// Checks a query and returns its output column names.
    fn query(
        &mut self,
        q: &Query,
        ctes: &[(String, Option<Vec<String>>)],
        outer: Option<&Scope>,
    ) -> Option<Vec<String>> {
        let mut env: CteEnv = ctes.to_vec();
        if let Some(with) = &q.with {
            for cte in &with.ctes {
                let declared = (!cte.columns.is_empty()).then(|| cte.columns.iter().map(Ident::key).collect());
                if with.recursive {
                    env.push((cte.name.key(), declared.clone()));
                }
                let produced = self.query(&cte.query, &env, outer);
                if with.recursive {
                    env.pop();
                }
                env.push((cte.name.key(), declared.or(produced)));
            }
        }
        match &q.body {
            SetExpr::Select(s) => self.select(s, &env, outer, &q.order_by),
            body => {
                let out = self.set_expr(body, &env, outer);
                let scope = Scope {
                    relations: vec![Relation {
                        binding: String::new(),
                        columns: out.clone(),
                    }],
                    aliases: Vec::new(),
                    parent: None,
                };
                for item in &q.order_by {
                    self.expr(&item.expr, &scope, &env);
                }
                out
            }
        }
    }

    fn set_expr(&mut self, s: &SetExpr, env: &CteEnv, outer: Option<&Scope>) -> Option<Vec<String>> {
        match s {
            SetExpr::Select(sel) => self.select(sel, env, outer, &[]),
            SetExpr::Query(q) => self.query(q, env, outer),
            SetExpr::SetOperation { left, right, .. } => {
                let out = self.set_expr(left, env, outer);
                self.set_expr(right, env, outer);
                out
            }
        }
    }

    fn select(
        &mut self,
        s: &Select,
        env: &CteEnv,
        outer: Option<&Scope>,
        order_by: &[OrderByItem],
    ) -> Option<Vec<String>> {
        let mut scope = Scope {
            relations: Vec::new(),
            aliases: Vec::new(),
            parent: outer,
        };
        for twj in &s.from {
            let r = self.factor(&twj.relation, env);
            scope.relations.push(r);
            for j in &twj.joins {
                let r = self.factor(&j.relation, env);
                scope.relations.push(r);
            }
        }
        for twj in &s.from {
            for j in &twj.joins {
                match &j.constraint {
                    JoinConstraint::On(e) => self.expr(e, &scope, env),
                    JoinConstraint::Using(cols) => {
                        for c in cols {
                            if !scope.resolves(&c.key()) {
                                self.push(Rule::UnknownColumn, Some(c.span), format!("unknown column `{c}`"));
                            }
                        }
                    }
                    JoinConstraint::None => {}
                }
            }
        }

        let mut output = Some(Vec::new());
        for item in &s.projection {
            match item {
                SelectItem::Wildcard => {
                    for r in &scope.relations {
                        extend(&mut output, r.columns.as_deref());
                    }
                }
                SelectItem::QualifiedWildcard(q) => match scope.relations.iter().find(|r| r.binding == q.key()) {
                    Some(r) => {
                        let cols = r.columns.clone();
                        extend(&mut output, cols.as_deref());
                    }
                    None => {
                        self.push(
                            Rule::UnknownColumn,
                            Some(q.span),
                            format!("unknown table or alias `{q}`"),
                        );
                        output = None;
                    }
                },
                SelectItem::Expr { expr, alias } => {
                    self.expr(expr, &scope, env);
                    let name = match (alias, expr) {
                        (Some(a), _) => a.key(),
                        (None, Expr::Column { name, .. }) => name.key(),
                        (None, e) => e.to_string(),
                    };
                    if let Some(out) = output.as_mut() {
                        out.push(name);
                    }
                }
            }
        }
        scope.aliases = s
            .projection
            .iter()
            .filter_map(|i| match i {
                SelectItem::Expr { alias: Some(a), .. } => Some(a.key()),
                _ => None,
            })
            .collect();
        for e in s.selection.iter().chain(&s.group_by).chain(s.having.iter()) {
            self.expr(e, &scope, env);
        }
        for item in order_by {
            self.expr(&item.expr, &scope, env);
        }
        output
    }

    fn factor(&mut self, f: &TableFactor, env: &CteEnv) -> Relation {
        match f {
            TableFactor::Table { name, alias } => {
                let binding = alias.as_ref().unwrap_or(name).key();
                let key = name.key();
                if let Some((_, cols)) = env.iter().rev().find(|(n, _)| *n == key) {
                    return Relation {
                        binding,
                        columns: cols.clone(),
                    };
                }
                match self.catalog.table(&key) {
                    Some(t) if self.policy.allows_table(&t.name) => Relation {
                        binding,
                        columns: Some(t.columns.iter().map(|c| c.name.to_ascii_lowercase()).collect()),
                    },
                    Some(_) => {
                        self.push(
                            Rule::UnknownTable,
                            Some(name.span),
                            format!("table `{name}` is not allowed"),
                        );
                        Relation { binding, columns: None }
                    }
                    None => {
                        self.push(Rule::UnknownTable, Some(name.span), format!("unknown table `{name}`"));
                        Relation { binding, columns: None }
                    }
                }
            }
            TableFactor::Derived { subquery, alias } => {
                // Derived tables cannot see the enclosing query's tables.
                let columns = self.query(subquery, env, None);
                Relation {
                    binding: alias.as_ref().map(Ident::key).unwrap_or_default(),
                    columns,
                }
            }
        }
    }

    fn expr(&mut self, e: &Expr, scope: &Scope, env: &CteEnv) {
        let mut columns = Vec::new();
        let mut functions = Vec::new();
        e.walk(&mut |x| match x {
            Expr::Column { qualifier, name } => columns.push((qualifier, name)),
            Expr::Function { name, .. } => functions.push(name),
            _ => {}
        });
        for (qualifier, name) in columns {
            match qualifier {
                Some(q) => match scope.find(&q.key()) {
                    None => self.push(
                        Rule::UnknownColumn,
                        Some(q.span),
                        format!("unknown table or alias `{q}`"),
                    ),
                    Some(Relation {
                        columns: Some(cols), ..
                    }) if !cols.contains(&name.key()) => {
                        self.push(
                            Rule::UnknownColumn,
                            Some(name.span),
                            format!("column `{q}.{name}` does not exist"),
                        );
                    }
                    Some(_) => {}
                },
                None if !scope.resolves(&name.key()) => {
                    self.push(
                        Rule::UnknownColumn,
                        Some(name.span),
                        format!("column `{name}` does not exist in any table in scope"),
                    );
                }
                None => {}
            }
        }
        for name in functions {
            if !ALLOWED_FUNCTIONS.contains(&name.key().as_str()) {
                self.push(
                    Rule::UnknownFunction,
                    Some(name.span),
                    format!("function `{}` is not allowed", name.value.to_ascii_uppercase()),
                );
            }
        }
        for q in e.subqueries() {
            self.query(q, env, Some(scope));
        }
    }
}

fn extend(output: &mut Option<Vec<String>>, cols: Option<&[String]>) {
    match (output.as_mut(), cols) {
        (Some(out), Some(cols)) => out.extend(cols.iter().cloned()),
        _ => *output = None,
    }
}
