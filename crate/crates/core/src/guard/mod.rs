//! Parsing and policy enforcement for model-generated SQL. Nothing reaches
//! the warehouse without passing through [`check`] or [`validate`].

pub mod ast;
mod lexer;
mod parser;
mod validate;

pub use ast::{Script, Span, Statement};
pub use validate::{check, validate, QueryPolicy, Rule, ValidationReport, Verdict, Violation};

/// Malformed SQL. `offset` is a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

pub fn parse_sql(text: &str) -> Result<Script, SyntaxError> {
    parser::parse(text)
}

/// Parses a script that must hold exactly one query.
pub fn parse_query(text: &str) -> Result<ast::Query, SyntaxError> {
    let script = parse_sql(text)?;
    match <[Statement; 1]>::try_from(script.statements) {
        Ok([Statement::Query(q)]) => Ok(*q),
        Ok([Statement::Other { span, verb }]) => Err(SyntaxError::new(span.start, format!("{verb} is not a query"))),
        Err(v) => Err(SyntaxError::new(
            0,
            format!("expected one statement, found {}", v.len()),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = include_str!("../../assets/golden/credit_growth.sql");

    fn roundtrip(sql: &str) {
        let a = parse_sql(sql).unwrap_or_else(|e| panic!("{sql}: {e}"));
        let printed = a.to_string();
        let b = parse_sql(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        assert_eq!(a, b, "{printed}");
        assert_eq!(printed, b.to_string());
    }

    #[test]
    fn golden_shape() {
        let q = parse_query(GOLDEN).unwrap();
        assert_eq!(q.with.as_ref().unwrap().ctes.len(), 2);
        assert!(matches!(q.body, ast::SetExpr::Select(_)));
        assert_eq!(q.order_by.len(), 1);
        assert_eq!(q.order_by[0].asc, Some(false));
        assert!(q.limit.is_none());
        roundtrip(GOLDEN);
    }

    #[test]
    fn statement_count_is_exposed() {
        let s = parse_sql("SELECT * FROM t; DROP TABLE t").unwrap();
        assert_eq!(s.statements.len(), 2);
        assert!(matches!(&s.statements[1], Statement::Other { verb, .. } if verb == "DROP"));
    }

    #[test]
    fn select_from_is_syntax_error() {
        let e = parse_sql("SELECT FROM").unwrap_err();
        assert_eq!(e.offset, 7);
    }

    #[test]
    fn other_syntax_errors() {
        for bad in [
            "",
            ";",
            "SELECT",
            "SELECT a FROM",
            "SELECT a FROM t WHERE",
            "SELECT (a FROM t",
            "SELECT a FROM t LIMIT -1",
            "SELECT a FROM t GROUP a",
            "SELECT ROW_NUMBER() OVER (ORDER BY a) FROM t",
            "SELECT a FROM s.t",
            "SELECT CASE END",
            "42",
        ] {
            assert!(parse_sql(bad).is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn with_delete_is_not_a_query() {
        let s = parse_sql("WITH x AS (SELECT 1) DELETE FROM t").unwrap();
        assert!(matches!(&s.statements[0], Statement::Other { verb, .. } if verb == "DELETE"));
    }

    #[test]
    fn precedence_roundtrips() {
        for sql in [
            "SELECT a + b * c, (a + b) * c, a - (b - c), -(a + 1), - -a FROM t",
            "SELECT * FROM t WHERE NOT a = 1 AND (b OR c) AND d IS NOT NULL",
            "SELECT * FROM t WHERE (a = b) IS NULL AND x NOT BETWEEN 1 AND 2 + 3",
            "SELECT * FROM t WHERE a IN (1, 2) OR b NOT IN (SELECT c FROM u) OR NOT EXISTS (SELECT 1)",
            "SELECT CASE WHEN a > 0 THEN 'p' ELSE 'n' END AS s, CAST(a AS DECIMAL(10,2)) FROM t",
            "SELECT COUNT(*), COUNT(DISTINCT a), x.* FROM t x LEFT OUTER JOIN u USING (k) CROSS JOIN v",
            "SELECT a FROM t UNION ALL (SELECT b FROM u EXCEPT SELECT c FROM v) ORDER BY 1 LIMIT 5 OFFSET 2",
            "SELECT \"Odd Name\" FROM (SELECT 1 AS \"Odd Name\") AS d WHERE 'it''s' LIKE '%s'",
            "SELECT a || b FROM t WHERE a = b = c",
        ] {
            roundtrip(sql);
        }
    }

    #[test]
    fn canonical_print_normalizes_layout() {
        let a = parse_query("select  A as x\nfrom T  where quarter=3").unwrap();
        assert_eq!(a.to_string(), "SELECT a AS x FROM t WHERE quarter = 3");
    }
}
