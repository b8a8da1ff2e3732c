//! Seeded SQL corpora: mutations the guard must reject, and well-formed
//! SELECTs for round-trip and rewrite checks.

use crate::finstore::SchemaCatalog;
use crate::golden::GOLDEN_SQL;
use crate::guard::Rule;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzCase {
    pub family: &'static str,
    pub sql: String,
    /// A rule the rejection must cite.
    pub expect: Rule,
}

const WRITES: &[&str] = &[
    "DELETE FROM {t}",
    "DELETE FROM {t} WHERE quarter = 3",
    "UPDATE {t} SET stock_code = 'X' WHERE quarter = 1",
    "INSERT INTO {t} VALUES (1)",
    "INSERT INTO {t} SELECT * FROM {t} WHERE quarter = 2",
    "DROP TABLE {t}",
    "ALTER TABLE {t} ADD COLUMN x INTEGER",
    "CREATE TABLE {t}_copy AS SELECT * FROM {t}",
    "REPLACE INTO {t} VALUES (1)",
    "TRUNCATE TABLE {t}",
    "CREATE INDEX ix ON {t} (stock_code)",
    "WITH x AS (SELECT 1) DELETE FROM {t}",
];

const GLOBAL_WRITES: &[&str] = &[
    "ATTACH DATABASE 'other.db' AS other",
    "DETACH DATABASE other",
    "PRAGMA writable_schema = ON",
    "VACUUM",
    "BEGIN",
    "COMMIT",
    "ROLLBACK",
    "GRANT ALL ON company_info TO public",
];

const BAD_FUNCTIONS: &[&str] = &[
    "load_extension",
    "readfile",
    "writefile",
    "sqlite_version",
    "random",
    "eval",
    "pg_sleep",
];

fn strip_quarter(sql: &str) -> String {
    sql.lines()
        .filter(|l| !l.trim_start().starts_with("AND") || !l.contains("quarter"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Malformed or forbidden variants of the golden query and the schema,
/// every one of which the guard must reject. Deterministic for a seed.
pub fn mutation_corpus(catalog: &SchemaCatalog, seed: u64) -> Vec<FuzzCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let tables: Vec<&str> = catalog.table_names().collect();

    for t in &tables {
        for w in WRITES {
            out.push(FuzzCase {
                family: "write",
                sql: w.replace("{t}", t),
                expect: Rule::ReadOnly,
            });
        }
    }
    for w in GLOBAL_WRITES {
        out.push(FuzzCase {
            family: "write",
            sql: w.to_string(),
            expect: Rule::ReadOnly,
        });
    }

    for w in WRITES.iter().take(6) {
        let t = tables.choose(&mut rng).unwrap();
        out.push(FuzzCase {
            family: "stacked",
            sql: format!("{GOLDEN_SQL};\n{}", w.replace("{t}", t)),
            expect: Rule::SingleStatement,
        });
    }
    out.push(FuzzCase {
        family: "stacked",
        sql: format!("{GOLDEN_SQL}; {GOLDEN_SQL}"),
        expect: Rule::SingleStatement,
    });

    // A cut inside the first CTE leaves a parenthesis open.
    let open = GOLDEN_SQL.find('(').unwrap() + 1;
    let close = GOLDEN_SQL.find("),").unwrap();
    for _ in 0..70 {
        let mut cut = rng.gen_range(open..close);
        while !GOLDEN_SQL.is_char_boundary(cut) {
            cut -= 1;
        }
        out.push(FuzzCase {
            family: "truncated",
            sql: GOLDEN_SQL[..cut].to_string(),
            expect: Rule::Syntax,
        });
    }

    for (from, to) in [
        ("financial_ratio fr", "financial_ratios fr"),
        ("company_info ci", "companies ci"),
        ("FROM industry_financial_ratio", "FROM industry_ratio"),
        ("FROM industry_financial_ratio", "FROM main.industry_financial_ratio"),
    ] {
        out.push(FuzzCase {
            family: "unknown_table",
            sql: GOLDEN_SQL.replacen(from, to, 1),
            expect: if to.contains('.') {
                Rule::Syntax
            } else {
                Rule::UnknownTable
            },
        });
    }

    let columns = [
        "fr.stock_code",
        "ci.industry",
        "fr.year",
        "fr.data",
        "ci.is_bank",
        "b.credit_growth_yoy",
    ];
    for c in columns {
        for suffix in ["_x", "2", "_total"] {
            out.push(FuzzCase {
                family: "unknown_column",
                sql: GOLDEN_SQL.replacen(c, &format!("{c}{suffix}"), 1),
                expect: Rule::UnknownColumn,
            });
        }
    }

    for f in BAD_FUNCTIONS {
        out.push(FuzzCase {
            family: "unknown_function",
            sql: GOLDEN_SQL.replacen("fr.data AS", &format!("{f}(fr.data) AS"), 1),
            expect: Rule::UnknownFunction,
        });
    }

    out.push(FuzzCase {
        family: "quarter",
        sql: strip_quarter(GOLDEN_SQL),
        expect: Rule::QuarterCondition,
    });
    for t in ["financial_statement", "financial_ratio", "industry_financial_statement"] {
        out.push(FuzzCase {
            family: "quarter",
            sql: format!("SELECT stock_code, data FROM {t} WHERE year = 2023 LIMIT 10"),
            expect: Rule::QuarterCondition,
        });
    }

    let garbage = [
        "SELECT , 1",
        "SELECT FROM",
        "SELECT * FROM",
        "SELECT (1",
        "SELECT 1 +",
        "SELECT 'open",
        "))",
        "",
    ];
    for g in garbage {
        out.push(FuzzCase {
            family: "garbage",
            sql: g.to_string(),
            expect: Rule::Syntax,
        });
    }
    out
}

/// Random single-table or two-table SELECTs over the catalog, with and
/// without LIMIT, all of which parse.
pub fn select_corpus(catalog: &SchemaCatalog, seed: u64, n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_quarter: Vec<_> = catalog
        .tables
        .iter()
        .filter(|t| t.column("quarter").is_some())
        .collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = with_quarter.choose(&mut rng).unwrap();
        let width = rng.gen_range(1..=4);
        let picks: Vec<String> = t
            .columns
            .choose_multiple(&mut rng, width)
            .map(|c| format!("t.{}", c.name))
            .collect();
        let mut sql = format!("SELECT {} FROM {} t", picks.join(", "), t.name);

        if t.name != "company_info" && rng.gen_bool(0.3) && t.column("stock_code").is_some() {
            sql.push_str(" JOIN company_info ci ON t.stock_code = ci.stock_code");
        }
        let q = rng.gen_range(0..=4);
        let mut preds = vec![match rng.gen_range(0..3) {
            0 => format!("t.quarter = {q}"),
            1 => format!("t.quarter IN ({q}, {})", (q + 1) % 5),
            _ => format!("t.quarter BETWEEN 1 AND {}", q.max(1)),
        }];
        if rng.gen_bool(0.5) {
            preds.push(format!("t.year >= {}", rng.gen_range(2018..2024)));
        }
        if rng.gen_bool(0.3) {
            preds.push("NOT (t.year < 2000 OR t.year > 2100)".to_string());
        }
        sql.push_str(&format!(" WHERE {}", preds.join(" AND ")));
        if rng.gen_bool(0.3) {
            let g = &picks[0];
            sql = format!("SELECT {g}, COUNT(*) AS n{}", &sql[sql.find(" FROM").unwrap()..]);
            sql.push_str(&format!(" GROUP BY {g} HAVING COUNT(*) > {}", rng.gen_range(0..3)));
        }
        if rng.gen_bool(0.5) {
            let dir = if rng.gen_bool(0.5) { "ASC" } else { "DESC" };
            sql.push_str(&format!(" ORDER BY 1 {dir}"));
        }
        match i % 3 {
            0 => {}
            1 => sql.push_str(&format!(" LIMIT {}", rng.gen_range(1..=500))),
            _ => sql.push_str(&format!(" LIMIT {}", rng.gen_range(1001..100_000))),
        }
        if rng.gen_bool(0.2) {
            sql = sql.to_lowercase();
        }
        out.push(sql);
    }
    out
}
