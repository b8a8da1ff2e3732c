//! The reference question, its query and expected result, plus scripted
//! provider runs built around them. Used by tests, benches and demos.

use crate::entity::ExtractedEntities;

pub const GOLDEN_QUESTION: &str = "Banks with credit growth higher than average in Q3 2023";

pub const GOLDEN_SQL: &str = include_str!("../assets/golden/credit_growth.sql");

/// Leading rows of the reference result: stock code, year, quarter, credit
/// growth and the industry mean.
pub const GOLDEN_ROWS: [(&str, i64, i64, f64, f64); 4] = [
    ("HDB", 2023, 3, 0.64, 0.24),
    ("VPB", 2023, 3, 0.52, 0.24),
    ("MSB", 2023, 3, 0.35, 0.24),
    ("KLB", 2023, 3, 0.34, 0.24),
];

/// The worked example of the entity extraction template.
pub const EXAMPLE_TASK: &str = "Net Income YoY and ROE 4 nearest quarter of HPG in 2023";

pub const EXAMPLE_ENTITY_REPLY: &str = include_str!("../assets/golden/entity_example_reply.txt");

pub fn example_entities() -> ExtractedEntities {
    ExtractedEntities {
        industry: vec![],
        company_name: vec!["HPG".into()],
        financial_statement_account: vec!["Net Income".into()],
        financial_ratio: vec!["Net Income YoY".into(), "ROE 4 nearest quarter".into()],
    }
}

/// Entity reply, reference query, then acceptance.
pub const GOLDEN_SCRIPT: &str = include_str!("../assets/scripts/golden.script");

/// A malformed first query, corrected once.
pub const BROKEN_THEN_FIXED_SCRIPT: &str = include_str!("../assets/scripts/broken_then_fixed.script");

/// Correction rounds that never accept.
pub const ALWAYS_NO_SCRIPT: &str = include_str!("../assets/scripts/always_no.script");
