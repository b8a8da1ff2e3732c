//! The star-schema financial warehouse: schema catalog, account mapping,
//! ingestion, deterministic fixtures and guarded read-only execution.

pub mod catalog;
pub mod fixture;
pub mod ingest;
pub mod mapping;
pub mod warehouse;

pub use catalog::{CodeInfo, ColumnDef, SchemaCatalog, SemanticType, TableDef};
pub use fixture::{roster, seed_fixture, FixtureCompany, FixtureProfile, ProfileName};
pub use ingest::{IngestReport, RawStatementRecord, RejectReason, Rejection};
pub use mapping::{AccountMapping, FormatKind, MappingEntry, MappingError};
pub use warehouse::{ExecError, ExecErrorKind, ExecLimits, Warehouse, DATABASE_URL_ENV};

use serde::{Deserialize, Serialize};

/// Reporting period within a year; 0 is the annual report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Quarter(u8);

impl Quarter {
    pub const ANNUAL: Quarter = Quarter(0);

    pub fn new(q: i32) -> Option<Self> {
        (0..=4).contains(&q).then_some(Quarter(q as u8))
    }

    pub fn get(self) -> i32 {
        self.0 as i32
    }

    pub fn is_annual(self) -> bool {
        self.0 == 0
    }
}

impl TryFrom<i32> for Quarter {
    type Error = String;

    fn try_from(q: i32) -> Result<Self, Self::Error> {
        Quarter::new(q).ok_or_else(|| format!("quarter {q} outside 0..=4"))
    }
}

impl From<Quarter> for i32 {
    fn from(q: Quarter) -> i32 {
        q.get()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("database error: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("delimited file error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("mapping does not cover the `{0}` statement format")]
    FormatNotCovered(FormatKind),
    #[error("input is missing required column `{0}`")]
    MissingColumn(String),
    #[error("unrecognized connection string `{0}`")]
    BadConnectionString(String),
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("unknown fixture profile `{0}` (expected train or test)")]
    UnknownProfile(String),
    #[error("{0}")]
    Fixture(String),
}
