//! Natural-language questions over a star-schema financial statement
//! warehouse, answered by an LLM-driven SQL pipeline with a read-only guard
//! and a self-correction loop, plus the metrics used to evaluate it.

pub mod entity;
pub mod evalkit;
pub mod exec;
pub mod finstore;
pub mod golden;
pub mod guard;
pub mod llm;
pub mod prompt;
pub mod sqlgen;
pub mod table;
pub mod testkit;
pub mod vecindex;

mod util;

pub use exec::Strategy;
pub use table::{ResultTable, Value};
