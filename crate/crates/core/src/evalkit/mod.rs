//! Scoring for generated SQL: exact and component matching, execution
//! accuracy, valid efficiency score and a multiple-choice judge, plus batch
//! evaluation over JSON-lines files.
//!
//! The efficiency score follows the usual benchmark definition,
//! `sqrt(gold_time / pred_time)` for correct predictions, capped at 1.

mod batch;
mod judge;
mod metrics;

pub use batch::{
    aggregate, read_batch, BatchError, EvalItem, EvalRecord, Evaluator, LatencySummary, MetricsReport, Scores,
};
pub use judge::{judge_prompt, mcq_judge, parse_judge_reply, JudgeOutcome, Mcq, McqVerdict, IDK_TEXT};
pub use metrics::{
    clause_sets, component_match, exact_match, execution_accuracy, has_top_level_order, normalize_sql,
    valid_efficiency_score, Clause, Graded, MetricError, REL_TOLERANCE,
};
