//! Question-to-SQL generation: index construction, prompt assembly, the
//! guarded execution loop and its trace.

mod fewshot;
mod index;
mod pipeline;
mod prompting;
mod trace;

pub use fewshot::{retrieve_fewshots, FewShotError, FewShotExample, FewShotStore};
pub use index::{build_index, BuildError};
pub use pipeline::{exploration_prompt, Pipeline, PipelineConfig, PipelineOutcome, Status, PROBE_REQUEST_MARKER};
pub use prompting::{
    assemble_generation_prompt, correction_bundle, extract_sql, parse_correction_reply, render_correction_prompt,
    render_sql_result, CorrectionDecision, DecisionVerdict, NoSqlError,
};
pub use trace::{Execution, Exploration, ModelCall, PipelineTrace, Probe, SqlAttempt, Stage, StageTiming};
