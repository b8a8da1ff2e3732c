use super::{CorrectionDecision, FewShotExample};
use crate::entity::{ExtractedEntities, LinkedCandidates};
use crate::finstore::warehouse::duration_ms;
use crate::finstore::ExecError;
use crate::guard::ValidationReport;
use crate::llm::{Matcher, ModelReply, PromptBundle, ScriptRule, ScriptedProvider};
use crate::ResultTable;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Extract,
    Link,
    Explore,
    Retrieve,
    Assemble,
    Generate,
    Guard,
    Execute,
    Correct,
}

/// Result of running one query: a table or the reason there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Table(ResultTable),
    Error(ExecError),
}

impl Execution {
    pub fn table(&self) -> Option<&ResultTable> {
        match self {
            Execution::Table(t) => Some(t),
            Execution::Error(_) => None,
        }
    }

    pub fn as_result(&self) -> Result<ResultTable, ExecError> {
        match self {
            Execution::Table(t) => Ok(t.clone()),
            Execution::Error(e) => Err(e.clone()),
        }
    }
}

impl From<Result<ResultTable, ExecError>> for Execution {
    fn from(r: Result<ResultTable, ExecError>) -> Self {
        match r {
            Ok(t) => Execution::Table(t),
            Err(e) => Execution::Error(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlAttempt {
    pub iteration: u32,
    /// SQL as extracted from the model reply.
    pub sql: String,
    pub guard: ValidationReport,
    /// What actually ran: the SQL or its rewrite. Absent when the guard
    /// rejected it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_sql: Option<String>,
    pub execution: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub sql: String,
    pub guard: ValidationReport,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub probes: Vec<Probe>,
    /// Rendered probe results as appended to the generation prompt.
    pub notes: String,
}

/// One completion call: what was sent and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCall {
    pub stage: Stage,
    pub prompt: PromptBundle,
    pub reply: ModelReply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question: String,
    pub entities: ExtractedEntities,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub candidates: LinkedCandidates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<Exploration>,
    pub fewshots: Vec<FewShotExample>,
    pub attempts: Vec<SqlAttempt>,
    pub model_calls: Vec<ModelCall>,
    pub timings: Vec<StageTiming>,
    pub max_iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PipelineTrace {
    pub fn new(question: &str, max_iterations: u32) -> Self {
        Self {
            question: question.to_string(),
            entities: ExtractedEntities::default(),
            warnings: Vec::new(),
            candidates: LinkedCandidates::default(),
            exploration: None,
            fewshots: Vec::new(),
            attempts: Vec::new(),
            model_calls: Vec::new(),
            timings: Vec::new(),
            max_iterations,
            error: None,
        }
    }

    pub fn model_replies(&self) -> impl Iterator<Item = &ModelReply> {
        self.model_calls.iter().map(|c| &c.reply)
    }

    /// Copy with every latency and stage timing zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut t = self.clone();
        for c in &mut t.model_calls {
            c.reply.latency = Duration::ZERO;
        }
        for s in &mut t.timings {
            s.elapsed = Duration::ZERO;
        }
        t
    }

    /// A provider that answers with this trace's replies in call order.
    pub fn replay_provider(&self) -> ScriptedProvider {
        ScriptedProvider::new(vec![ScriptRule {
            matcher: Matcher::Regex(Regex::new("(?s).*").expect("static regex")),
            responses: self.model_calls.iter().map(|c| c.reply.text.clone()).collect(),
        }])
    }
}
