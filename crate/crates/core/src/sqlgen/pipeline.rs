use super::prompting::{
    assemble_generation_prompt, correction_bundle, extract_sql, fenced_blocks, parse_correction_reply,
    render_correction_prompt, render_sql_result, DecisionVerdict,
};
use super::trace::{Execution, Exploration, ModelCall, PipelineTrace, Probe, SqlAttempt, Stage, StageTiming};
use super::{retrieve_fewshots, FewShotStore};
use crate::entity::{link_entities, parse_entity_reply, render_entity_prompt, LinkedCandidates};
use crate::finstore::{ExecError, ExecErrorKind, ExecLimits, Warehouse};
use crate::guard::{check, QueryPolicy, Rule, ValidationReport, Verdict};
use crate::llm::{Gateway, LlmError, ModelReply, PromptBundle};
use crate::prompt;
use crate::vecindex::VectorIndex;
use crate::ResultTable;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::sync::Arc;
use std::time::Instant;

/// Marker that opens the exploration prompt.
pub const PROBE_REQUEST_MARKER: &str = "<probe_request>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Correction rounds after the first attempt.
    pub max_iterations: u32,
    pub fewshot_k: usize,
    pub candidate_k: usize,
    /// Run exploratory probe queries before generating.
    pub multistep: bool,
    pub max_probes: usize,
    /// Rows of a result shown to the correction prompt.
    pub correction_rows: usize,
    pub exec: ExecLimits,
    pub policy: QueryPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            fewshot_k: 3,
            candidate_k: 5,
            multistep: false,
            max_probes: 3,
            correction_rows: 20,
            exec: ExecLimits::default(),
            policy: QueryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// The model accepted a result table.
    Answered,
    /// Every correction round was used without acceptance.
    Exhausted,
    /// A model call failed; `trace.error` says why.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_table: Option<ResultTable>,
    pub trace: PipelineTrace,
}

impl PipelineOutcome {
    /// SQL of the last attempt as the model wrote it.
    pub fn final_sql(&self) -> Option<&str> {
        self.trace.attempts.last().map(|a| a.sql.as_str())
    }

    /// What the last attempt actually ran, after any guard rewrite.
    pub fn executed_sql(&self) -> Option<&str> {
        self.trace.attempts.last().and_then(|a| a.executed_sql.as_deref())
    }
}

#[derive(Clone)]
pub struct Pipeline {
    pub warehouse: Arc<Warehouse>,
    pub index: Arc<VectorIndex>,
    pub fewshots: Arc<FewShotStore>,
    pub gateway: Gateway,
    pub config: PipelineConfig,
}

struct Run<'a> {
    p: &'a Pipeline,
    trace: PipelineTrace,
}

impl Run<'_> {
    fn timed<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> T) -> T {
        let started = Instant::now();
        let out = f(self);
        self.trace.timings.push(StageTiming {
            stage,
            elapsed: started.elapsed(),
        });
        out
    }

    fn call(&mut self, stage: Stage, prompt: PromptBundle) -> Result<ModelReply, LlmError> {
        let reply = self.p.gateway.complete(&prompt)?;
        self.trace.model_calls.push(ModelCall {
            stage,
            prompt,
            reply: reply.clone(),
        });
        Ok(reply)
    }

    fn guard(&self, sql: &str) -> ValidationReport {
        check(sql, self.p.warehouse.catalog(), &self.p.config.policy)
    }

    fn execute(&self, sql: &str, report: &ValidationReport) -> (Option<String>, Execution) {
        match report.executable(sql) {
            Some(runnable) => {
                let result = self.p.warehouse.execute_readonly(runnable, &self.p.config.exec);
                (Some(runnable.to_string()), result.into())
            }
            None => {
                let kind = if report.violations.iter().any(|v| v.rule == Rule::Syntax) {
                    ExecErrorKind::Syntax
                } else {
                    ExecErrorKind::Semantic
                };
                (None, Execution::Error(ExecError::new(kind, report.describe())))
            }
        }
    }

    fn explore(&mut self, question: &str, candidates: &LinkedCandidates) -> Result<Exploration, LlmError> {
        let reply = self.call(
            Stage::Explore,
            exploration_prompt(question, candidates, self.p.config.max_probes),
        )?;
        let mut probes = Vec::new();
        for sql in fenced_blocks(&reply.text).into_iter().take(self.p.config.max_probes) {
            let sql = sql.trim().to_string();
            if sql.is_empty() {
                continue;
            }
            let guard = self.guard(&sql);
            let (_, execution) = self.execute(&sql, &guard);
            probes.push(Probe { sql, guard, execution });
        }
        let mut notes = String::new();
        for (i, probe) in probes.iter().enumerate() {
            let shown = render_sql_result(&probe.execution.as_result(), self.p.config.correction_rows);
            let shown = if shown.is_empty() {
                "(no rows)".to_string()
            } else {
                shown
            };
            writeln!(
                notes,
                "Probe {}:\n```sql\n{}\n```\n{}",
                i + 1,
                probe.sql,
                shown.trim_end()
            )
            .unwrap();
        }
        Ok(Exploration { probes, notes })
    }
}

/// Asks for up to `max_probes` small queries that reveal which codes and
/// periods hold data for the question.
pub fn exploration_prompt(question: &str, candidates: &LinkedCandidates, max_probes: usize) -> PromptBundle {
    let generation = assemble_generation_prompt(question, candidates, &[], None);
    let body = generation.messages[0]
        .content
        .trim_end_matches("Return the SQL query for the task in a ```sql code block.")
        .trim_end();
    let text = format!(
        "{PROBE_REQUEST_MARKER}\n{body}\nBefore answering, write at most {max_probes} short exploratory SQL \
         queries that check which codes, companies and periods have data for this task. Put each query in its \
         own ```sql code block.\n</probe_request>"
    );
    PromptBundle::user(prompt::schema_description(), text)
}

impl Pipeline {
    pub fn new(
        warehouse: Arc<Warehouse>,
        index: Arc<VectorIndex>,
        fewshots: Arc<FewShotStore>,
        gateway: Gateway,
        config: PipelineConfig,
    ) -> Self {
        Self {
            warehouse,
            index,
            fewshots,
            gateway,
            config,
        }
    }

    /// Answers one question. Model failures end the run with
    /// [`Status::Failed`]; query failures feed the correction loop.
    pub fn run(&self, question: &str) -> PipelineOutcome {
        self.gateway.provider().start_session();
        let mut run = Run {
            p: self,
            trace: PipelineTrace::new(question, self.config.max_iterations),
        };
        let (status, final_table) = match run.drive(question) {
            Ok(done) => done,
            Err(e) => {
                tracing::warn!(error = %e, "pipeline aborted");
                run.trace.error = Some(e.to_string());
                (Status::Failed, None)
            }
        };
        PipelineOutcome {
            status,
            final_table,
            trace: run.trace,
        }
    }
}

impl Run<'_> {
    fn drive(&mut self, question: &str) -> Result<(Status, Option<ResultTable>), LlmError> {
        let cfg = self.p.config.clone();

        let reply = self.timed(Stage::Extract, |r| {
            r.call(Stage::Extract, render_entity_prompt(question))
        })?;
        match parse_entity_reply(&reply.text) {
            Ok(parsed) => {
                self.trace.entities = parsed.entities;
                self.trace.warnings.extend(parsed.warnings);
            }
            Err(e) => self.trace.warnings.push(format!("entity extraction: {e}")),
        }

        let candidates = self.timed(Stage::Link, |r| {
            link_entities(&r.trace.entities, &r.p.index, cfg.candidate_k)
        });
        self.trace.candidates = candidates.clone();

        if cfg.multistep {
            let exploration = self.timed(Stage::Explore, |r| r.explore(question, &candidates))?;
            self.trace.exploration = Some(exploration);
        }

        let fewshots = self.timed(Stage::Retrieve, |r| {
            retrieve_fewshots(question, &r.p.index, &r.p.fewshots, cfg.fewshot_k)
        });
        self.trace.fewshots = fewshots.clone();

        let generation = self.timed(Stage::Assemble, |r| {
            let notes = r.trace.exploration.as_ref().map(|e| e.notes.as_str());
            assemble_generation_prompt(question, &candidates, &fewshots, notes)
        });
        let reply = self.timed(Stage::Generate, |r| r.call(Stage::Generate, generation.clone()))?;
        let mut last_reply = reply.text;
        let mut sql = match extract_sql(&last_reply) {
            Ok(s) => s,
            Err(e) => {
                self.trace.warnings.push(format!("generation: {e}"));
                String::new()
            }
        };

        for iteration in 0..=cfg.max_iterations {
            let guard = self.timed(Stage::Guard, |r| r.guard(&sql));
            let (executed_sql, execution) = self.timed(Stage::Execute, |r| r.execute(&sql, &guard));
            if guard.verdict == Verdict::Rewritten {
                tracing::debug!(iteration, "guard rewrote the query");
            }
            let mut attempt = SqlAttempt {
                iteration,
                sql: sql.clone(),
                guard,
                executed_sql,
                execution,
                correction: None,
            };
            if iteration == cfg.max_iterations {
                self.trace.attempts.push(attempt);
                return Ok((Status::Exhausted, None));
            }

            let outcome = attempt.execution.as_result();
            let bundle = correction_bundle(
                &generation,
                &last_reply,
                render_correction_prompt(&outcome, cfg.correction_rows),
            );
            let reply = match self.timed(Stage::Correct, |r| r.call(Stage::Correct, bundle)) {
                Ok(r) => r,
                Err(e) => {
                    self.trace.attempts.push(attempt);
                    return Err(e);
                }
            };
            let mut decision = parse_correction_reply(&reply.text);
            if decision.verdict == DecisionVerdict::Yes && outcome.is_err() {
                decision.verdict = DecisionVerdict::No;
                decision.warning = Some("accepted a failed query; treated as no".to_string());
            }
            let accepted = decision.verdict == DecisionVerdict::Yes;
            let next = decision.new_sql.clone();
            attempt.correction = Some(decision);
            self.trace.attempts.push(attempt);
            if accepted {
                return Ok((Status::Answered, outcome.ok()));
            }
            if let Some(next) = next {
                sql = next;
            }
            last_reply = reply.text;
        }
        unreachable!("the loop returns on its last iteration")
    }
}
