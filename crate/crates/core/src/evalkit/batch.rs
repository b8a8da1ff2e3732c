use super::judge::{mcq_judge, JudgeOutcome, Mcq, McqVerdict};
use super::metrics::{
    component_match, exact_match, execution_accuracy, has_top_level_order, valid_efficiency_score, MetricError,
};
use crate::finstore::ExecError;
use crate::llm::Gateway;
use crate::sqlgen::{Pipeline, PipelineOutcome, Status};
use crate::{ResultTable, Strategy};
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use std::time::{Duration, Instant};

/// Timed executions per query when measuring efficiency; the median counts.
const TIMING_RUNS: usize = 3;

/// One line of a batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalItem {
    pub question: String,
    pub gold_sql: String,
    /// Computed from `gold_sql` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_table: Option<ResultTable>,
    pub mcqs: Vec<Mcq>,
    /// Whether row order counts; defaults to whether the gold SQL has a
    /// top-level ORDER BY.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordered: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("empty batch")]
    Empty,
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// Parses a JSON-lines batch. Blank lines are skipped.
pub fn read_batch(text: &str) -> Result<Vec<EvalItem>, BatchError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| BatchError::Line { line: i + 1, message };
        let item: EvalItem = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if !(1..=5).contains(&item.mcqs.len()) {
            return Err(err(format!("{} mcqs; expected 1 to 5", item.mcqs.len())));
        }
        for (j, m) in item.mcqs.iter().enumerate() {
            m.check().map_err(|e| err(format!("mcq {}: {e}", j + 1)))?;
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(BatchError::Empty);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub em: bool,
    pub cm: f64,
    pub ex: bool,
    pub ves: f64,
    pub mcq: Vec<McqVerdict>,
}

impl Scores {
    pub fn mcq_correct(&self) -> usize {
        self.mcq.iter().filter(|v| v.is_correct()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item: EvalItem,
    pub prediction: PipelineOutcome,
    pub scores: Scores,
    #[serde(with = "crate::finstore::warehouse::duration_ms")]
    pub latency: Duration,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub records: usize,
    pub em: f64,
    pub cm: f64,
    pub ex: f64,
    pub ves: f64,
    /// Correct answers over all questions in the batch.
    pub mcq_accuracy: f64,
    pub mcq_total: usize,
    pub answered: usize,
    pub exhausted: usize,
    pub failed: usize,
    pub latency: LatencySummary,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Means of the per-record scores; MCQ accuracy pools every question.
pub fn aggregate(records: &[EvalRecord]) -> Result<MetricsReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyBatch);
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&Scores) -> f64| records.iter().map(|r| f(&r.scores)).sum::<f64>() / n;
    let mcq_total: usize = records.iter().map(|r| r.scores.mcq.len()).sum();
    let mcq_correct: usize = records.iter().map(|r| r.scores.mcq_correct()).sum();
    let count = |s: Status| records.iter().filter(|r| r.prediction.status == s).count();
    let mut lat: Vec<f64> = records.iter().map(|r| r.latency.as_secs_f64() * 1000.0).collect();
    lat.sort_by(f64::total_cmp);
    Ok(MetricsReport {
        records: records.len(),
        em: mean(&|s| f64::from(u8::from(s.em))),
        cm: mean(&|s| s.cm),
        ex: mean(&|s| f64::from(u8::from(s.ex))),
        ves: mean(&|s| s.ves),
        mcq_accuracy: if mcq_total == 0 {
            0.0
        } else {
            mcq_correct as f64 / mcq_total as f64
        },
        mcq_total,
        answered: count(Status::Answered),
        exhausted: count(Status::Exhausted),
        failed: count(Status::Failed),
        latency: LatencySummary {
            p50_ms: percentile(&lat, 50.0),
            p90_ms: percentile(&lat, 90.0),
            p99_ms: percentile(&lat, 99.0),
            max_ms: *lat.last().unwrap(),
        },
    })
}

impl MetricsReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("records", self.records.to_string()),
            ("EM", format!("{:.4}", self.em)),
            ("CM", format!("{:.4}", self.cm)),
            ("EX", format!("{:.4}", self.ex)),
            ("VES", format!("{:.4}", self.ves)),
            (
                "MCQ accuracy",
                format!("{:.4} ({} questions)", self.mcq_accuracy, self.mcq_total),
            ),
            (
                "status",
                format!(
                    "{} answered, {} exhausted, {} failed",
                    self.answered, self.exhausted, self.failed
                ),
            ),
            (
                "latency ms",
                format!(
                    "p50 {:.1}, p90 {:.1}, p99 {:.1}, max {:.1}",
                    self.latency.p50_ms, self.latency.p90_ms, self.latency.p99_ms, self.latency.max_ms
                ),
            ),
        ];
        for (k, v) in rows {
            writeln!(out, "{k:<14}{v}").unwrap();
        }
        out
    }
}

/// Runs batch items through a pipeline and scores them.
pub struct Evaluator {
    pub pipeline: Pipeline,
    pub judge: Gateway,
    pub strategy: Strategy,
}

impl Evaluator {
    pub fn new(pipeline: Pipeline, judge: Gateway) -> Self {
        Self {
            pipeline,
            judge,
            strategy: Strategy::default(),
        }
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn timed_execute(&self, sql: &str) -> Result<(ResultTable, f64), ExecError> {
        let wh = &self.pipeline.warehouse;
        let limits = &self.pipeline.config.exec;
        let mut times = Vec::with_capacity(TIMING_RUNS);
        let mut table = None;
        for _ in 0..TIMING_RUNS {
            let started = Instant::now();
            let t = wh.execute_readonly(sql, limits)?;
            times.push(started.elapsed().as_secs_f64().max(1e-9));
            table = Some(t);
        }
        times.sort_by(f64::total_cmp);
        Ok((table.unwrap(), times[TIMING_RUNS / 2]))
    }

    pub fn evaluate_item(&self, item: &EvalItem) -> EvalRecord {
        let started = Instant::now();
        let prediction = self.pipeline.run(&item.question);
        let latency = started.elapsed();
        let mut warnings = Vec::new();

        let gold = self.timed_execute(&item.gold_sql);
        let gold_table = match (&item.gold_table, &gold) {
            (Some(t), _) => Some(t.clone()),
            (None, Ok((t, _))) => Some(t.clone()),
            (None, Err(e)) => {
                warnings.push(format!("gold query failed: {e}"));
                None
            }
        };
        let ordered = item.ordered.unwrap_or_else(|| has_top_level_order(&item.gold_sql));
        let pred_sql = prediction.final_sql().unwrap_or("").to_string();

        let em = exact_match(&pred_sql, &item.gold_sql);
        let cm = component_match(&pred_sql, &item.gold_sql);
        warnings.extend(em.warning.iter().map(|w| format!("EM: {w}")));
        warnings.extend(cm.warning.iter().map(|w| format!("CM: {w}")));

        let answered = prediction
            .final_table
            .as_ref()
            .filter(|_| prediction.status == Status::Answered);
        let ex = match (answered, &gold_table) {
            (Some(p), Some(g)) => execution_accuracy(p, g, ordered),
            _ => false,
        };
        let ves = if ex {
            match (
                &gold,
                self.timed_execute(prediction.executed_sql().unwrap_or(&pred_sql)),
            ) {
                (Ok((_, gold_time)), Ok((_, pred_time))) => {
                    valid_efficiency_score(true, pred_time, *gold_time).unwrap_or(0.0)
                }
                _ => {
                    warnings.push("VES: could not time both queries".to_string());
                    0.0
                }
            }
        } else {
            0.0
        };

        let judged = mcq_judge(&item.question, answered, &item.mcqs, &self.judge).unwrap_or_else(|e| {
            warnings.push(format!("judge failed: {e}"));
            JudgeOutcome {
                verdicts: vec![McqVerdict::Unparseable; item.mcqs.len()],
                warnings: Vec::new(),
            }
        });
        warnings.extend(judged.warnings);

        EvalRecord {
            item: item.clone(),
            prediction,
            scores: Scores {
                em: em.value,
                cm: cm.value,
                ex,
                ves,
                mcq: judged.verdicts,
            },
            latency,
            warnings,
        }
    }

    /// Scores every item, in input order. Items run concurrently only when
    /// both providers give the same answers regardless of call order.
    pub fn evaluate(&self, items: &[EvalItem]) -> Vec<EvalRecord> {
        let safe = self.pipeline.gateway.provider().concurrency_safe() && self.judge.provider().concurrency_safe();
        let strategy = if safe { self.strategy } else { Strategy::Sequential };
        strategy.map(items, |item| self.evaluate_item(item))
    }
}
