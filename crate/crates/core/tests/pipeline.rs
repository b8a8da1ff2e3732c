use finsql_core::finstore::ExecErrorKind;
use finsql_core::golden::*;
use finsql_core::guard::{Rule, Verdict};
use finsql_core::llm::Gateway;
use finsql_core::sqlgen::*;
use finsql_core::testkit::FixtureWorld;
use finsql_core::Value;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

fn world() -> &'static FixtureWorld {
    static W: OnceLock<FixtureWorld> = OnceLock::new();
    W.get_or_init(FixtureWorld::test)
}

fn run(script: &str, config: PipelineConfig) -> (PipelineOutcome, Duration) {
    let p = world().scripted_pipeline(script, config);
    let started = Instant::now();
    let out = p.run(GOLDEN_QUESTION);
    (out, started.elapsed())
}

fn trace_doc(out: &PipelineOutcome) -> String {
    serde_json::to_string(&out.trace.without_timings()).unwrap()
}

#[test]
fn golden_script_answers_on_the_first_attempt() {
    let (out, elapsed) = run(GOLDEN_SCRIPT, PipelineConfig::default());
    assert!(elapsed < Duration::from_secs(5));
    assert_eq!(out.status, Status::Answered);
    assert_eq!(out.trace.attempts.len(), 1);
    let a = &out.trace.attempts[0];
    assert_eq!(a.guard.verdict, Verdict::Rewritten);
    assert!(a.executed_sql.as_deref().unwrap().ends_with("LIMIT 1000"));

    let table = out.final_table.as_ref().unwrap();
    assert_eq!(table.rows[0][0], Value::from("HDB"));
    assert_eq!(table.rows.len(), GOLDEN_ROWS.len());
    let stages: Vec<Stage> = out.trace.model_calls.iter().map(|c| c.stage).collect();
    assert_eq!(stages, [Stage::Extract, Stage::Generate, Stage::Correct]);
}

#[test]
fn broken_query_is_fixed_in_the_second_attempt() {
    let (out, elapsed) = run(BROKEN_THEN_FIXED_SCRIPT, PipelineConfig::default());
    assert!(elapsed < Duration::from_secs(5));
    assert_eq!(out.status, Status::Answered);
    assert_eq!(out.trace.attempts.len(), 2);

    let first = &out.trace.attempts[0];
    assert_eq!(first.guard.verdict, Verdict::Reject);
    assert_eq!(first.guard.violations[0].rule, Rule::Syntax);
    assert!(first.executed_sql.is_none());
    let err = first.execution.as_result().unwrap_err();
    assert_eq!(err.kind, ExecErrorKind::Syntax);
    assert_eq!(
        first.correction.as_ref().unwrap().new_sql.as_deref(),
        Some(GOLDEN_SQL.trim())
    );
    assert_eq!(out.trace.attempts[1].sql, GOLDEN_SQL.trim());
    assert_eq!(out.final_table.unwrap().rows[0][0], Value::from("HDB"));
}

#[test]
fn always_no_exhausts_the_budget() {
    for max_iterations in [0, 1, 3] {
        let config = PipelineConfig {
            max_iterations,
            ..PipelineConfig::default()
        };
        let (out, elapsed) = run(ALWAYS_NO_SCRIPT, config);
        assert!(elapsed < Duration::from_secs(5));
        assert_eq!(out.status, Status::Exhausted);
        assert_eq!(out.trace.attempts.len() as u32, 1 + max_iterations);
        assert!(out.final_table.is_none());
        assert!(out.trace.attempts.last().unwrap().correction.is_none());
        let corrections = out
            .trace
            .model_calls
            .iter()
            .filter(|c| c.stage == Stage::Correct)
            .count();
        assert_eq!(corrections as u32, max_iterations);
    }
}

#[test]
fn accepting_a_failed_query_counts_as_no() {
    let script = BROKEN_THEN_FIXED_SCRIPT.replacen(
        "@@ rule contains: <correction>",
        "@@ rule contains: <correction>\n@@ reply\n### Decision:\nYES\n@@ rule contains: never-matches",
        1,
    );
    let config = PipelineConfig {
        max_iterations: 1,
        ..PipelineConfig::default()
    };
    let (out, _) = run(&script, config);
    assert_eq!(out.status, Status::Exhausted);
    let c = out.trace.attempts[0].correction.as_ref().unwrap();
    assert_eq!(c.verdict, DecisionVerdict::No);
    assert!(c.warning.is_some());
}

#[test]
fn provider_failure_is_reported() {
    let (out, _) = run(
        "@@ rule contains: nothing-like-this\n@@ reply\nx\n",
        PipelineConfig::default(),
    );
    assert_eq!(out.status, Status::Failed);
    assert!(out.trace.error.as_deref().unwrap().contains("no_script_match"));
    assert!(out.trace.attempts.is_empty());
}

#[test]
fn scripted_runs_are_deterministic() {
    for script in [GOLDEN_SCRIPT, BROKEN_THEN_FIXED_SCRIPT, ALWAYS_NO_SCRIPT] {
        let (a, _) = run(script, PipelineConfig::default());
        let (b, _) = run(script, PipelineConfig::default());
        assert_eq!(trace_doc(&a), trace_doc(&b));

        // Reusing one pipeline rewinds the script for every question.
        let p = world().scripted_pipeline(script, PipelineConfig::default());
        let first = trace_doc(&p.run(GOLDEN_QUESTION));
        assert_eq!(first, trace_doc(&p.run(GOLDEN_QUESTION)));

        let replay = world().pipeline(
            Gateway::new(Arc::new(a.trace.replay_provider())),
            PipelineConfig::default(),
        );
        assert_eq!(trace_doc(&replay.run(GOLDEN_QUESTION)), trace_doc(&a));
    }
}

const PROBE_SCRIPT_HEAD: &str = "@@ rule contains: <probe_request>
@@ reply
```sql
SELECT DISTINCT ratio_code FROM financial_ratio WHERE ratio_code LIKE 'CDG%' AND quarter = 3
```
```sql
DELETE FROM financial_ratio
```
```sql
SELECT year FROM financial_ratio WHERE quarter = 3 AND ratio_code = 'none' LIMIT 1
```
```sql
SELECT 1 FROM company_info WHERE quarter = 1
```
";

#[test]
fn exploration_runs_guarded_probes() {
    let script = format!("{PROBE_SCRIPT_HEAD}{GOLDEN_SCRIPT}");
    let config = PipelineConfig {
        multistep: true,
        ..PipelineConfig::default()
    };
    let (out, _) = run(&script, config);
    assert_eq!(out.status, Status::Answered);
    let ex = out.trace.exploration.as_ref().unwrap();
    assert_eq!(ex.probes.len(), 3, "only max_probes blocks are used");
    assert_eq!(
        ex.probes[0].execution.table().unwrap().rows[0][0],
        Value::from("CDGYoY")
    );
    assert_eq!(ex.probes[1].guard.verdict, Verdict::Reject);
    assert_eq!(
        ex.probes[2].execution.as_result().unwrap_err().kind,
        ExecErrorKind::Empty
    );

    let generate = out
        .trace
        .model_calls
        .iter()
        .find(|c| c.stage == Stage::Generate)
        .unwrap();
    let user = &generate.prompt.messages[0].content;
    assert!(user.contains("<exploration>"));
    assert!(user.contains("CDGYoY"));
    assert_eq!(out.trace.model_calls[1].stage, Stage::Explore);
}
