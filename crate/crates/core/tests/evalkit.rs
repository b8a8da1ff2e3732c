use finsql_core::evalkit::*;
use finsql_core::golden::{GOLDEN_QUESTION, GOLDEN_ROWS, GOLDEN_SCRIPT, GOLDEN_SQL};
use finsql_core::llm::{Gateway, ScriptedProvider};
use finsql_core::sqlgen::{PipelineConfig, PipelineOutcome, PipelineTrace, Status};
use finsql_core::testkit::FixtureWorld;
use finsql_core::{ResultTable, Value};
use std::sync::Arc;
use std::time::Duration;

fn golden_table() -> ResultTable {
    ResultTable::new(
        [
            "stock_code",
            "year",
            "quarter",
            "credit_growth_yoy",
            "industry_credit_growth",
        ]
        .map(String::from)
        .to_vec(),
        GOLDEN_ROWS
            .iter()
            .map(|(c, y, q, g, m)| {
                vec![
                    Value::from(*c),
                    Value::Int(*y),
                    Value::Int(*q),
                    Value::Real(*g),
                    Value::Real(*m),
                ]
            })
            .collect(),
    )
}

#[test]
fn exact_match_examples() {
    assert!(exact_match("select  1", "SELECT 1;").value);
    assert!(exact_match(GOLDEN_SQL, GOLDEN_SQL).value);
    let flipped = GOLDEN_SQL.replace("credit_growth_yoy DESC", "credit_growth_yoy ASC");
    assert!(!exact_match(&flipped, GOLDEN_SQL).value);
    let bad = exact_match("SELECT FROM", GOLDEN_SQL);
    assert!(!bad.value && bad.warning.is_some());
}

const SIX: &str = "SELECT stock_code, SUM(data) AS total FROM financial_statement fs \
    JOIN company_info ci ON fs.stock_code = ci.stock_code WHERE fs.year = 2023 AND fs.quarter = 0 \
    GROUP BY stock_code ORDER BY total DESC LIMIT 10";

#[test]
fn component_match_examples() {
    assert_eq!(component_match(SIX, SIX).value, 1.0);
    // Hand count: SELECT, FROM, WHERE, GROUP BY and ORDER BY agree; LIMIT differs.
    let other_limit = SIX.replace("LIMIT 10", "LIMIT 5");
    assert_eq!(component_match(&other_limit, SIX).value, 5.0 / 6.0);
    // WHERE conjuncts compare as a set.
    let swapped = SIX.replace("fs.year = 2023 AND fs.quarter = 0", "fs.quarter = 0 AND fs.year = 2023");
    assert_eq!(component_match(&swapped, SIX).value, 1.0);
    let disjoint = "SELECT name FROM sub_and_shareholder WHERE quarter = 1 GROUP BY name ORDER BY name LIMIT 3";
    assert_eq!(component_match(disjoint, SIX).value, 0.0);
    let bad = component_match("DROP", SIX);
    assert_eq!(bad.value, 0.0);
    assert!(bad.warning.is_some());
}

#[test]
fn execution_accuracy_examples() {
    let gold = golden_table();
    let mut shuffled = gold.clone();
    shuffled.rows.reverse();
    assert!(execution_accuracy(&shuffled, &gold, false));
    assert!(!execution_accuracy(&shuffled, &gold, true));

    let mut off = gold.clone();
    off.rows[0][3] = Value::Real(0.63);
    assert!(!execution_accuracy(&off, &gold, false));
    let mut close = gold.clone();
    close.rows[0][3] = Value::Real(0.64 * (1.0 + 1e-8));
    assert!(execution_accuracy(&close, &gold, true));

    let mut extra = gold.clone();
    extra.rows.push(gold.rows[0].clone());
    assert!(!execution_accuracy(&extra, &gold, false));

    // Columns are matched by name when the names agree.
    let mut renamed = gold.clone();
    renamed.columns.swap(0, 1);
    for r in &mut renamed.rows {
        r.swap(0, 1);
    }
    assert!(execution_accuracy(&renamed, &gold, true));
    // Otherwise by position.
    let mut aliased = gold.clone();
    aliased.columns[3] = "growth".into();
    assert!(execution_accuracy(&aliased, &gold, true));
    assert!(has_top_level_order(GOLDEN_SQL));
}

#[test]
fn ves_examples() {
    for t in [1e-6, 0.5, 3.0] {
        assert_eq!(valid_efficiency_score(true, t, t).unwrap(), 1.0);
        assert_eq!(valid_efficiency_score(false, t, t).unwrap(), 0.0);
        assert_eq!(valid_efficiency_score(true, 4.0 * t, t).unwrap(), 0.5);
    }
    assert!(valid_efficiency_score(true, 0.0, 1.0).is_err());
    assert!(valid_efficiency_score(false, 1.0, -1.0).is_err());
}

fn mcq(stem: &str, correct_index: usize) -> Mcq {
    Mcq {
        stem: stem.into(),
        options: vec!["HDB".into(), "VPB".into(), "MSB".into(), "KLB".into()],
        correct_index,
        allow_idk: true,
    }
}

fn judge(script: &str) -> Gateway {
    Gateway::new(Arc::new(ScriptedProvider::parse(script).unwrap()))
}

#[test]
fn mcq_judge_examples() {
    let mcqs = vec![mcq("q-one", 0), mcq("q-two", 1), mcq("q-three", 2), mcq("q-four", 3)];
    let right = judge(
        "@@ rule contains: q-one\n@@ reply\n### Answer:\nA\n@@ rule contains: q-two\n@@ reply\n### Answer:\nB\n\
         @@ rule contains: q-three\n@@ reply\n### Answer: C\n@@ rule contains: q-four\n@@ reply\n### Answer:\nD. KLB\n",
    );
    let table = golden_table();
    let out = mcq_judge(GOLDEN_QUESTION, Some(&table), &mcqs, &right).unwrap();
    assert_eq!(out.accuracy(), 1.0);

    let idk = judge("@@ rule regex: .\n@@ reply\n### Answer:\nI don't know\n");
    let out = mcq_judge(GOLDEN_QUESTION, Some(&table), &mcqs, &idk).unwrap();
    assert_eq!(out.accuracy(), 0.0);
    assert!(out.verdicts.iter().all(|v| *v == McqVerdict::DontKnow));
    // The idk option's letter counts the same way.
    let letter_e = judge("@@ rule regex: .\n@@ reply\n### Answer:\nE\n");
    let out = mcq_judge(GOLDEN_QUESTION, Some(&table), &mcqs, &letter_e).unwrap();
    assert!(out.verdicts.iter().all(|v| *v == McqVerdict::DontKnow));

    // No table: no calls. A provider without rules would fail any call.
    let silent = Gateway::new(Arc::new(ScriptedProvider::new(vec![])));
    let out = mcq_judge(GOLDEN_QUESTION, None, &mcqs[..3], &silent).unwrap();
    assert_eq!(out.accuracy(), 0.0);
    assert_eq!(out.verdicts, vec![McqVerdict::Unanswered; 3]);

    let garbled = judge("@@ rule regex: .\n@@ reply\nno idea what to say\n");
    let out = mcq_judge(GOLDEN_QUESTION, Some(&table), &mcqs[..1], &garbled).unwrap();
    assert_eq!(out.verdicts, [McqVerdict::Unparseable]);
    assert_eq!(out.warnings.len(), 1);
}

#[test]
fn judge_prompt_lists_idk_last() {
    let p = judge_prompt("q", &golden_table(), &mcq("stem", 0));
    let text = &p.messages[0].content;
    assert!(text.contains("D. KLB\nE. I don't know\n"));
    let mut no_idk = mcq("stem", 0);
    no_idk.allow_idk = false;
    assert!(!judge_prompt("q", &golden_table(), &no_idk).messages[0]
        .content
        .contains(IDK_TEXT));
}

fn crafted(i: usize) -> EvalRecord {
    let status = [Status::Answered, Status::Exhausted, Status::Failed][i % 3];
    let verdict = |j: usize| match (i + j) % 4 {
        0 | 1 => McqVerdict::Correct,
        2 => McqVerdict::DontKnow,
        _ => McqVerdict::Incorrect(1),
    };
    EvalRecord {
        item: EvalItem {
            question: format!("q{i}"),
            gold_sql: "SELECT 1".into(),
            gold_table: None,
            mcqs: vec![mcq("s", 0); 1 + i % 5],
            ordered: None,
        },
        prediction: PipelineOutcome {
            status,
            final_table: None,
            trace: PipelineTrace::new("q", 3),
        },
        scores: Scores {
            em: i.is_multiple_of(4),
            cm: (i as f64) / 9.0,
            ex: i.is_multiple_of(2),
            ves: if i.is_multiple_of(2) {
                1.0 / (1.0 + i as f64)
            } else {
                0.0
            },
            mcq: (0..1 + i % 5).map(verdict).collect(),
        },
        latency: Duration::from_millis(10 * (i as u64 + 1)),
        warnings: vec![],
    }
}

#[test]
fn aggregate_matches_independent_recomputation() {
    let records: Vec<EvalRecord> = (0..10).map(crafted).collect();
    let report = aggregate(&records).unwrap();

    // Spreadsheet-style recomputation from the crafting rules.
    let em = (0..10).filter(|i| i % 4 == 0).count() as f64 / 10.0;
    let cm = (0..10).map(|i| i as f64 / 9.0).sum::<f64>() / 10.0;
    let ex = 0.5;
    let ves = [0, 2, 4, 6, 8].iter().map(|&i| 1.0 / (1.0 + i as f64)).sum::<f64>() / 10.0;
    let mut correct = 0;
    let mut total = 0;
    for i in 0..10 {
        for j in 0..1 + i % 5 {
            total += 1;
            if (i + j) % 4 < 2 {
                correct += 1;
            }
        }
    }
    for (got, want) in [(report.em, em), (report.cm, cm), (report.ex, ex), (report.ves, ves)] {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    assert!((report.mcq_accuracy - correct as f64 / total as f64).abs() < 1e-9);
    assert_eq!(report.mcq_total, total);
    assert_eq!((report.answered, report.exhausted, report.failed), (4, 3, 3));
    assert_eq!(report.latency.p50_ms, 50.0);
    assert_eq!(report.latency.p90_ms, 90.0);
    assert_eq!(report.latency.max_ms, 100.0);
    assert!(report.render_table().contains("MCQ accuracy"));

    assert_eq!(aggregate(&records[..1]).unwrap().ex, 1.0);
    assert_eq!(aggregate(&records[..2]).unwrap().ex, 0.5);
    assert_eq!(aggregate(&[]).unwrap_err(), MetricError::EmptyBatch);
}

#[test]
fn batch_files_are_validated() {
    assert!(matches!(read_batch("\n  \n"), Err(BatchError::Empty)));
    let line = |mcqs: &str| format!(r#"{{"question":"q","gold_sql":"SELECT 1","mcqs":{mcqs}}}"#);
    assert!(read_batch(&line("[]")).is_err());
    assert!(read_batch(&line(r#"[{"stem":"s","options":["a"],"correct_index":0}]"#)).is_err());
    let ok = read_batch(&line(r#"[{"stem":"s","options":["a","b"],"correct_index":1}]"#)).unwrap();
    assert!(ok[0].mcqs[0].allow_idk);
}

#[test]
fn evaluator_scores_the_golden_question() {
    let world = FixtureWorld::test();
    let pipeline = world.scripted_pipeline(GOLDEN_SCRIPT, PipelineConfig::default());
    let item = EvalItem {
        question: GOLDEN_QUESTION.into(),
        gold_sql: GOLDEN_SQL.into(),
        gold_table: None,
        mcqs: vec![mcq("highest credit growth", 0), mcq("fourth", 3)],
        ordered: None,
    };
    let judge = judge(
        "@@ rule contains: highest credit growth\n@@ reply\n### Answer:\nA\n\
         @@ rule contains: fourth\n@@ reply\n### Answer:\nI don't know\n",
    );
    let eval = Evaluator::new(pipeline, judge);
    let records = eval.evaluate(&[item.clone(), item]);
    let report = aggregate(&records).unwrap();
    assert_eq!(report.ex, 1.0);
    assert_eq!(report.em, 1.0);
    assert_eq!(report.cm, 1.0);
    assert!(report.ves > 0.0 && report.ves <= 1.0);
    assert_eq!(report.mcq_accuracy, 0.5);
    assert_eq!(report.answered, 2);
}
