//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! nonzero if any fails.

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use finsql::commands::app_state;
use finsql::config::Config;
use finsql::server::router;
use finsql::service::Service;
use finsql_core::entity::{parse_entity_reply, render_entity_prompt};
use finsql_core::evalkit::*;
use finsql_core::finstore::{seed_fixture, ExecLimits, FixtureProfile, SchemaCatalog};
use finsql_core::golden::*;
use finsql_core::guard::{check, QueryPolicy, Rule, Verdict};
use finsql_core::llm::{Gateway, RetryPolicy, ScriptedProvider};
use finsql_core::prompt;
use finsql_core::sqlgen::{PipelineOutcome, PipelineTrace, Status};
use finsql_core::testkit::{mutation_corpus, select_corpus, FixtureWorld};
use finsql_core::vecindex::{EmbeddedEntry, HashingEmbedder, Namespace, VectorIndex};
use finsql_core::{ResultTable, Strategy, Value};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tower::ServiceExt;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)*));
        }
    };
}

/// Reference rows for the credit growth question: ticker, growth, industry mean.
const EXPECTED_FIRST: (&str, i64, i64, &str, &str) = ("HDB", 2023, 3, "0.64", "0.24");
const EXPECTED_ALSO: [(&str, &str); 3] = [("VPB", "0.52"), ("MSB", "0.35"), ("KLB", "0.34")];
const RUN_BUDGET: Duration = Duration::from_secs(5);
const JUDGE_RULE: &str = "@@ rule contains: ### Options:\n@@ reply\n### Answer:\nA\n";

fn golden_fixture() -> Outcome {
    let wh = seed_fixture(&FixtureProfile::test()).map_err(|e| e.to_string())?;
    let report = check(GOLDEN_SQL, wh.catalog(), &QueryPolicy::default());
    ensure!(report.verdict == Verdict::Rewritten, "verdict {:?}", report.verdict);
    let sql = report.executable(GOLDEN_SQL).ok_or("not executable")?;
    let started = Instant::now();
    let table = wh
        .execute_readonly(sql, &ExecLimits::default())
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");

    let first = table.rows.first().ok_or("no rows")?;
    let (code, year, quarter, growth, mean) = EXPECTED_FIRST;
    ensure!(
        first[0] == Value::from(code)
            && first[1] == Value::Int(year)
            && first[2] == Value::Int(quarter)
            && first[3].to_string() == growth
            && first[4].to_string() == mean,
        "first row {first:?}"
    );
    for (code, growth) in EXPECTED_ALSO {
        ensure!(
            table
                .rows
                .iter()
                .any(|r| r[0] == Value::from(code) && r[3].to_string() == growth),
            "missing {code} {growth}"
        );
    }
    let g: Vec<f64> = table.rows.iter().filter_map(|r| r[3].as_f64()).collect();
    ensure!(g.windows(2).all(|w| w[0] >= w[1]), "not descending: {g:?}");
    Ok(format!(
        "{} rows in {:.1} ms",
        table.rows.len(),
        elapsed.as_secs_f64() * 1e3
    ))
}

fn prompt_fidelity() -> Outcome {
    let pinned = |name: &str| {
        let path = format!("{}/../core/assets/prompts/{name}.sha256", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(path)
            .map(|s| s.trim().to_string())
            .map_err(|e| e.to_string())
    };
    let sha = |t: &str| hex::encode(Sha256::digest(t.as_bytes()));
    let sample = "stock_code  data\n----------  ----\nHDB         {0.64} {{x}}";
    for (name, rendered) in [
        ("entity_extraction", prompt::entity_extraction(EXAMPLE_TASK)),
        ("schema_description", prompt::schema_description()),
        ("self_correction", prompt::self_correction(sample)),
    ] {
        ensure!(sha(&rendered) == pinned(name)?, "{name} hash differs");
    }
    let script = format!("@@ rule contains: {EXAMPLE_TASK}\n@@ reply\n{EXAMPLE_ENTITY_REPLY}");
    let gw = Gateway::new(Arc::new(ScriptedProvider::parse(&script).map_err(|e| e.to_string())?));
    let reply = gw
        .complete(&render_entity_prompt(EXAMPLE_TASK))
        .map_err(|e| e.to_string())?;
    let parsed = parse_entity_reply(&reply.text).map_err(|e| e.to_string())?;
    ensure!(parsed.entities == example_entities(), "parsed {:?}", parsed.entities);
    Ok("3 template hashes and the example entity object match".into())
}

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
}

fn api(world: &FixtureWorld, script: &str) -> Api {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        data_dir: dir.path().to_path_buf(),
        ..Config::default()
    };
    let provider = ScriptedProvider::parse(&format!("{JUDGE_RULE}{script}")).unwrap();
    let gateway = Gateway::new(Arc::new(provider)).with_retry(RetryPolicy {
        retries: 0,
        base_backoff: Duration::ZERO,
    });
    let service = Service::new(
        config,
        world.warehouse.clone(),
        world.index.clone(),
        world.fewshots.clone(),
        Some(gateway.clone()),
        Some(gateway),
    );
    let app = router(app_state(Arc::new(service)).unwrap(), &[]);
    Api { app, _dir: dir }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Json>) -> (StatusCode, Json) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Json::Null))
}

/// Asks the golden question; returns the response, the stored trace and the wall time.
async fn ask(app: &Router) -> Result<(Json, Json, Duration), String> {
    let started = Instant::now();
    let (status, body) = send(app, "POST", "/api/ask", Some(json!({ "question": GOLDEN_QUESTION }))).await;
    let elapsed = started.elapsed();
    ensure!(status == StatusCode::OK, "ask returned {status}: {body}");
    let id = body["trace_id"].as_str().ok_or("no trace_id")?;
    let (status, trace) = send(app, "GET", &format!("/api/trace/{id}"), None).await;
    ensure!(status == StatusCode::OK, "trace returned {status}");
    Ok((body, trace, elapsed))
}

fn attempts(trace: &Json) -> usize {
    trace["outcome"]["trace"]["attempts"].as_array().map_or(0, Vec::len)
}

async fn end_to_end(world: &FixtureWorld) -> Outcome {
    let wh = &world.warehouse;
    let fixture = wh
        .execute_readonly(
            check(GOLDEN_SQL, wh.catalog(), &QueryPolicy::default())
                .rewritten_sql
                .as_deref()
                .unwrap(),
            &ExecLimits::default(),
        )
        .map_err(|e| e.to_string())?;

    let (body, trace, t1) = ask(&api(world, GOLDEN_SCRIPT).app).await?;
    ensure!(body["status"] == "answered", "golden status {}", body["status"]);
    let returned: ResultTable = serde_json::from_value(json!({ "columns": body["columns"], "rows": body["rows"] }))
        .map_err(|e| e.to_string())?;
    ensure!(returned == fixture, "golden rows differ from the fixture table");
    ensure!(attempts(&trace) == 1, "golden attempts {}", attempts(&trace));

    let (body, trace, t2) = ask(&api(world, BROKEN_THEN_FIXED_SCRIPT).app).await?;
    ensure!(body["status"] == "answered", "broken status {}", body["status"]);
    ensure!(attempts(&trace) == 2, "broken attempts {}", attempts(&trace));

    let max_iterations = Config::default().pipeline.max_iterations as usize;
    let (body, trace, t3) = ask(&api(world, ALWAYS_NO_SCRIPT).app).await?;
    ensure!(body["status"] == "exhausted", "always-no status {}", body["status"]);
    ensure!(body.get("rows").is_none(), "exhausted response has rows");
    ensure!(
        attempts(&trace) == 1 + max_iterations,
        "always-no attempts {} (want {})",
        attempts(&trace),
        1 + max_iterations
    );
    let slowest = t1.max(t2).max(t3);
    ensure!(slowest < RUN_BUDGET, "slowest run {slowest:?}");
    Ok(format!(
        "answered, answered in 2, exhausted in {}; slowest {:.0} ms",
        1 + max_iterations,
        slowest.as_secs_f64() * 1e3
    ))
}

fn guard_suite() -> Outcome {
    let cat = SchemaCatalog::financial();
    let policy = QueryPolicy::default();
    let corpus = mutation_corpus(&cat, 2024);
    ensure!(corpus.len() >= 200, "corpus has {} cases", corpus.len());
    let missed: Vec<_> = corpus
        .iter()
        .filter(|c| check(&c.sql, &cat, &policy).verdict != Verdict::Reject)
        .map(|c| c.sql.clone())
        .collect();
    ensure!(
        missed.is_empty(),
        "{} mutations passed, first {:?}",
        missed.len(),
        missed[0]
    );

    let golden = check(GOLDEN_SQL, &cat, &policy);
    ensure!(
        golden.verdict == Verdict::Rewritten,
        "golden verdict {:?}",
        golden.verdict
    );
    ensure!(
        golden
            .rewritten_sql
            .as_deref()
            .is_some_and(|s| s.ends_with("LIMIT 1000")),
        "golden rewrite lacks LIMIT 1000"
    );
    ensure!(
        !golden.violations.iter().any(|v| v.rule == Rule::QuarterCondition),
        "golden query flagged for its quarter condition"
    );
    let no_quarter = check(
        "SELECT stock_code, data FROM financial_ratio WHERE year = 2023 LIMIT 5",
        &cat,
        &policy,
    );
    ensure!(
        no_quarter.violations.iter().any(|v| v.rule == Rule::QuarterCondition),
        "query without quarter condition passed"
    );

    let selects = select_corpus(&cat, 2024, 500);
    for sql in &selects {
        let first = check(sql, &cat, &policy);
        let runnable = first
            .executable(sql)
            .ok_or_else(|| format!("rejected {sql}: {}", first.describe()))?;
        let second = check(runnable, &cat, &policy);
        ensure!(second.verdict == Verdict::Pass, "rewrite not idempotent for {sql}");
        ensure!(
            second.executable(runnable) == Some(runnable),
            "second rewrite changed {sql}"
        );
    }
    Ok(format!(
        "{} mutations rejected, {} selects idempotent",
        corpus.len(),
        selects.len()
    ))
}

fn vector_oracle() -> Outcome {
    const DIM: usize = 12;
    const ENTRIES: usize = 1000;
    const TRIALS: usize = 120;
    let mut total = 0;
    for strategy in [Strategy::Sequential, Strategy::Parallel] {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let index = VectorIndex::new(Arc::new(HashingEmbedder::default())).with_strategy(strategy);
        let mut stored: Vec<(String, Vec<f64>)> = Vec::with_capacity(ENTRIES);
        let vector = |rng: &mut ChaCha8Rng| loop {
            let v: Vec<f64> = (0..DIM).map(|_| f64::from(rng.gen_range(-2i32..=2))).collect();
            if v.iter().any(|x| *x != 0.0) {
                return v;
            }
        };
        for i in 0..ENTRIES {
            // Small integer coordinates make exact score ties common.
            let v = vector(&mut rng);
            let id = format!("n{:05}", (i * 7919) % 100_000);
            index
                .upsert(EmbeddedEntry {
                    namespace: Namespace::Ratio,
                    id: id.clone(),
                    surface_text: id.clone(),
                    vector: v.clone(),
                    metadata: BTreeMap::new(),
                })
                .map_err(|e| e.to_string())?;
            stored.push((id, v));
        }
        for trial in 0..TRIALS {
            let q = vector(&mut rng);
            let k = 1 + trial % 20;
            let got: Vec<String> = index
                .search_vector(Namespace::Ratio, &q, k)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|c| c.id)
                .collect();
            let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut want: Vec<(f64, &str)> = stored
                .iter()
                .map(|(id, v)| {
                    let dot: f64 = v.iter().zip(&q).map(|(a, b)| a * b).sum();
                    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (dot / (vn * qn), id.as_str())
                })
                .collect();
            want.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            let want: Vec<String> = want.into_iter().take(k).map(|(_, id)| id.to_string()).collect();
            ensure!(got == want, "{strategy:?} trial {trial}: {got:?} vs {want:?}");
            total += 1;
        }
    }
    Ok(format!("{total} trials over {ENTRIES} entries, 0 mismatches"))
}

fn reference_table() -> ResultTable {
    ResultTable::new(
        vec!["stock_code".into(), "growth".into()],
        vec![
            vec![Value::from("HDB"), Value::Real(0.64)],
            vec![Value::from("VPB"), Value::Real(0.52)],
            vec![Value::from("MSB"), Value::Real(0.35)],
        ],
    )
}

fn scripted(text: &str) -> Gateway {
    Gateway::new(Arc::new(ScriptedProvider::parse(text).unwrap()))
}

fn metric_correctness() -> Outcome {
    // Unit values worked out by hand.
    ensure!(
        exact_match("select a from t where x = 1", "SELECT a FROM t WHERE x = 1;").value,
        "EM case fold"
    );
    ensure!(
        !exact_match("SELECT a FROM t", "SELECT b FROM t").value,
        "EM different column"
    );
    let gold = "SELECT a, b FROM t WHERE x = 1 AND y = 2 GROUP BY a ORDER BY a LIMIT 3";
    let cm = component_match(
        "SELECT b, a FROM t WHERE y = 2 AND x = 1 GROUP BY a ORDER BY a LIMIT 4",
        gold,
    )
    .value;
    ensure!(cm == 5.0 / 6.0, "CM {cm}");
    let cm = component_match("SELECT a FROM u", gold).value;
    ensure!(cm == 0.0, "CM disjoint {cm}");

    let t = reference_table();
    let mut reversed = t.clone();
    reversed.rows.reverse();
    ensure!(execution_accuracy(&reversed, &t, false), "EX multiset");
    ensure!(!execution_accuracy(&reversed, &t, true), "EX ordered");
    let mut nudged = t.clone();
    nudged.rows[0][1] = Value::Real(0.64 * (1.0 + 5e-7));
    ensure!(execution_accuracy(&nudged, &t, true), "EX within 1e-6");
    nudged.rows[0][1] = Value::Real(0.64 * (1.0 + 5e-6));
    ensure!(!execution_accuracy(&nudged, &t, true), "EX beyond 1e-6");

    let ves = |ex, p, g| valid_efficiency_score(ex, p, g).map_err(|e| e.to_string());
    ensure!(ves(true, 2.0, 2.0)? == 1.0, "VES equal");
    ensure!(ves(true, 9.0, 1.0)? == 1.0 / 3.0, "VES 9x slower");
    ensure!(ves(false, 1.0, 1.0)? == 0.0, "VES wrong answer");
    ensure!(valid_efficiency_score(true, 0.0, 1.0).is_err(), "VES zero time");

    // Ten records with known scores; the means are recomputed here.
    let ems = [1, 0, 1, 1, 0, 0, 1, 0, 0, 1];
    let cms = [1.0, 0.5, 1.0, 0.8, 0.2, 0.0, 1.0, 0.4, 0.6, 1.0];
    let exs = [1, 0, 1, 1, 1, 0, 1, 0, 0, 1];
    let vess = [1.0, 0.0, 0.5, 0.25, 0.9, 0.0, 1.0, 0.0, 0.0, 0.7];
    let mcq_right = [
        (1, 1),
        (0, 2),
        (2, 3),
        (1, 1),
        (0, 1),
        (3, 5),
        (1, 2),
        (0, 1),
        (4, 4),
        (2, 2),
    ];
    let mcq = Mcq {
        stem: "s".into(),
        options: vec!["a".into(), "b".into()],
        correct_index: 0,
        allow_idk: true,
    };
    let records: Vec<EvalRecord> = (0..10)
        .map(|i| EvalRecord {
            item: EvalItem {
                question: format!("q{i}"),
                gold_sql: "SELECT 1".into(),
                gold_table: None,
                mcqs: vec![mcq.clone(); mcq_right[i].1],
                ordered: None,
            },
            prediction: PipelineOutcome {
                status: if exs[i] == 1 {
                    Status::Answered
                } else {
                    Status::Exhausted
                },
                final_table: None,
                trace: PipelineTrace::new("q", 3),
            },
            scores: Scores {
                em: ems[i] == 1,
                cm: cms[i],
                ex: exs[i] == 1,
                ves: vess[i],
                mcq: (0..mcq_right[i].1)
                    .map(|j| {
                        if j < mcq_right[i].0 {
                            McqVerdict::Correct
                        } else {
                            McqVerdict::DontKnow
                        }
                    })
                    .collect(),
            },
            latency: Duration::from_millis(100 * (10 - i as u64)),
            warnings: Vec::new(),
        })
        .collect();
    let report = aggregate(&records).map_err(|e| e.to_string())?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let as_f = |xs: &[i32]| xs.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
    let right: usize = mcq_right.iter().map(|p| p.0).sum();
    let asked: usize = mcq_right.iter().map(|p| p.1).sum();
    for (name, got, want) in [
        ("EM", report.em, mean(&as_f(&ems))),
        ("CM", report.cm, mean(&cms)),
        ("EX", report.ex, mean(&as_f(&exs))),
        ("VES", report.ves, mean(&vess)),
        ("MCQ", report.mcq_accuracy, right as f64 / asked as f64),
        ("p50", report.latency.p50_ms, 500.0),
        ("p90", report.latency.p90_ms, 900.0),
    ] {
        ensure!((got - want).abs() <= 1e-9, "{name}: {got} vs {want}");
    }

    // Judge: right letters score, the IDK option does not.
    let mcqs: Vec<Mcq> = ["alpha", "beta", "gamma", "delta"]
        .iter()
        .enumerate()
        .map(|(i, s)| Mcq {
            stem: (*s).into(),
            options: vec!["HDB".into(), "VPB".into(), "MSB".into()],
            correct_index: i % 3,
            allow_idk: true,
        })
        .collect();
    let judge = scripted(
        "@@ rule contains: alpha\n@@ reply\n### Answer:\nA\n@@ rule contains: beta\n@@ reply\n### Answer:\nB\n\
         @@ rule contains: gamma\n@@ reply\n### Answer:\nD\n@@ rule contains: delta\n@@ reply\n### Answer:\nI don't know\n",
    );
    let out = mcq_judge("q", Some(&t), &mcqs, &judge).map_err(|e| e.to_string())?;
    ensure!(out.accuracy() == 0.5, "judge accuracy {}", out.accuracy());
    ensure!(
        out.verdicts[2] == McqVerdict::DontKnow && out.verdicts[3] == McqVerdict::DontKnow,
        "IDK verdicts {:?}",
        out.verdicts
    );
    let wrong = scripted("@@ rule regex: .\n@@ reply\n### Answer:\nC\n");
    let out = mcq_judge("q", Some(&t), &mcqs, &wrong).map_err(|e| e.to_string())?;
    ensure!(out.accuracy() == 0.25, "all-C accuracy {}", out.accuracy());
    Ok("unit values, 10-record aggregate and judge accuracies match".into())
}

/// Drops every timing field so two runs can be compared byte for byte.
fn scrub(v: &mut Json) {
    match v {
        Json::Object(map) => {
            for key in ["elapsed", "elapsed_ms", "latency", "trace_id"] {
                map.remove(key);
            }
            map.values_mut().for_each(scrub);
        }
        Json::Array(items) => items.iter_mut().for_each(scrub),
        _ => {}
    }
}

async fn determinism(world: &FixtureWorld) -> Outcome {
    for (name, script) in [
        ("golden", GOLDEN_SCRIPT),
        ("broken_then_fixed", BROKEN_THEN_FIXED_SCRIPT),
        ("always_no", ALWAYS_NO_SCRIPT),
    ] {
        let mut docs = Vec::new();
        // Twice on one server, once on a fresh one.
        let shared = api(world, script);
        for app in [&shared.app, &shared.app, &api(world, script).app] {
            let (_, mut trace, _) = ask(app).await?;
            scrub(&mut trace);
            docs.push(serde_json::to_string(&trace).unwrap());
        }
        ensure!(docs.windows(2).all(|w| w[0] == w[1]), "{name}: trace documents differ");
    }
    Ok("3 scripts, 3 runs each, identical trace documents".into())
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let world = FixtureWorld::test();
    let checks: Vec<Criterion> = vec![
        ("golden fixture", Box::new(golden_fixture)),
        ("prompt fidelity", Box::new(prompt_fidelity)),
        ("end-to-end scripted runs", Box::new(|| rt.block_on(end_to_end(&world)))),
        ("guard suite", Box::new(guard_suite)),
        ("vector oracle", Box::new(vector_oracle)),
        ("metric correctness", Box::new(metric_correctness)),
        ("determinism", Box::new(|| rt.block_on(determinism(&world)))),
    ];
    let mut failed = 0;
    for (name, run) in &checks {
        let result = std::panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match result {
            Ok(detail) => println!("PASS  {name:<26}{detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<26}{why}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
