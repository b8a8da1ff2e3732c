//! JSON API consumed by the chat front end.

use crate::service::Service;
use crate::traces::{Lookup, TraceDocument, TraceStore};
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use finsql_core::evalkit::{aggregate, read_batch, EvalItem, Evaluator};
use finsql_core::sqlgen::{PipelineOutcome, Status};
use finsql_core::vecindex::Namespace;
use finsql_core::Value;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub struct AppState {
    pub service: Arc<Service>,
    pub traces: TraceStore,
    pub deadline: Duration,
    /// Expected `x-api-key` value, when keys are enforced.
    pub api_key: Option<String>,
}

type Shared = Arc<AppState>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub options: AskOptions,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AskOptions {
    /// Probe the data before generating; answered asynchronously.
    pub multistep: bool,
    /// Inline the full trace in the response.
    pub trace: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AskResponse {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Value>>>,
    pub trace_id: String,
    pub elapsed_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PipelineOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Answered => "answered",
        Status::Exhausted => "exhausted",
        Status::Failed => "failed",
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(json!({ "error": { "code": code, "message": message.into() } })),
    )
        .into_response()
}

pub fn router(state: AppState, cors_origins: &[String]) -> Router {
    let cors = if cors_origins.is_empty() {
        CorsLayer::new().allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        CorsLayer::new().allow_origin(AllowOrigin::list(origins))
    }
    .allow_methods([Method::GET, Method::POST])
    .allow_headers([header::CONTENT_TYPE, "x-api-key".parse().unwrap()]);

    let state = Arc::new(state);
    Router::new()
        .route("/api/ask", post(ask))
        .route("/api/trace/:id", get(trace))
        .route("/api/eval", post(eval))
        .route("/api/schema", get(schema))
        .route("/api/healthz", get(healthz))
        .layer(middleware::from_fn_with_state(state.clone(), require_key))
        .layer(cors)
        .with_state(state)
}

async fn require_key(State(st): State<Shared>, req: Request, next: Next) -> Response {
    let open = req.uri().path() == "/api/healthz" || req.method() == Method::OPTIONS;
    if let (Some(expected), false) = (&st.api_key, open) {
        let given = req.headers().get("x-api-key").and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return error(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong x-api-key");
        }
    }
    next.run(req).await
}

fn ask_response(doc: &TraceDocument, inline_trace: bool) -> Response {
    let answered = doc.status == Status::Answered;
    let table = doc.outcome.final_table.as_ref().filter(|_| answered);
    let failed = doc.status == Status::Failed;
    let body = AskResponse {
        status: status_name(doc.status).into(),
        columns: table.map(|t| t.columns.clone()),
        rows: table.map(|t| t.rows.clone()),
        trace_id: doc.trace_id.clone(),
        elapsed_ms: doc.elapsed_ms,
        trace: inline_trace.then(|| doc.outcome.clone()),
        error: failed.then(|| ApiError {
            code: "provider_error".into(),
            message: doc.outcome.trace.error.clone().unwrap_or_default(),
        }),
    };
    let code = if failed {
        StatusCode::BAD_GATEWAY
    } else {
        StatusCode::OK
    };
    (code, Json(body)).into_response()
}

async fn ask(State(st): State<Shared>, body: axum::body::Bytes) -> Response {
    let req: AskRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()),
    };
    let question = req.question.trim().to_string();
    if question.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty_question", "question is empty");
    }
    let Some(gateway) = st.service.gateway.clone() else {
        return error(
            StatusCode::SERVICE_UNAVAILABLE,
            "provider_not_configured",
            crate::service::MISSING_PROVIDER,
        );
    };

    let trace_id = uuid::Uuid::new_v4().to_string();
    st.traces.mark_pending(&trace_id);
    let mut config = st.service.config.pipeline.clone();
    config.multistep |= req.options.multistep;
    let pipeline = st.service.pipeline(gateway, config);

    let (tx, rx) = tokio::sync::oneshot::channel();
    let worker = st.clone();
    let id = trace_id.clone();
    tokio::task::spawn_blocking(move || {
        let started = Instant::now();
        let outcome = {
            let _serial = worker.service.run_guard(&pipeline.gateway);
            pipeline.run(&question)
        };
        let doc = TraceDocument {
            trace_id: id,
            status: outcome.status,
            elapsed_ms: started.elapsed().as_millis() as u64,
            outcome,
        };
        if let Err(e) = worker.traces.insert(&doc) {
            tracing::error!(error = %e, trace_id = %doc.trace_id, "could not store trace");
        }
        let _ = tx.send(doc);
    });

    if req.options.multistep {
        return (
            StatusCode::ACCEPTED,
            Json(json!({ "status": "running", "trace_id": trace_id })),
        )
            .into_response();
    }
    match tokio::time::timeout(st.deadline, rx).await {
        Ok(Ok(doc)) => ask_response(&doc, req.options.trace),
        Ok(Err(_)) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "pipeline worker stopped"),
        Err(_) => (
            StatusCode::GATEWAY_TIMEOUT,
            Json(json!({
                "status": "running",
                "trace_id": trace_id,
                "error": { "code": "deadline_exceeded", "message": "the question is still running; poll its trace" }
            })),
        )
            .into_response(),
    }
}

async fn trace(State(st): State<Shared>, Path(id): Path<String>) -> Response {
    match st.traces.get(&id) {
        Ok(Lookup::Found(text)) => match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(v) => Json(v).into_response(),
            Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_trace", e.to_string()),
        },
        Ok(Lookup::Pending) => (StatusCode::OK, Json(json!({ "status": "running", "trace_id": id }))).into_response(),
        Ok(Lookup::Missing) => error(StatusCode::NOT_FOUND, "not_found", format!("no trace {id}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "trace_store", e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalRequest {
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    items: Option<Vec<EvalItem>>,
}

async fn eval(State(st): State<Shared>, body: axum::body::Bytes) -> Response {
    let req: EvalRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()),
    };
    let items = match (req.path, req.items) {
        (Some(path), None) => {
            let text = match tokio::fs::read_to_string(&path).await {
                Ok(t) => t,
                Err(e) => return error(StatusCode::BAD_REQUEST, "unreadable_batch", format!("{path}: {e}")),
            };
            match read_batch(&text) {
                Ok(items) => items,
                Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_batch", e.to_string()),
            }
        }
        (None, Some(items)) => items,
        _ => {
            return error(
                StatusCode::BAD_REQUEST,
                "malformed_request",
                "give exactly one of path or items",
            )
        }
    };
    if items.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty_batch", "empty batch");
    }
    let (Some(gateway), Some(judge)) = (st.service.gateway.clone(), st.service.judge.clone()) else {
        return error(
            StatusCode::SERVICE_UNAVAILABLE,
            "provider_not_configured",
            crate::service::MISSING_PROVIDER,
        );
    };
    let service = st.service.clone();
    let report = tokio::task::spawn_blocking(move || {
        let _serial = service.run_guard(&gateway);
        let evaluator = Evaluator::new(service.pipeline(gateway, service.config.pipeline.clone()), judge);
        aggregate(&evaluator.evaluate(&items))
    })
    .await;
    match report {
        Ok(Ok(report)) => Json(report).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, "empty_batch", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    }
}

async fn schema(State(st): State<Shared>) -> Response {
    Json(st.service.warehouse.catalog()).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Component {
    pub ready: bool,
    pub detail: String,
}

async fn healthz(State(st): State<Shared>) -> Response {
    let svc = st.service.clone();
    let checked = tokio::task::spawn_blocking(move || {
        let warehouse = match svc.warehouse.company_count() {
            Ok(n) if svc.warehouse.is_seeded() => Component {
                ready: true,
                detail: format!("{n} companies"),
            },
            Ok(_) => Component {
                ready: false,
                detail: "warehouse has no data; run `finsql fixtures seed` or `finsql ingest`".into(),
            },
            Err(e) => Component {
                ready: false,
                detail: e.to_string(),
            },
        };
        let companies = svc.index.len(Namespace::Company);
        let index = Component {
            ready: companies > 0,
            detail: format!("{companies} company entries"),
        };
        let provider = match &svc.gateway {
            None => Component {
                ready: false,
                detail: crate::service::MISSING_PROVIDER.into(),
            },
            Some(g) => match g.provider().health() {
                Ok(()) => Component {
                    ready: true,
                    detail: g.provider().id().to_string(),
                },
                Err(e) => Component {
                    ready: false,
                    detail: e,
                },
            },
        };
        [("warehouse", warehouse), ("index", index), ("provider", provider)]
    })
    .await;
    let Ok(components) = checked else {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "health check panicked");
    };
    let ready = components.iter().all(|(_, c)| c.ready);
    let body = json!({
        "ready": ready,
        "components": components.into_iter().collect::<std::collections::BTreeMap<_, _>>(),
    });
    let code = if ready {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (code, Json(body)).into_response()
}
