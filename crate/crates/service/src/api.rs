use crate::error::ApiError;
use crate::resource::{CreateRequest, SessionResource};
use crate::AppState;
use alif_core::Label;
use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

pub const TOKEN_HEADER: &str = "x-alif-token";

pub fn router(state: AppState) -> Router {
    let limit = state.config().max_upload_bytes;
    let static_root = state.config().static_root();
    let sessions = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/labels", post(label))
        .route("/sessions/{id}/scores", get(scores))
        .route("/sessions/{id}/history", get(history))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(limit));
    Router::new()
        .route("/health", get(health))
        .merge(sessions)
        .nest_service("/ui", ServeDir::new(static_root))
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(expected) = state.config().auth_token.as_deref() else {
        return next.run(req).await;
    };
    let headers = req.headers();
    let given = headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .or_else(|| {
            headers
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
        });
    if given == Some(expected) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "missing or wrong access token").into_response()
    }
}

fn body(bytes: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    bytes.map_err(|r| ApiError::new(r.status(), r.body_text()))
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(state): State<AppState>,
    bytes: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let bytes = body(bytes)?;
    let req: CreateRequest = parse_json(&bytes)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let config = state.config().clone();
    let resource = tokio::task::spawn_blocking(move || {
        SessionResource::create(id, &req, &config.data_dir, &config.sessions_dir())
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    let top: Vec<_> = resource.ranked_scores().into_iter().take(10).collect();
    let scores = resource.session().training_scores();
    let n = scores.len() as f64;
    let summary = resource.summary();
    let body = json!({
        "session_id": summary.session_id,
        "status": summary.status,
        "summary": summary,
        "baseline": {
            "metrics": resource.meta().baseline,
            "score_mean": scores.iter().sum::<f64>() / n,
            "score_min": scores.iter().copied().fold(f64::INFINITY, f64::min),
            "score_max": scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "top": top,
        },
    });
    state.insert(resource);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list_sessions(State(state): State<AppState>) -> Json<serde_json::Value> {
    let mut items = Vec::new();
    for res in state.all() {
        items.push(res.read().await.summary());
    }
    items.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.session_id.cmp(&b.session_id)));
    Json(json!({ "status": null, "sessions": items }))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let res = state.get(&id)?;
    let res = res.read().await;
    let summary = res.summary();
    Ok(Json(json!({ "session_id": id, "status": summary.status, "summary": summary })))
}

async fn query(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let res = state.get(&id)?;
    let mut res = res.write().await;
    let out = res.query()?;
    Ok(Json(serde_json::to_value(out).map_err(|e| ApiError::internal(e.to_string()))?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    point_index: usize,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    abstain: bool,
}

fn parse_label(token: &str) -> Result<Label, ApiError> {
    match token.to_ascii_lowercase().as_str() {
        "normal" => Ok(Label::Normal),
        "anomaly" => Ok(Label::Anomaly),
        _ => Err(ApiError::unprocessable(format!(
            "invalid label {token:?} (expected \"normal\" or \"anomaly\")"
        ))),
    }
}

async fn label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Result<Bytes, BytesRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let res = state.get(&id)?;
    let bytes = body(bytes)?;
    let req: LabelRequest = parse_json(&bytes)?;
    let label = match (req.abstain, req.label.as_deref()) {
        (true, None) => None,
        (true, Some(_)) => return Err(ApiError::bad_request("give either a label or abstain, not both")),
        (false, Some(token)) => Some(parse_label(token)?),
        (false, None) => return Err(ApiError::bad_request("missing label (or set abstain)")),
    };
    let mut res = res.write().await;
    let status = res.status();
    let out = res.answer(req.point_index, label).map_err(|e| {
        if e.status.is_none() {
            e.with_status(status)
        } else {
            e
        }
    })?;
    Ok(Json(serde_json::to_value(out).map_err(|e| ApiError::internal(e.to_string()))?))
}

#[derive(Debug, Deserialize)]
struct TopQuery {
    top: Option<usize>,
}

async fn scores(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<TopQuery>, QueryRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let res = state.get(&id)?;
    let Query(q) = q.map_err(|r| ApiError::bad_request(r.body_text()))?;
    let res = res.read().await;
    let mut entries = res.ranked_scores();
    if let Some(k) = q.top {
        entries.truncate(k);
    }
    Ok(Json(json!({ "session_id": id, "status": res.status(), "scores": entries })))
}

async fn history(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let res = state.get(&id)?;
    let res = res.read().await;
    Ok(Json(json!({
        "session_id": id,
        "status": res.status(),
        "baseline": res.meta().baseline,
        "history": res.history(),
    })))
}
