use std::collections::BTreeMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use ctrlbot_core::control::{control_level, ControlConfig, ControlLevel, RoutingTrace};
use ctrlbot_core::generation::GenerationMode;
use ctrlbot_core::knowledge::{Document, DocumentId, KnowledgeBase, KnowledgeError, MetaValue};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::analytics::{summarize, AnalyticsSummary, Rater, RatingRecord, Verdict};
use crate::{build_engine, ApiError, AppState, KB_SNAPSHOT};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/health", get(health))
        .route("/chat", post(chat))
        .route("/config", get(get_config).put(put_config))
        .route("/documents", get(list_documents).post(add_document))
        .route("/documents/{id}", delete(delete_document))
        .route("/documents/{id}/annotations", patch(annotate))
        .route("/reindex", post(reindex))
        .route("/ratings", post(rate))
        .route("/analytics", get(analytics))
        .route("/traces/{session_id}", get(traces))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn authorize(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(token) = &state.config.token else { return Ok(()) };
    let given = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token"))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn kb_error(e: KnowledgeError) -> ApiError {
    match e {
        KnowledgeError::UnknownDocument(id) => ApiError::not_found(format!("unknown document {id}")),
        other => ApiError::bad_request(other.to_string()),
    }
}

async fn health(State(st): Shared) -> Json<Value> {
    let engine = st.engine();
    Json(json!({
        "status": "ok",
        "kb_loaded": engine.is_some(),
        "kb_revision": engine.as_ref().map(|e| e.kb().revision),
        "documents": engine.as_ref().map(|e| e.kb().documents.len()),
        "backends": engine.as_ref().map(|e| e.backends().ids().map(str::to_string).collect::<Vec<_>>()),
        "sessions": st.sessions.len(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    #[serde(default)]
    session_id: Option<String>,
    message: String,
}

#[derive(Debug, Serialize)]
struct ChatResponse {
    session_id: String,
    answer: String,
    trace: RoutingTrace,
}

async fn chat(State(st): Shared, body: Bytes) -> ApiResult<Json<ChatResponse>> {
    let req: ChatRequest = parse_body(&body)?;
    if req.message.trim().is_empty() {
        return Err(ApiError::bad_request("message must not be empty"));
    }
    let engine = st.engine().ok_or_else(ApiError::unavailable)?;
    let config = st.control_config();
    let session_id = req
        .session_id
        .filter(|s| !s.trim().is_empty())
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let response = blocking(move || {
        let now = Utc::now();
        let session = st.sessions.get_or_create(&session_id, now);
        let mut state = session.lock().unwrap_or_else(|e| e.into_inner());
        {
            let logged = st.turns.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(max) = logged.get(&session_id) {
                state.turns = state.turns.max(*max);
            }
        }
        let outcome = engine.handle_turn_at(&mut state, &req.message, &config, now);
        st.traces
            .append(&outcome.trace)
            .map_err(|e| ApiError::internal(format!("trace log: {e}")))?;
        st.turns
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session_id.clone(), outcome.trace.turn_id);
        Ok(ChatResponse { session_id, answer: outcome.answer, trace: outcome.trace })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Serialize)]
struct ConfigView {
    config: ControlConfig,
    level: ControlLevel,
}

async fn get_config(State(st): Shared) -> Json<ConfigView> {
    let config = st.control_config();
    let level = control_level(&config);
    Json(ConfigView { config, level })
}

async fn put_config(State(st): Shared, headers: HeaderMap, body: Bytes) -> ApiResult<Json<ControlLevel>> {
    authorize(&st, &headers)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let value: Value = serde_json::from_str(text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let config: ControlConfig = serde_json::from_value(value).map_err(|e| ApiError::invalid(e.to_string()))?;
    config.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
    if config.generation.mode != GenerationMode::NoGeneration {
        if let Some(engine) = st.engine() {
            if engine.backends().get(&config.generation.backend_id).is_none() {
                return Err(ApiError::invalid(format!("unknown backend `{}`", config.generation.backend_id)));
            }
        }
    }
    let level = control_level(&config);
    *st.control.write().unwrap_or_else(|e| e.into_inner()) = config;
    Ok(Json(level))
}

/// Applies `edit` to the working knowledge base and persists the result.
async fn edit_kb<T: Send + 'static>(
    st: Arc<AppState>,
    edit: impl FnOnce(&mut KnowledgeBase) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    blocking(move || {
        let mut guard = st.working_kb.lock().unwrap_or_else(|e| e.into_inner());
        let kb = guard.as_mut().ok_or_else(ApiError::unavailable)?;
        let out = edit(kb)?;
        if st.config.persist_kb {
            persist(&st, kb).map_err(|e| ApiError::internal(format!("saving knowledge base: {e}")))?;
        }
        Ok(out)
    })
    .await
}

fn persist(st: &AppState, kb: &KnowledgeBase) -> Result<(), String> {
    let target = st.config.data_dir.join(KB_SNAPSHOT);
    let tmp = st.config.data_dir.join(format!("{KB_SNAPSHOT}.tmp-{}", uuid::Uuid::new_v4()));
    kb.save(&tmp).map_err(|e| e.to_string())?;
    if target.exists() {
        std::fs::remove_dir_all(&target).map_err(|e| e.to_string())?;
    }
    std::fs::rename(&tmp, &target).map_err(|e| e.to_string())
}

async fn list_documents(State(st): Shared) -> ApiResult<Json<Vec<Document>>> {
    let guard = st.working_kb.lock().unwrap_or_else(|e| e.into_inner());
    let kb = guard.as_ref().ok_or_else(ApiError::unavailable)?;
    Ok(Json(kb.documents.values().cloned().collect()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewDocument {
    title: String,
    body: String,
    #[serde(default)]
    metadata: BTreeMap<String, MetaValue>,
}

async fn add_document(State(st): Shared, headers: HeaderMap, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    authorize(&st, &headers)?;
    let doc: NewDocument = parse_body(&body)?;
    let ack = edit_kb(st, move |kb| {
        let id = kb.ingest_document(&doc.title, &doc.body, doc.metadata).map_err(kb_error)?;
        Ok(json!({ "id": id, "revision": 1, "kb_revision": kb.revision }))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(ack)))
}

async fn annotate(
    State(st): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    authorize(&st, &headers)?;
    let annotations: BTreeMap<String, String> = parse_body(&body)?;
    if annotations.is_empty() {
        return Err(ApiError::bad_request("no annotations given"));
    }
    let ack = edit_kb(st, move |kb| {
        let id = DocumentId::new(id);
        let mut revision = 0;
        for (key, value) in &annotations {
            revision = kb.annotate_document(&id, key, value).map_err(kb_error)?;
        }
        Ok(json!({ "id": id, "revision": revision, "kb_revision": kb.revision }))
    })
    .await?;
    Ok(Json(ack))
}

async fn delete_document(State(st): Shared, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    authorize(&st, &headers)?;
    let ack = edit_kb(st, move |kb| {
        let doc = kb.delete_document(&DocumentId::new(id)).map_err(kb_error)?;
        Ok(json!({ "id": doc.id, "deleted": true, "kb_revision": kb.revision }))
    })
    .await?;
    Ok(Json(ack))
}

struct ReindexGuard(Arc<AppState>);

impl Drop for ReindexGuard {
    fn drop(&mut self) {
        self.0.reindexing.store(false, Ordering::SeqCst);
    }
}

async fn reindex(State(st): Shared, headers: HeaderMap) -> ApiResult<Json<Value>> {
    authorize(&st, &headers)?;
    if st.reindexing.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err() {
        return Err(ApiError::new(StatusCode::CONFLICT, "reindex_running", "a reindex is already running"));
    }
    let guard = ReindexGuard(Arc::clone(&st));
    let stats = blocking(move || {
        let st = &guard.0;
        std::thread::sleep(st.config.reindex_delay);
        let kb = st
            .working_kb
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
            .ok_or_else(ApiError::unavailable)?;
        let engine = match st.engine() {
            Some(old) => old.rebuild(kb),
            None => build_engine(kb),
        };
        let stats = json!({
            "documents": engine.index().doc_count,
            "terms": engine.index().vocabulary.len(),
            "kb_revision": engine.kb().revision,
        });
        *st.engine.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(engine));
        Ok(stats)
    })
    .await?;
    Ok(Json(stats))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingRequest {
    session_id: String,
    turn_id: u64,
    rater: Rater,
    verdict: Verdict,
    #[serde(default)]
    comment: Option<String>,
}

async fn rate(State(st): Shared, headers: HeaderMap, body: Bytes) -> ApiResult<(StatusCode, Json<RatingRecord>)> {
    let req: RatingRequest = parse_body(&body)?;
    if req.rater == Rater::ClientEditor {
        authorize(&st, &headers)?;
    }
    let known = st
        .turns
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .get(&req.session_id)
        .is_some_and(|max| (1..=*max).contains(&req.turn_id));
    if !known {
        return Err(ApiError::not_found(format!("no trace for turn {} of session {}", req.turn_id, req.session_id)));
    }
    let now = Utc::now();
    if req.rater == Rater::EndUser {
        let mut recent = st.end_user_recent.lock().unwrap_or_else(|e| e.into_inner());
        let times = recent.entry(req.session_id.clone()).or_default();
        times.retain(|t| now - *t < st.config.rating_window);
        if times.len() >= st.config.end_user_ratings {
            return Err(ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "rate_limited",
                "too many end-user ratings for this session",
            ));
        }
        times.push(now);
    }
    let record = RatingRecord {
        session_id: req.session_id,
        turn_id: req.turn_id,
        rater: req.rater,
        verdict: req.verdict,
        comment: req.comment,
        timestamp: now,
    };
    let to_log = record.clone();
    blocking(move || st.ratings.append(&to_log).map_err(|e| ApiError::internal(format!("rating log: {e}")))).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Debug, Deserialize)]
struct Window {
    from: Option<String>,
    to: Option<String>,
}

fn parse_time(raw: Option<String>) -> ApiResult<Option<DateTime<Utc>>> {
    raw.filter(|s| !s.is_empty())
        .map(|s| {
            DateTime::parse_from_rfc3339(&s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::bad_request(format!("bad timestamp `{s}`: {e}")))
        })
        .transpose()
}

async fn analytics(State(st): Shared, headers: HeaderMap, Query(w): Query<Window>) -> ApiResult<Json<AnalyticsSummary>> {
    authorize(&st, &headers)?;
    let from = parse_time(w.from)?;
    let to = parse_time(w.to)?;
    let summary = blocking(move || {
        let traces: Vec<RoutingTrace> = st.traces.read_all().map_err(|e| ApiError::internal(e.to_string()))?;
        let ratings: Vec<RatingRecord> = st.ratings.read_all().map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(summarize(&traces, &ratings, from, to))
    })
    .await?;
    Ok(Json(summary))
}

async fn traces(State(st): Shared, headers: HeaderMap, Path(session_id): Path<String>) -> ApiResult<Json<Vec<RoutingTrace>>> {
    authorize(&st, &headers)?;
    let list = blocking(move || {
        let all: Vec<RoutingTrace> = st.traces.read_all().map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(all.into_iter().filter(|t| t.session_id == session_id).collect())
    })
    .await?;
    Ok(Json(list))
}
