use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use expertrank_core::feedback::{EvaluationRequest, FeedbackError};
use expertrank_core::ranker::{RankError, RetrievalMode, SectionFlags};
use expertrank_core::store::QueryId;
use expertrank_core::{DocId, Engine, EngineError};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/api/search", post(search))
        .route("/api/doc/{doc_id}", get(document))
        .route("/api/evaluate", post(evaluate))
        .route("/api/report", get(report))
        .with_state(engine)
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::Rank(RankError::EmptyQuery) => {
                ApiError::new(StatusCode::BAD_REQUEST, "empty_query", msg)
            }
            EngineError::Rank(RankError::NoSectionsEnabled) => {
                ApiError::new(StatusCode::BAD_REQUEST, "no_sections", msg)
            }
            EngineError::Feedback(f) => match f {
                FeedbackError::UnknownQuery(_) | FeedbackError::UnknownDocument(_) => {
                    ApiError::new(StatusCode::NOT_FOUND, "not_found", msg)
                }
                FeedbackError::StaleEvaluation { .. } => {
                    ApiError::new(StatusCode::CONFLICT, "stale_evaluation", msg)
                }
                FeedbackError::EvaluationRejected => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "evaluation_rejected", msg)
                }
                FeedbackError::NoSharedWords(_) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_shared_words", msg)
                }
                FeedbackError::InvalidPosition => {
                    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", msg)
                }
                FeedbackError::Rank(_) | FeedbackError::Store(_) => internal(msg),
            },
            _ => internal(msg),
        }
    }
}

fn internal(message: String) -> ApiError {
    tracing::error!(%message, "internal error");
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| internal(e.to_string()))?
}

/// Section switches; omitted sections are searched.
#[derive(Debug, Default, Deserialize)]
struct SectionsBody {
    folder: Option<bool>,
    name: Option<bool>,
    body: Option<bool>,
}

impl From<SectionsBody> for SectionFlags {
    fn from(s: SectionsBody) -> Self {
        SectionFlags {
            folder: s.folder.unwrap_or(true),
            name: s.name.unwrap_or(true),
            body: s.body.unwrap_or(true),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SearchRequest {
    q: String,
    #[serde(default)]
    sections: SectionsBody,
    #[serde(default)]
    user: Option<String>,
    #[serde(default)]
    mode: Option<RetrievalMode>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchHit {
    pub doc_id: DocId,
    pub folder: String,
    pub name: String,
    pub position: usize,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchResponse {
    pub query_id: QueryId,
    pub eligible_for_evaluation: bool,
    pub results: Vec<SearchHit>,
}

async fn search(
    State(engine): State<Arc<Engine>>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Json(req) = body?;
    if req.q.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_query",
            "query text is empty",
        ));
    }
    let flags = SectionFlags::from(req.sections);
    let user = req.user.unwrap_or_else(|| "anonymous".to_string());
    blocking(move || {
        let out = engine.search(&req.q, flags, req.mode, &user)?;
        let results = out
            .results
            .iter()
            .map(|r| {
                let doc = engine.document(r.doc_id).expect("ranked documents exist");
                SearchHit {
                    doc_id: r.doc_id,
                    folder: doc.folder_name.clone(),
                    name: doc.doc_name.clone(),
                    position: r.position,
                    score: r.score,
                }
            })
            .collect();
        tracing::info!(query_id = %out.query_id, hits = out.results.len(), "search");
        Ok(Json(SearchResponse {
            query_id: out.query_id,
            eligible_for_evaluation: out.eligible_for_evaluation,
            results,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct DocParams {
    query_id: Option<u64>,
    position: Option<usize>,
}

async fn document(
    State(engine): State<Arc<Engine>>,
    Path(doc_id): Path<u64>,
    Query(params): Query<DocParams>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let doc_id = DocId(doc_id);
    let doc = engine.document(doc_id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("unknown document {doc_id}"),
        )
    })?;
    let can_evaluate = match (params.query_id, params.position) {
        (Some(q), Some(p)) => engine.can_evaluate(doc_id, QueryId(q), p),
        _ => false,
    };
    Ok(Json(json!({
        "doc_id": doc.doc_id,
        "folder": doc.folder_name,
        "name": doc.doc_name,
        "body": doc.body,
        "evaluation_context": {
            "query_id": params.query_id,
            "position": params.position,
            "can_evaluate": can_evaluate,
        },
    })))
}

#[derive(Debug, Deserialize)]
struct EvaluateBody {
    query_id: u64,
    doc_id: u64,
    position: usize,
    user: String,
}

async fn evaluate(
    State(engine): State<Arc<Engine>>,
    body: Result<Json<EvaluateBody>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(body) = body?;
    let req = EvaluationRequest {
        query_id: QueryId(body.query_id),
        doc_id: DocId(body.doc_id),
        position: body.position,
        user_id: body.user,
    };
    blocking(move || {
        let rec = engine.evaluate(&req)?;
        tracing::info!(evaluation_id = %rec.evaluation_id, delta = rec.delta, "evaluation");
        let updated: Vec<_> = rec
            .updated_words
            .iter()
            .map(|u| json!({ "word": u.word, "old_weight": u.old_weight, "new_weight": u.new_weight }))
            .collect();
        Ok(Json(json!({
            "evaluation_id": rec.evaluation_id,
            "updated_words": updated,
            "p_before": rec.p_before,
            "p_after": rec.p_after,
            "delta": rec.delta,
        })))
    })
    .await
}

async fn report(State(engine): State<Arc<Engine>>) -> Json<serde_json::Value> {
    let report = engine.report();
    let rows: Vec<_> = report
        .deltas
        .iter()
        .map(|d| json!({ "evaluation_id": d.evaluation_id, "p_before": d.p_before, "delta": d.delta }))
        .collect();
    Json(json!({
        "rows": rows,
        "aggregate": {
            "total": report.total,
            "count": report.count,
            "mean_improvement": report.mean_improvement,
        },
    }))
}
