//! HTTP+JSON API. Handlers only move data between JSON and the session
//! operations. Session work runs on the blocking pool under the session's
//! own lock.

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fuzzkb_core::query::{Query, QueryContext, QueryKind, QueryResult};
use fuzzkb_core::rulebase::FuzzyRule;
use fuzzkb_nlq::Schema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chat::{handle_message, MessageReply, MessageRequest};
use crate::eda::{CorrelationMatrix, CorrelationSeries, HistogramSeries, DEFAULT_BINS};
use crate::error::{Result, ServiceError};
use crate::session::{
    available_datasets, BiasInfo, BuildInfo, BuildRequest, ClosestInfo, DatasetInfo, Event, LoadRequest,
    PredictionsInfo, PredictionsRequest, Session, SessionStore, SessionSummary, TrainInfo, TrainRequest,
    ValueInfo,
};

pub type AppState = Arc<SessionStore>;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use fuzzkb_core::Error as E;
        match self {
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Internal(_) | ServiceError::Io(_) | ServiceError::Core(E::Io(_)) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        }
    }

    fn kind(&self) -> &'static str {
        match self.status() {
            StatusCode::CONFLICT => "conflict",
            StatusCode::NOT_FOUND => "not_found",
            StatusCode::BAD_REQUEST => "validation",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

/// Decode a JSON body; an empty body counts as `{}`.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T> {
    let raw: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(raw).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

/// Run `op` on session `id` off the async runtime. Mutating operations are
/// followed by a snapshot when persistence is on.
async fn run<T, F>(store: AppState, id: String, mutate: bool, op: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session, &Path) -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let data_dir = store.data_dir.clone();
        let op = move |s: &mut Session| op(s, &data_dir);
        if mutate {
            store.update(&id, op)
        } else {
            store.with_session(&id, op)
        }
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))?
}

type JsonResult<T> = Result<Json<T>>;

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_datasets(State(store): State<AppState>) -> Json<Vec<String>> {
    Json(available_datasets(&store.data_dir))
}

async fn create_session(State(store): State<AppState>) -> Result<(StatusCode, Json<Created>)> {
    Ok((StatusCode::CREATED, Json(Created { id: store.create()? })))
}

async fn get_session(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<SessionSummary> {
    run(store, id, false, |s, _| Ok(s.summary())).await.map(Json)
}

async fn delete_session(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode> {
    store.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn events(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<Vec<Event>> {
    run(store, id, false, |s, _| Ok(s.events.clone())).await.map(Json)
}

async fn message(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<MessageReply> {
    let req: MessageRequest = body(&bytes)?;
    run(store, id, true, move |s, dir| Ok(handle_message(s, &req.text, dir))).await.map(Json)
}

async fn load_dataset(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<DatasetInfo> {
    let req: LoadRequest = body(&bytes)?;
    run(store, id, true, move |s, dir| s.load_dataset(&req, dir)).await.map(Json)
}

async fn dataset_info(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<DatasetInfo> {
    run(store, id, false, |s, _| s.dataset_info()).await.map(Json)
}

async fn schema(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<Schema> {
    run(store, id, false, |s, _| Ok(s.schema())).await.map(Json)
}

async fn predictions(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<PredictionsInfo> {
    let req: PredictionsRequest = body(&bytes)?;
    run(store, id, true, move |s, _| s.ingest_predictions(&req)).await.map(Json)
}

async fn train(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<TrainInfo> {
    let req: TrainRequest = body(&bytes)?;
    run(store, id, true, move |s, _| s.train(&req)).await.map(Json)
}

async fn build(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<BuildInfo> {
    let req: BuildRequest = body(&bytes)?;
    run(store, id, true, move |s, _| s.build(&req)).await.map(Json)
}

async fn query(store: AppState, id: String, kind: QueryKind, bytes: Bytes) -> JsonResult<QueryResult> {
    let q: Query = body(&bytes)?;
    run(store, id, true, move |s, _| s.query(kind, q)).await.map(Json)
}

async fn whatif(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<QueryResult> {
    query(store, id, QueryKind::Whatif, bytes).await
}

async fn counterfactual(State(store): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> JsonResult<QueryResult> {
    query(store, id, QueryKind::Counterfactual, bytes).await
}

async fn last_query(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<Option<QueryContext>> {
    run(store, id, false, |s, _| Ok(s.query.last_query_context().cloned())).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct ClosestParams {
    rule_id: Option<usize>,
}

async fn closest(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<ClosestParams>,
) -> JsonResult<ClosestInfo> {
    run(store, id, false, move |s, _| s.closest(p.rule_id)).await.map(Json)
}

async fn complexity(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<ValueInfo> {
    run(store, id, false, |s, _| s.complexity()).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct FeatureParams {
    feature: String,
    bins: Option<usize>,
}

async fn bias(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<FeatureParams>,
) -> JsonResult<BiasInfo> {
    run(store, id, false, move |s, _| s.bias(&p.feature)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct TopParams {
    n: Option<usize>,
}

async fn top(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<TopParams>,
) -> JsonResult<Vec<FuzzyRule>> {
    let n = p.n.unwrap_or(crate::chat::DEFAULT_TOP_N);
    run(store, id, false, move |s, _| s.top_rules(n)).await.map(Json)
}

async fn kb_prolog(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    let text = run(store, id, false, |s, _| s.export_prolog()).await?;
    Ok(([(header::CONTENT_TYPE, "text/x-prolog; charset=utf-8")], text).into_response())
}

async fn kb_json(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    let text = run(store, id, false, |s, _| Ok(s.kb()?.to_json()?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn histogram(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<FeatureParams>,
) -> JsonResult<HistogramSeries> {
    let bins = p.bins.unwrap_or(DEFAULT_BINS);
    run(store, id, false, move |s, _| s.histogram(&p.feature, bins)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct PairParams {
    a: String,
    b: String,
}

async fn correlation(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<PairParams>,
) -> JsonResult<CorrelationSeries> {
    run(store, id, false, move |s, _| s.correlation(&p.a, &p.b)).await.map(Json)
}

async fn correlation_matrix(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> JsonResult<CorrelationMatrix> {
    run(store, id, false, |s, _| s.correlation_matrix()).await.map(Json)
}

pub fn router(store: AppState) -> Router {
    let session = Router::new()
        .route("/", get(get_session).delete(delete_session))
        .route("/events", get(events))
        .route("/message", post(message))
        .route("/dataset", post(load_dataset).get(dataset_info))
        .route("/schema", get(schema))
        .route("/predictions", post(predictions))
        .route("/train", post(train))
        .route("/build", post(build))
        .route("/query/whatif", post(whatif))
        .route("/query/counterfactual", post(counterfactual))
        .route("/query/last", get(last_query))
        .route("/closest", get(closest))
        .route("/complexity", get(complexity))
        .route("/bias", get(bias))
        .route("/top-rules", get(top))
        .route("/kb.pl", get(kb_prolog))
        .route("/kb.json", get(kb_json))
        .route("/histogram", get(histogram))
        .route("/correlation", get(correlation))
        .route("/correlation-matrix", get(correlation_matrix));
    Router::new()
        .route("/health", get(health))
        .route("/api/datasets", get(list_datasets))
        .route("/api/sessions", post(create_session))
        .nest("/api/sessions/{id}", session)
        .with_state(store)
}
