use std::convert::Infallible;

use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use iotsam_core::campaign::{self, available_schemes, resolve_scheme};
use iotsam_core::{
    filter_catalog, parse_document, serialize_document, serialize_document_compact, DeviceModel,
    Document, ManualSubmission, PlannedTest, Session, TestCaseCatalog, TestPlan, TestingProfile,
};
use serde::{Deserialize, Serialize};
use tokio_stream::wrappers::ReceiverStream;
use tokio_stream::StreamExt;

use crate::{ApiError, AppState};

pub(crate) fn api() -> Router<AppState> {
    Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/plan", get(get_plan))
        .route("/sessions/{id}/execute-automated", post(execute_automated))
        .route("/sessions/{id}/pending-manual", get(pending_manual))
        .route("/sessions/{id}/manual-results", post(manual_results))
        .route("/sessions/{id}/assess", post(assess))
        .route("/sessions/{id}/report", get(report))
        .route("/schemes", get(list_schemes))
}

/// Runs blocking store work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn canonical<T: Document>(status: StatusCode, doc: &T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], serialize_document(doc)).into_response()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SessionSummary {
    pub session_id: String,
    pub state: String,
    pub created_at: DateTime<Utc>,
    pub device_id: String,
    pub profile_id: String,
    pub plan_id: String,
    pub entries: usize,
    pub protocols: usize,
    pub pending_automated: usize,
    pub pending_manual: usize,
    pub overall: Option<String>,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            state: s.state.as_str().to_string(),
            created_at: s.created_at,
            device_id: s.device.device_id.clone(),
            profile_id: s.profile.profile_id.clone(),
            plan_id: s.plan.plan_id.clone(),
            entries: s.plan.entries.len(),
            protocols: s.protocols.len(),
            pending_automated: s.pending_automated().len(),
            pending_manual: s.pending_manual().len(),
            overall: s.assessment.as_ref().map(|a| a.report.overall.result.as_str().to_string()),
        }
    }
}

/// Manual entries still waiting for assessor input, in plan order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PendingManual {
    pub session_id: String,
    pub plan_id: String,
    pub entries: Vec<PlannedTest>,
}

async fn list_sessions(State(state): State<AppState>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    blocking(move || {
        let store = state.store();
        let mut out = Vec::new();
        for id in store.list_sessions()? {
            out.push(SessionSummary::from(&store.load_session(&id)?));
        }
        Ok(Json(out))
    })
    .await
}

fn parse_part<T: Document>(name: &str, bytes: &[u8]) -> Result<T, ApiError> {
    parse_document(bytes).map_err(|e| ApiError::bad_request(e.code(), format!("part `{name}`: {e}")))
}

async fn create_session(State(state): State<AppState>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let (mut device, mut profile, mut catalog, mut plan) = (None, None, None, None);
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("BAD_REQUEST", e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request("BAD_REQUEST", e.to_string()))?;
        match name.as_str() {
            "device" => device = Some(parse_part::<DeviceModel>(&name, &bytes)?),
            "profile" => profile = Some(parse_part::<TestingProfile>(&name, &bytes)?),
            "catalog" => catalog = Some(parse_part::<TestCaseCatalog>(&name, &bytes)?),
            "plan" => plan = Some(parse_part::<TestPlan>(&name, &bytes)?),
            other => {
                return Err(ApiError::bad_request(
                    "BAD_REQUEST",
                    format!("unexpected part `{other}`; expected device, profile, catalog and optionally plan"),
                ))
            }
        }
    }
    let missing = |part: &str| ApiError::bad_request("MISSING_PART", format!("multipart body lacks `{part}`"));
    let device = device.ok_or_else(|| missing("device"))?;
    let profile = profile.ok_or_else(|| missing("profile"))?;
    let catalog = catalog.ok_or_else(|| missing("catalog"))?;
    blocking(move || {
        let plan = match plan {
            Some(plan) => plan,
            None => filter_catalog(&catalog, &device, &profile)?,
        };
        let store = state.store();
        let id = store.create_session(&device, &profile, &catalog, &plan)?;
        let session = store.load_session(&id)?;
        Ok((StatusCode::CREATED, Json(SessionSummary::from(&session))).into_response())
    })
    .await
}

async fn load(state: AppState, id: String) -> Result<Session, ApiError> {
    blocking(move || Ok(state.store().load_session(&id)?)).await
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(SessionSummary::from(&load(state, id).await?)))
}

async fn get_plan(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(canonical(StatusCode::OK, &load(state, id).await?.plan))
}

async fn pending_manual(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<PendingManual>, ApiError> {
    let session = load(state, id).await?;
    Ok(Json(PendingManual {
        entries: session.pending_manual().into_iter().cloned().collect(),
        session_id: session.session_id,
        plan_id: session.plan.plan_id,
    }))
}

/// Releases the execution claim when the background run ends, however it ends.
struct Claim {
    state: AppState,
    session_id: String,
}

impl Drop for Claim {
    fn drop(&mut self) {
        self.state.release(&self.session_id);
    }
}

async fn execute_automated(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    if !state.claim(&id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "EXECUTION_RUNNING",
            format!("session `{id}` already has an automated run in progress"),
        ));
    }
    let claim = Claim {
        state: state.clone(),
        session_id: id.clone(),
    };
    // State errors surface as plain HTTP errors before the stream opens.
    let check_state = state.clone();
    let check_id = id.clone();
    blocking(move || Ok(check_state.store().begin_execution(&check_id).map(|_| ())?)).await?;

    let (tx, rx) = tokio::sync::mpsc::channel::<Event>(64);
    tokio::task::spawn_blocking(move || {
        let _claim = claim;
        let inner = &state.inner;
        let on_protocol = |protocol: &iotsam_core::ExecutionProtocol| {
            let event = Event::default().event("protocol").data(serialize_document_compact(protocol));
            // A disconnected client does not stop the run; protocols are already stored.
            let _ = tx.blocking_send(event);
        };
        let last = match campaign::run_automated(&inner.store, &id, &inner.registry, &inner.options, &on_protocol) {
            Ok(session) => Event::default()
                .event("done")
                .data(serde_json::to_string(&SessionSummary::from(&session)).expect("serializable")),
            Err(e) => {
                let error = ApiError::from(e);
                Event::default()
                    .event("error")
                    .data(serde_json::to_string(&error).expect("serializable"))
            }
        };
        let _ = tx.blocking_send(last);
    });
    let stream = ReceiverStream::new(rx).map(Ok::<_, Infallible>);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

async fn manual_results(State(state): State<AppState>, Path(id): Path<String>, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let submission: ManualSubmission =
        parse_document(&body).map_err(|e| ApiError::bad_request(e.code(), e.to_string()))?;
    blocking(move || {
        let (protocol, _) = campaign::submit_manual(state.store(), &id, &submission, state.inner.clock.as_ref())?;
        Ok(canonical(StatusCode::CREATED, &protocol))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct AssessQuery {
    #[serde(rename = "scheme-id")]
    scheme_id: Option<String>,
}

async fn assess(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<AssessQuery>,
) -> Result<Response, ApiError> {
    blocking(move || {
        let store = state.store();
        let scheme = resolve_scheme(store.root(), query.scheme_id.as_deref())?;
        let (record, _) = campaign::assess_session(store, &id, &scheme)?;
        Ok(canonical(StatusCode::OK, &record.report))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let format = query.format.unwrap_or_else(|| "machine".into());
    if format != "machine" && format != "text" {
        return Err(ApiError::bad_request(
            "UNKNOWN_FORMAT",
            format!("format `{format}` is not one of machine, text"),
        ));
    }
    let session = load(state, id).await?;
    let (report, text) = campaign::session_report(&session)?;
    Ok(if format == "text" {
        ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
    } else {
        canonical(StatusCode::OK, report)
    })
}

async fn list_schemes(State(state): State<AppState>) -> Result<Response, ApiError> {
    blocking(move || {
        let schemes = available_schemes(state.store().root())?;
        let body: Vec<serde_json::Value> = schemes
            .iter()
            .map(|s| serde_json::from_str(&serialize_document_compact(s)).expect("canonical json"))
            .collect();
        Ok(Json(body).into_response())
    })
    .await
}
