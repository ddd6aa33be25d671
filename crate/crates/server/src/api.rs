use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use simweave::graph::WidgetAction;
use simweave::harness::Png;
use simweave::pipeline::{
    Command, Engine, EngineError, ErrorClass, Executed, GoalPick, Outcome, ScenarioPick, Session,
    StageContent, StageId, StageStatus,
};
use simweave::prompts::{BoundingBox, WidgetSuggestion};
use simweave::resolution::Complaint;

use crate::store::{ShareRecord, Store, StoreError};

type SessionCell = Arc<tokio::sync::Mutex<Session>>;

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

/// (session, route, idempotency key)
type ReplyKey = (String, String, String);

struct Inner {
    engine: Engine,
    store: Arc<dyn Store>,
    sessions: Mutex<HashMap<String, SessionCell>>,
    replies: Mutex<HashMap<ReplyKey, (StatusCode, Value)>>,
}

impl AppState {
    pub fn new(engine: Engine, store: Arc<dyn Store>) -> Self {
        Self {
            inner: Arc::new(Inner {
                engine,
                store,
                sessions: Mutex::new(HashMap::new()),
                replies: Mutex::new(HashMap::new()),
            }),
        }
    }

    fn cell(&self, id: &str) -> Result<SessionCell, ApiError> {
        if let Some(c) = self.inner.sessions.lock().unwrap().get(id) {
            return Ok(c.clone());
        }
        let loaded = self
            .inner
            .store
            .load(id)?
            .ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
        let mut map = self.inner.sessions.lock().unwrap();
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(tokio::sync::Mutex::new(loaded)))
            .clone())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    detail: String,
    journal_ref: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            detail: detail.into(),
            journal_ref: None,
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "NotFound",
            format!("{} not found", what.into()),
        )
    }

    fn engine(e: &EngineError, journal_ref: Option<u64>) -> Self {
        let status = match e.class() {
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorClass::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            code: e.code(),
            detail: e.to_string(),
            journal_ref,
        }
    }

    fn body(&self) -> Value {
        json!({ "code": self.code, "detail": self.detail, "journalRef": self.journal_ref })
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "storage failure");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Storage", e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidBody",
            e.body_text(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

type ApiResult = Result<(StatusCode, Json<Value>), ApiError>;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionEnvelope {
    pub session_id: String,
    pub stage_statuses: BTreeMap<StageId, StageStatus>,
    pub current_stage: StageId,
    pub links: BTreeMap<StageId, String>,
}

impl SessionEnvelope {
    pub fn of(s: &Session) -> Self {
        Self {
            session_id: s.id.clone(),
            stage_statuses: s.statuses(),
            current_stage: s.current_stage(),
            links: StageId::ALL
                .into_iter()
                .map(|st| (st, format!("/sessions/{}/stages/{st}", s.id)))
                .collect(),
        }
    }
}

fn executed_body(s: &Session, done: &Executed) -> Value {
    json!({
        "session": SessionEnvelope::of(s),
        "outcome": done.outcome,
        "warnings": done.warnings,
        "journalRef": done.journal_ref,
    })
}

fn stage_body(s: &Session, stage: StageId) -> Value {
    let slot = s.slot(stage);
    let (format, content) = match &slot.content {
        Some(StageContent::Graph(g)) => ("graph", Some(g.serialize())),
        Some(StageContent::Document(d)) => ("html", Some(d.clone())),
        None => (if stage.is_graph() { "graph" } else { "html" }, None),
    };
    json!({
        "stage": stage,
        "status": slot.status,
        "format": format,
        "content": content,
        "issues": slot.issues,
        "provenance": slot.provenance,
    })
}

/// Runs one command under the session's lock and persists the result,
/// failures included, since they extend the journal too.
async fn run(st: &AppState, id: &str, cmd: Command) -> Result<(Session, Executed), ApiError> {
    let cell = st.cell(id)?;
    let mut s = cell.lock().await;
    run_locked(st, &mut s, cmd).await
}

async fn run_locked(
    st: &AppState,
    s: &mut Session,
    cmd: Command,
) -> Result<(Session, Executed), ApiError> {
    let before = s.journal.len();
    let result = st.inner.engine.execute(s, cmd).await;
    st.inner.store.save(s, &s.journal[before..])?;
    match result {
        Ok(done) => Ok((s.clone(), done)),
        Err(e) => Err(ApiError::engine(&e, s.journal.last().map(|ev| ev.seq))),
    }
}

async fn respond(st: &AppState, id: &str, cmd: Command) -> ApiResult {
    let (s, done) = run(st, id, cmd).await?;
    Ok((StatusCode::OK, Json(executed_body(&s, &done))))
}

/// Like [`respond`], but a repeated `Idempotency-Key` gets the first
/// response again without re-running the command.
async fn respond_once(
    st: &AppState,
    id: &str,
    route: &str,
    headers: &HeaderMap,
    cmd: Command,
) -> Response {
    let key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(|k| (id.to_string(), route.to_string(), k.to_string()));
    if let Some(k) = &key {
        if let Some((status, body)) = st.inner.replies.lock().unwrap().get(k).cloned() {
            return (status, Json(body)).into_response();
        }
    }
    let (status, body) = match respond(st, id, cmd).await {
        Ok((status, Json(body))) => (status, body),
        Err(e) => (e.status, e.body()),
    };
    if let Some(k) = key {
        st.inner
            .replies
            .lock()
            .unwrap()
            .insert(k, (status, body.clone()));
    }
    (status, Json(body)).into_response()
}

fn parse_stage(raw: &str) -> Result<StageId, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found(format!("stage {raw}")))
}

async fn create_session(State(st): State<AppState>) -> ApiResult {
    let s = st.inner.engine.create_session();
    st.inner.store.save(&s, &s.journal)?;
    let body = json!({
        "session": SessionEnvelope::of(&s),
        "journalRef": s.journal.last().map(|e| e.seq),
    });
    st.inner
        .sessions
        .lock()
        .unwrap()
        .insert(s.id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let cell = st.cell(&id)?;
    let s = cell.lock().await;
    Ok((StatusCode::OK, Json(json!(SessionEnvelope::of(&s)))))
}

async fn get_journal(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let cell = st.cell(&id)?;
    let s = cell.lock().await;
    let body: String = s
        .journal
        .iter()
        .map(|e| e.to_ndjson_line() + "\n")
        .collect();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

#[derive(Deserialize)]
struct ContentBody {
    text: String,
}

async fn submit_content(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ContentBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    respond(&st, &id, Command::SubmitContent { text: b.text }).await
}

async fn get_stage(
    State(st): State<AppState>,
    Path((id, stage)): Path<(String, String)>,
) -> ApiResult {
    let stage = parse_stage(&stage)?;
    let cell = st.cell(&id)?;
    let s = cell.lock().await;
    Ok((StatusCode::OK, Json(stage_body(&s, stage))))
}

async fn stage_command(st: &AppState, id: &str, stage: StageId, cmd: Command) -> ApiResult {
    let (s, done) = run(st, id, cmd).await?;
    let mut body = executed_body(&s, &done);
    body["stage"] = stage_body(&s, stage);
    Ok((StatusCode::OK, Json(body)))
}

async fn widget(
    State(st): State<AppState>,
    Path((id, stage)): Path<(String, String)>,
    body: Result<Json<WidgetAction>, JsonRejection>,
) -> ApiResult {
    let stage = parse_stage(&stage)?;
    let Json(action) = body?;
    stage_command(&st, &id, stage, Command::Refine { stage, action }).await
}

async fn commit(
    State(st): State<AppState>,
    Path((id, stage)): Path<(String, String)>,
) -> ApiResult {
    let stage = parse_stage(&stage)?;
    stage_command(&st, &id, stage, Command::Commit { stage }).await
}

async fn discard(
    State(st): State<AppState>,
    Path((id, stage)): Path<(String, String)>,
) -> ApiResult {
    let stage = parse_stage(&stage)?;
    stage_command(&st, &id, stage, Command::Discard { stage }).await
}

/// Options are generated once and served from the session afterwards.
async fn options(st: &AppState, id: &str, scenarios: bool) -> ApiResult {
    let cell = st.cell(id)?;
    let mut s = cell.lock().await;
    let cached = if scenarios {
        &s.scenario_options
    } else {
        &s.goal_options
    };
    if !cached.is_empty() {
        return Ok((StatusCode::OK, Json(json!({ "items": cached }))));
    }
    let cmd = if scenarios {
        Command::ListScenarios
    } else {
        Command::ListGoals
    };
    let (s, done) = run_locked(st, &mut s, cmd).await?;
    let mut body = executed_body(&s, &done);
    if let Outcome::Options { items } = &done.outcome {
        body["items"] = json!(items);
    }
    Ok((StatusCode::OK, Json(body)))
}

async fn list_scenarios(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    options(&st, &id, true).await
}

async fn list_goals(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    options(&st, &id, false).await
}

#[derive(Deserialize)]
struct ChoiceBody<T> {
    choice: T,
}

async fn select_scenario(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ChoiceBody<ScenarioPick>>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    respond(&st, &id, Command::SelectScenario { choice: b.choice }).await
}

async fn select_goal(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ChoiceBody<GoalPick>>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    respond(&st, &id, Command::SelectGoal { choice: b.choice }).await
}

async fn generate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    respond_once(&st, &id, "generate", &headers, Command::Generate).await
}

async fn derive_procedure(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    respond_once(&st, &id, "procedure", &headers, Command::DeriveProcedure).await
}

async fn generate_ui_graph(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    respond_once(&st, &id, "ui-graph", &headers, Command::GenerateUiGraph).await
}

async fn generate_code(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    respond_once(&st, &id, "code", &headers, Command::GenerateCode).await
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ChatBody {
    #[serde(flatten)]
    complaint: Complaint,
    #[serde(default)]
    type_code: Option<u8>,
}

async fn chat(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<ChatBody>, JsonRejection>,
) -> Response {
    let b = match body {
        Ok(Json(b)) => b,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let cmd = Command::Chat {
        complaint: b.complaint,
        type_code: b.type_code,
    };
    respond_once(&st, &id, "chat", &headers, cmd).await
}

async fn list_suggestions(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let cell = st.cell(&id)?;
    let s = cell.lock().await;
    Ok((StatusCode::OK, Json(json!({ "items": s.suggestions }))))
}

#[derive(Deserialize)]
struct ProposeBody {
    suggestion: WidgetSuggestion,
}

async fn propose(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ProposeBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    respond(
        &st,
        &id,
        Command::Propose {
            suggestion: b.suggestion,
        },
    )
    .await
}

#[derive(Deserialize, Default)]
struct AcceptBody {
    #[serde(default)]
    edited: Option<WidgetSuggestion>,
    #[serde(default)]
    screenshot: Option<Png>,
}

async fn accept(
    State(st): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
    body: Option<Json<AcceptBody>>,
) -> ApiResult {
    let b = body.map(|Json(b)| b).unwrap_or_default();
    let cmd = Command::Accept {
        index: n,
        edited: b.edited,
        screenshot: b.screenshot,
    };
    respond(&st, &id, cmd).await
}

async fn reject(State(st): State<AppState>, Path((id, n)): Path<(String, usize)>) -> ApiResult {
    respond(&st, &id, Command::Reject { index: n }).await
}

async fn run_tests(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    respond(&st, &id, Command::RunTests).await
}

async fn get_tests(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let cell = st.cell(&id)?;
    let s = cell.lock().await;
    let report = s
        .tests
        .as_ref()
        .ok_or_else(|| ApiError::not_found("test report"))?;
    Ok((StatusCode::OK, Json(json!(report))))
}

async fn play(State(st): State<AppState>, Path((id, n)): Path<(String, usize)>) -> ApiResult {
    respond(&st, &id, Command::Play { case: n }).await
}

/// `{"pass": true}` or `{"verdict": "fail", "note": "…"}`.
#[derive(Deserialize)]
struct VerdictBody {
    #[serde(default)]
    pass: Option<bool>,
    #[serde(default)]
    verdict: Option<String>,
    #[serde(default)]
    note: String,
}

async fn verdict(
    State(st): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
    body: Result<Json<VerdictBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    let pass = match (
        b.pass,
        b.verdict.as_deref().map(str::to_ascii_lowercase).as_deref(),
    ) {
        (Some(p), None) => p,
        (None, Some("pass")) => true,
        (None, Some("fail")) => false,
        _ => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "InvalidBody",
                "give either `pass` or `verdict` (pass|fail)",
            ))
        }
    };
    respond(
        &st,
        &id,
        Command::Verdict {
            case: n,
            pass,
            note: b.note,
        },
    )
    .await
}

#[derive(Deserialize)]
struct BoxBody {
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

async fn annotate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<BoxBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    respond(&st, &id, Command::Annotate { bbox: b.bbox }).await
}

#[derive(Deserialize, Default)]
struct ScreenshotBody {
    #[serde(default)]
    screenshot: Option<Png>,
}

async fn subgraph(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<ScreenshotBody>>,
) -> ApiResult {
    let b = body.map(|Json(b)| b).unwrap_or_default();
    respond(
        &st,
        &id,
        Command::SelectSubgraph {
            screenshot: b.screenshot,
        },
    )
    .await
}

async fn get_assumptions(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let cell = st.cell(&id)?;
    let s = cell.lock().await;
    let sheet = s
        .assumptions
        .as_ref()
        .ok_or_else(|| ApiError::not_found("assumption sheet"))?;
    Ok((StatusCode::OK, Json(json!(sheet))))
}

async fn make_assumptions(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    respond(&st, &id, Command::GetAssumptions).await
}

#[derive(Deserialize)]
struct AssumptionEdit {
    node: String,
    assumptions: Vec<String>,
}

async fn edit_assumptions(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<AssumptionEdit>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    let cmd = Command::ApplyAssumptions {
        node: b.node,
        assumptions: b.assumptions,
    };
    respond(&st, &id, cmd).await
}

#[derive(Deserialize)]
struct RedrawBody {
    sketch: Png,
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

async fn redraw(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<RedrawBody>, JsonRejection>,
) -> ApiResult {
    let Json(b) = body?;
    respond(
        &st,
        &id,
        Command::Redraw {
            sketch: b.sketch,
            bbox: b.bbox,
        },
    )
    .await
}

async fn share(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let cell = st.cell(&id)?;
    let mut s = cell.lock().await;
    let simulation_id = uuid::Uuid::new_v4().simple().to_string();
    let cmd = Command::Share {
        simulation_id: simulation_id.clone(),
    };
    let (s, done) = run_locked(&st, &mut s, cmd).await?;
    let document = s
        .document()
        .expect("share succeeded on a document")
        .to_string();
    st.inner.store.put_share(&ShareRecord {
        simulation_id: simulation_id.clone(),
        document,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        source_session_id: s.id.clone(),
    })?;
    let mut body = executed_body(&s, &done);
    body["simulationId"] = json!(simulation_id);
    body["url"] = json!(format!("/simulations/{simulation_id}"));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_simulation(
    State(st): State<AppState>,
    Path(sim): Path<String>,
) -> Result<Response, ApiError> {
    let rec = st
        .inner
        .store
        .get_share(&sim)?
        .ok_or_else(|| ApiError::not_found(format!("simulation {sim}")))?;
    Ok((
        [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
        rec.document,
    )
        .into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/journal", get(get_journal))
        .route("/sessions/{id}/content", post(submit_content))
        .route("/sessions/{id}/stages/{stage}", get(get_stage))
        .route("/sessions/{id}/stages/{stage}/widget", post(widget))
        .route("/sessions/{id}/stages/{stage}/commit", post(commit))
        .route("/sessions/{id}/stages/{stage}/discard", post(discard))
        .route("/sessions/{id}/scenarios", get(list_scenarios))
        .route("/sessions/{id}/scenario", post(select_scenario))
        .route("/sessions/{id}/goals", get(list_goals))
        .route("/sessions/{id}/goal", post(select_goal))
        .route("/sessions/{id}/procedure", post(derive_procedure))
        .route("/sessions/{id}/ui-graph", post(generate_ui_graph))
        .route("/sessions/{id}/code", post(generate_code))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/chat", post(chat))
        .route(
            "/sessions/{id}/suggestions",
            get(list_suggestions).post(propose),
        )
        .route("/sessions/{id}/suggestions/{n}/accept", post(accept))
        .route("/sessions/{id}/suggestions/{n}/reject", post(reject))
        .route("/sessions/{id}/tests", get(get_tests))
        .route("/sessions/{id}/tests/run", post(run_tests))
        .route("/sessions/{id}/tests/{n}/play", post(play))
        .route("/sessions/{id}/tests/{n}/verdict", post(verdict))
        .route("/sessions/{id}/annotations", post(annotate))
        .route("/sessions/{id}/subgraph", post(subgraph))
        .route(
            "/sessions/{id}/assumptions",
            get(get_assumptions)
                .post(make_assumptions)
                .put(edit_assumptions),
        )
        .route("/sessions/{id}/redraw", post(redraw))
        .route("/sessions/{id}/share", post(share))
        .route("/simulations/{sim}", get(get_simulation))
        .with_state(state)
}
