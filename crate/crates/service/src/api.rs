//! The /v1 HTTP API.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crowdrule_core::analytics::{BlindedItem, JudgmentRecord};
use crowdrule_core::builder::{finalize, options, render_tokens, replay, BuilderError, BuilderState};
use crowdrule_core::dataset::Dataset;
use crowdrule_core::model::read_jsonl;
use crowdrule_core::orchestration::{check_reconstruction, get_help, OrchestrationError};
use crowdrule_core::rule::partition;

use crate::payload::*;
use crate::store::{Store, StoreError};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.into(),
                message: message.into(),
                index: None,
            },
        }
    }

    fn builder(index: usize, e: BuilderError) -> Self {
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_action", e.to_string());
        err.body.index = Some(index);
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use OrchestrationError as O;
        let (status, code) = match &e {
            StoreError::Orchestration(o) => match o {
                O::UnknownWorker(_) => (StatusCode::NOT_FOUND, "unknown_worker"),
                O::UnknownQuestion(_) => (StatusCode::NOT_FOUND, "unknown_question"),
                O::LimitExceeded { .. } => (StatusCode::GONE, "limit_reached"),
                O::AlreadyAnswered(_) => (StatusCode::CONFLICT, "already_answered"),
                O::ConditionMismatch(_) => (StatusCode::UNPROCESSABLE_ENTITY, "condition_mismatch"),
                O::NotSkippable => (StatusCode::UNPROCESSABLE_ENTITY, "not_skippable"),
                O::WrongMode(_) => (StatusCode::UNPROCESSABLE_ENTITY, "wrong_mode"),
                O::ExhaustedPool(_) | O::Table(_) => (StatusCode::INTERNAL_SERVER_ERROR, "dataset"),
            },
            StoreError::Io { .. } | StoreError::Corrupt { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        if status.is_server_error() {
            tracing::error!("{e}");
        }
        ApiError::new(status, code, e.to_string())
    }
}

/// A JSON body. Anything that does not parse into `T` is a 400.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(r) => Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "malformed_request",
                r.body_text(),
            )),
        }
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|r| ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", r.body_text()))
}

/// Blinded items and the verdicts recorded so far.
pub struct Judging {
    items: Vec<BlindedItem>,
    out: Mutex<(File, BTreeSet<(String, String)>)>,
}

impl Judging {
    /// `items_path` holds blinded items; verdicts are appended to
    /// `judgments_path`, which may already hold some.
    pub fn open(items_path: &Path, judgments_path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(items_path).with_context(|| format!("reading {}", items_path.display()))?;
        let items: Vec<BlindedItem> = read_jsonl(&text, &["blinded_id", "state_render", "action_text"])
            .with_context(|| format!("parsing {}", items_path.display()))?
            .into_iter()
            .map(|(_, i)| i)
            .collect();
        let existing = match std::fs::read_to_string(judgments_path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e).with_context(|| format!("reading {}", judgments_path.display())),
        };
        let seen = read_jsonl::<JudgmentRecord>(&existing, &["blinded_id", "verdict"])
            .with_context(|| format!("parsing {}", judgments_path.display()))?
            .into_iter()
            .map(|(_, j)| (j.blinded_id, j.judge_id))
            .collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(judgments_path)
            .with_context(|| format!("opening {}", judgments_path.display()))?;
        Ok(Judging {
            items,
            out: Mutex::new((file, seen)),
        })
    }

    fn record(&self, j: &JudgmentRecord) -> Result<VerdictAck, ApiError> {
        if !self.items.iter().any(|i| i.blinded_id == j.blinded_id) {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_item",
                format!("no item `{}`", j.blinded_id),
            ));
        }
        let mut guard = self.out.lock().unwrap_or_else(|p| p.into_inner());
        let (file, seen) = &mut *guard;
        let key = (j.blinded_id.clone(), j.judge_id.clone());
        if seen.contains(&key) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "already_judged",
                format!("`{}` was already judged by `{}`", j.blinded_id, j.judge_id),
            ));
        }
        let line = serde_json::to_string(j).expect("judgment serializes") + "\n";
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
        seen.insert(key);
        let remaining = self
            .items
            .iter()
            .filter(|i| !seen.contains(&(i.blinded_id.clone(), j.judge_id.clone())))
            .count();
        Ok(VerdictAck {
            blinded_id: j.blinded_id.clone(),
            remaining,
        })
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub judging: Option<Arc<Judging>>,
}

impl AppState {
    fn ds(&self) -> &Dataset {
        self.store.dataset()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/session", post(session))
        .route("/v1/task/next", get(next_task))
        .route("/v1/response", post(respond))
        .route("/v1/rule/options", post(rule_options))
        .route("/v1/rule/preview", post(rule_preview))
        .route("/v1/rule/submit", post(rule_submit))
        .route("/v1/help", post(help))
        .route("/v1/help/reconstruct", post(help_reconstruct))
        .route("/v1/glossary", get(glossary))
        .route("/v1/judging/items", get(judging_items))
        .route("/v1/judging/verdict", post(judging_verdict))
        .with_state(state)
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Store calls may sync the log to disk, so they run off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
        )),
    }
}

async fn session(State(app): State<AppState>, Body(req): Body<SessionRequest>) -> ApiResult<SessionResponse> {
    if req.worker_id.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_request",
            "worker_id is empty",
        ));
    }
    blocking(move || {
        let (info, at) = app.store.session_at(&req.worker_id)?;
        Ok(SessionResponse::new(info, at))
    })
    .await
}

async fn next_task(State(app): State<AppState>, q: Result<Query<WorkerQuery>, QueryRejection>) -> ApiResult<HitView> {
    let q = query(q)?;
    blocking(move || {
        let hit = app.store.next_task(&q.worker_id)?;
        Ok(app.store.read(|st| hit_view(&hit, st, app.ds())))
    })
    .await
}

async fn respond(State(app): State<AppState>, Body(req): Body<ResponseRequest>) -> ApiResult<ResponseReply> {
    blocking(move || {
        let out = app
            .store
            .respond(&req.worker_id, &req.question_id, req.answer, req.explanation.as_deref())?;
        Ok(ResponseReply::new(out, app.ds()))
    })
    .await
}

fn replay_actions(req: &[crowdrule_core::builder::BuilderAction], ds: &Dataset) -> Result<BuilderState, ApiError> {
    replay(req, &ds.registry).map_err(|(i, e)| ApiError::builder(i, e))
}

async fn rule_options(State(app): State<AppState>, Body(req): Body<BuilderRequest>) -> ApiResult<OptionsResponse> {
    let ds = app.ds();
    let b = replay_actions(&req.actions, ds)?;
    let opts = match options(&b, &ds.registry) {
        Ok(o) => o,
        Err(BuilderError::Terminal) => Vec::new(),
        Err(e) => return Err(ApiError::builder(req.actions.len(), e)),
    };
    Ok(Json(OptionsResponse {
        phase: b.phase(),
        tokens: render_tokens(&b),
        options: opts,
    }))
}

/// Read-only: evaluates the rule over every state and picks exemplars.
pub fn preview(req: &PreviewRequest, ds: &Dataset) -> Result<PreviewResponse, ApiError> {
    let b = replay_actions(&req.actions, ds)?;
    let rule =
        finalize(&b).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "incomplete", e.to_string()))?;
    let part = partition(&rule, &ds.states, &ds.registry)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "evaluation", e.to_string()))?;
    let pick = |ids: &[String]| ds.states.exemplar(ids, req.cursor).ok().map(StateView::from);
    Ok(PreviewResponse {
        tokens: render_tokens(&b),
        included: part.included.len(),
        excluded: part.excluded.len(),
        included_exemplar: pick(&part.included),
        excluded_exemplar: pick(&part.excluded),
        cursor: req.cursor,
        rule,
    })
}

async fn rule_preview(State(app): State<AppState>, Body(req): Body<PreviewRequest>) -> ApiResult<PreviewResponse> {
    preview(&req, app.ds()).map(Json)
}

async fn rule_submit(
    State(app): State<AppState>,
    Body(req): Body<SubmitRequest>,
) -> ApiResult<crowdrule_core::orchestration::SubmitOutcome> {
    blocking(move || Ok(app.store.submit_rule(&req.worker_id, &req.question_id, &req.actions)?)).await
}

fn unknown_action(id: &str) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "unknown_action",
        format!("unknown action `{id}`"),
    )
}

async fn help(
    State(app): State<AppState>,
    Body(req): Body<HelpRequest>,
) -> ApiResult<crowdrule_core::orchestration::HelpFeedback> {
    let ds = app.ds();
    let action = ds
        .action(&req.action_id)
        .ok_or_else(|| unknown_action(&req.action_id))?;
    let b = replay_actions(&req.actions, ds)?;
    Ok(Json(get_help(&b, &action, ds)))
}

/// `action_id` names the expert example being rebuilt.
async fn help_reconstruct(State(app): State<AppState>, Body(req): Body<HelpRequest>) -> ApiResult<ReconstructResponse> {
    let ds = app.ds();
    let ex = ds
        .help_examples
        .iter()
        .find(|h| h.action_id == req.action_id)
        .ok_or_else(|| unknown_action(&req.action_id))?;
    Ok(Json(ReconstructResponse {
        correct: check_reconstruction(&ex.rule, &req.actions, ds),
    }))
}

#[derive(Serialize)]
struct Glossary {
    entries: Vec<GlossaryEntry>,
}

async fn glossary(State(app): State<AppState>) -> Json<Glossary> {
    Json(Glossary {
        entries: app.ds().registry.iter().map(GlossaryEntry::from).collect(),
    })
}

#[derive(Serialize)]
struct JudgingItems<'a> {
    items: &'a [BlindedItem],
}

fn judging(app: &AppState) -> Result<&Arc<Judging>, ApiError> {
    app.judging
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_judging", "no judging set is configured"))
}

async fn judging_items(State(app): State<AppState>) -> Result<Response, ApiError> {
    let j = judging(&app)?;
    Ok(Json(JudgingItems { items: &j.items }).into_response())
}

async fn judging_verdict(State(app): State<AppState>, Body(req): Body<JudgmentRecord>) -> ApiResult<VerdictAck> {
    let j = judging(&app)?.clone();
    blocking(move || j.record(&req)).await
}
