use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::AppState;
use crate::analysis::{self, AnalysisError, AnalysisInput};
use crate::domain::{MovieId, Portrait, Score, Section, UserId};
use crate::edits::{EditError, EditRecord};
use crate::metrics::{EventKind, InteractionEvent};
use crate::service::ServiceError;
use crate::store;
use crate::summarize::GenerationRecord;
use crate::treemap::{treemap, TreemapCategory, TreemapSlice};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("no portrait has been generated for this user yet")]
    NotYetGenerated,
    #[error("base version {base} is stale, current is {current}")]
    StaleVersion { base: u64, current: u64 },
    #[error("the {0} section cannot be empty")]
    EmptySection(Section),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    InsufficientData(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("missing or wrong bearer token")]
    Unauthorized,
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status_code(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::UnknownUser(_) => (StatusCode::NOT_FOUND, "unknown_user"),
            ApiError::NotYetGenerated => (StatusCode::CONFLICT, "not_yet_generated"),
            ApiError::StaleVersion { .. } => (StatusCode::CONFLICT, "stale_version"),
            ApiError::EmptySection(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_section"),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::Unprocessable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
            ApiError::InsufficientData(_) => (StatusCode::CONFLICT, "insufficient_data"),
            ApiError::Provider(_) => (StatusCode::BAD_GATEWAY, "provider_failure"),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_code();
        let mut body = json!({ "error": code, "message": self.to_string() });
        if let ApiError::StaleVersion { current, .. } = self {
            body["current_version"] = json!(current);
        }
        (status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::NotYetGenerated => ApiError::NotYetGenerated,
            ServiceError::StaleVersion { base, current } => ApiError::StaleVersion { base, current },
            ServiceError::EmptySection(s) => ApiError::EmptySection(s),
            ServiceError::Pipeline(p) if p.is_skip() => ApiError::Unprocessable(p.to_string()),
            ServiceError::Pipeline(p) => ApiError::Provider(p.to_string()),
            ServiceError::Edit(EditError::EmptyBefore) => ApiError::Internal(e.to_string()),
            ServiceError::Edit(p) => ApiError::Provider(p.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<store::StoreError> for ApiError {
    fn from(e: store::StoreError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InsufficientData(m) => ApiError::InsufficientData(m),
            AnalysisError::BadWindow(_) => ApiError::BadRequest(e.to_string()),
            AnalysisError::Provider(p) => ApiError::Provider(p.to_string()),
            AnalysisError::Store(s) => s.into(),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<AppState>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn known(state: &AppState, id: &str) -> ApiResult<UserId> {
    let user = UserId::from(id);
    if state.knows(&user) {
        Ok(user)
    } else {
        Err(ApiError::UnknownUser(user))
    }
}

async fn auth(State(state): State<Shared>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/users", get(list_users))
        .route("/users/{id}/portrait", get(get_portrait))
        .route("/users/{id}/portrait/versions", get(get_versions))
        .route("/users/{id}/portrait/{section}", put(put_section))
        .route("/users/{id}/regenerate", post(regenerate))
        .route("/users/{id}/status", get(status))
        .route("/users/{id}/treemap", get(get_treemap))
        .route("/users/{id}/edits", get(get_edits))
        .route("/users/{id}/events", post(post_events))
        .route("/analysis/report", get(report))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state);
    Router::new().nest("/api/v1", api)
}

async fn list_users(State(state): State<Shared>) -> Json<Vec<UserId>> {
    Json(state.users())
}

async fn get_portrait(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Portrait>> {
    let user = known(&state, &id)?;
    let view = state.view(&user).ok_or(ApiError::NotYetGenerated)?;
    view.latest().cloned().map(Json).ok_or(ApiError::NotYetGenerated)
}

async fn get_versions(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Vec<Portrait>>> {
    let user = known(&state, &id)?;
    Ok(Json(state.view(&user).map(|v| v.versions.clone()).unwrap_or_default()))
}

#[derive(Debug, Deserialize)]
pub struct EditBody {
    pub text: String,
    pub base_version: u64,
}

#[derive(Debug, Serialize)]
pub struct EditResponse {
    pub portrait: Portrait,
    pub edit: EditRecord,
}

async fn put_section(
    State(state): State<Shared>,
    Path((id, section)): Path<(String, String)>,
    Json(body): Json<EditBody>,
) -> ApiResult<Json<EditResponse>> {
    let user = known(&state, &id)?;
    let section: Section = section
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("unknown section {section:?}")))?;
    if state.view(&user).is_none_or(|v| v.latest().is_none()) {
        return Err(ApiError::NotYetGenerated);
    }
    blocking(move || {
        let slot = state.slot(&user)?;
        let now = state.clock.now();
        let (portrait, edit) =
            slot.write(|s| state.engine.apply_edit(s, section, &body.text, body.base_version, now))?;
        Ok(Json(EditResponse { portrait, edit }))
    })
    .await
}

#[derive(Debug, Deserialize, Default)]
pub struct RegenerateQuery {
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
pub struct Regenerated {
    pub portrait: Portrait,
    pub record: GenerationRecord,
}

async fn regenerate(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<RegenerateQuery>,
) -> ApiResult<Response> {
    let user = known(&state, &id)?;
    blocking(move || {
        let slot = state.slot(&user)?;
        let now = state.clock.now();
        match slot.write(|s| state.engine.check(s, now, now, q.force))? {
            Some(g) => Ok(Json(Regenerated {
                portrait: g.portrait,
                record: g.record,
            })
            .into_response()),
            None => Ok(StatusCode::NO_CONTENT.into_response()),
        }
    })
    .await
}

#[derive(Debug, Serialize)]
pub struct Status {
    pub user_id: UserId,
    pub version: Option<u64>,
    pub last_generated_at: Option<DateTime<Utc>>,
    pub ratings_at_generation: Option<u64>,
    pub ratings_now: u64,
    pub edits: usize,
}

async fn status(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Status>> {
    let user = known(&state, &id)?;
    let view = state.view(&user);
    let gen = view.as_ref().and_then(|v| v.last_generation.as_ref());
    let ratings_now = match &view {
        Some(v) => state.engine.rating_count(v),
        None => state.engine.rating_count(&store::UserState::new(user.clone())),
    };
    Ok(Json(Status {
        version: view.as_ref().and_then(|v| v.latest()).map(|p| p.version),
        last_generated_at: gen.map(|g| g.generated_at),
        ratings_at_generation: gen.map(|g| g.ratings_count_at_generation),
        ratings_now,
        edits: view.as_ref().map_or(0, |v| v.edit_count),
        user_id: user,
    }))
}

#[derive(Debug, Deserialize)]
pub struct TreemapQuery {
    pub category: Option<String>,
}

async fn get_treemap(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TreemapQuery>,
) -> ApiResult<Json<TreemapSlice>> {
    let user = known(&state, &id)?;
    let category: TreemapCategory = q
        .category
        .as_deref()
        .unwrap_or("genre")
        .parse()
        .map_err(ApiError::BadRequest)?;
    let view = state
        .view(&user)
        .unwrap_or_else(|| Arc::new(store::UserState::new(user.clone())));
    let ratings = state.engine.ratings_for(&view);
    Ok(Json(treemap(
        &state.engine.dataset.catalog,
        ratings.iter().map(|r| &r.movie_id),
        category,
    )))
}

async fn get_edits(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Vec<EditRecord>>> {
    let user = known(&state, &id)?;
    let dir = store::user_dir(&state.store_dir, &user);
    blocking(move || Ok(Json(store::read_user_logs(&dir)?.edits))).await
}

#[derive(Debug, Deserialize)]
pub struct EventBody {
    pub kind: EventKind,
    #[serde(default)]
    pub movie_id: Option<MovieId>,
    #[serde(default)]
    pub score: Option<Score>,
    /// Defaults to the server clock.
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

/// Records events for a user, creating the user on first contact.
async fn post_events(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<Vec<EventBody>>,
) -> ApiResult<Json<serde_json::Value>> {
    let user = UserId::from(id);
    let now = state.clock.now();
    let mut events = Vec::with_capacity(body.len());
    for (i, b) in body.into_iter().enumerate() {
        let e = InteractionEvent {
            user_id: user.clone(),
            kind: b.kind,
            movie_id: b.movie_id,
            score: b.score,
            timestamp: b.timestamp.unwrap_or(now),
        };
        e.validate().map_err(|err| ApiError::Unprocessable(format!("event {i}: {err}")))?;
        if let Some(m) = &e.movie_id {
            if state.engine.dataset.catalog.movie(m).is_none() {
                return Err(ApiError::Unprocessable(format!("event {i}: unknown movie {m}")));
            }
        }
        events.push(e);
    }
    blocking(move || {
        let slot = state.slot(&user)?;
        let n = events.len();
        slot.write(|s| events.iter().try_for_each(|e| s.record_event(e)))?;
        Ok(Json(json!({ "accepted": n })))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub window: Option<String>,
    pub baseline: Option<String>,
    pub format: Option<String>,
}

async fn report(State(state): State<Shared>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let json = match q.format.as_deref() {
        None | Some("csv") => false,
        Some("json") => true,
        Some(other) => return Err(ApiError::BadRequest(format!("unknown format {other:?}"))),
    };
    let window = analysis::parse_window(
        q.window
            .as_deref()
            .ok_or_else(|| ApiError::BadRequest("window is required".into()))?,
    )?;
    let baseline = match q.baseline.as_deref() {
        Some(b) => analysis::parse_window(b)?,
        None => return Err(ApiError::InsufficientData("no baseline window given".into())),
    };
    blocking(move || {
        let input = AnalysisInput::from_store(&state.store_dir, state.engine.dataset.ratings.clone())?;
        let embeddings = analysis::movie_embeddings(
            &state.engine.dataset.catalog,
            state.engine.embedder.as_ref(),
            input.event_movies(),
        )
        .map_err(|e| ApiError::Provider(e.to_string()))?;
        let a = analysis::analyze(&input, window, baseline, None, &embeddings, state.metrics)?;
        Ok(if json {
            ([(header::CONTENT_TYPE, "application/json")], analysis::report_json(&a.report)).into_response()
        } else {
            ([(header::CONTENT_TYPE, "text/csv")], analysis::report_csv(&a.report)).into_response()
        })
    })
    .await
}
