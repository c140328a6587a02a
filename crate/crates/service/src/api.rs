use std::collections::HashMap;
use std::io;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use taletiles::Action;
use tokio::net::TcpListener;
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::config::ServiceConfig;
use crate::session::{CreateRequest, Session, SessionError};
use crate::store::SessionStore;

type Slot = Arc<Mutex<Session>>;

/// Shared server state: configuration, the store and the live sessions.
pub struct AppState {
    config: ServiceConfig,
    store: SessionStore,
    sessions: std::sync::Mutex<HashMap<String, Slot>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> io::Result<Arc<Self>> {
        let store = SessionStore::open(&config.data_dir)?;
        Ok(Arc::new(Self { config, store, sessions: Default::default() }))
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    async fn slot(self: &Arc<Self>, id: &str) -> Result<Slot, ApiError> {
        if let Some(slot) = self.sessions.lock().unwrap().get(id) {
            return Ok(slot.clone());
        }
        let state = self.clone();
        let key = id.to_string();
        let loaded = blocking(move || state.store.load(&key)).await?;
        let session = loaded.ok_or_else(|| SessionError::NotFound(id.to_string()))?;
        let mut sessions = self.sessions.lock().unwrap();
        Ok(sessions.entry(id.to_string()).or_insert_with(|| Arc::new(Mutex::new(session))).clone())
    }

    /// Runs `op` on a copy of the session off the async runtime and commits
    /// the copy only once it has been persisted.
    async fn mutate<T, F>(self: &Arc<Self>, id: &str, op: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session, &ServiceConfig) -> Result<T, SessionError> + Send + 'static,
    {
        let slot = self.slot(id).await?;
        let mut guard = slot.lock().await;
        let mut session = guard.clone();
        let state = self.clone();
        let (session, result) = blocking(move || {
            let result = op(&mut session, &state.config)?;
            state.store.save(&session)?;
            Ok((session, result))
        })
        .await?;
        *guard = session;
        Ok(result)
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, SessionError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError(SessionError::Internal(e.to_string())))?.map_err(ApiError)
}

struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(SessionError::Invalid(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SessionError::Invalid(_) => StatusCode::BAD_REQUEST,
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Illegal(_) => StatusCode::CONFLICT,
            SessionError::Narration(_) => StatusCode::BAD_GATEWAY,
            SessionError::Storage(_) | SessionError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
struct AdaptRequest {
    target: u64,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(request) = body?;
    let worker = state.clone();
    let session = blocking(move || {
        let session = Session::create(uuid::Uuid::new_v4().to_string(), &request, &worker.config)?;
        worker.store.save(&session)?;
        Ok(session)
    })
    .await?;
    let view = session.view();
    state.sessions.lock().unwrap().insert(session.id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id).await?;
    let view = slot.lock().await.view();
    Ok(Json(view))
}

async fn get_story(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let slot = state.slot(&id).await?;
    let story = slot.lock().await.story();
    Ok(Json(story))
}

async fn act(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<Action>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(action) = body?;
    let report = state.mutate(&id, move |session, config| session.act(action, config)).await?;
    Ok(Json(report))
}

async fn adapt(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AdaptRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(request) = body?;
    let report = state.mutate(&id, move |session, config| session.adapt(request.target, config)).await?;
    Ok(Json(report))
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let layer = CorsLayer::new().allow_methods([Method::GET, Method::POST]).allow_headers([header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        return Some(layer.allow_origin(Any));
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    Some(layer.allow_origin(AllowOrigin::list(list)))
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/adapt", post(adapt))
        .route("/sessions/{id}/story", get(get_story));
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if let Some(layer) = cors(&state.config.cors_origins) {
        app = app.layer(layer);
    }
    app.with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: TcpListener, config: ServiceConfig) -> io::Result<()> {
    let app = router(AppState::new(config)?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
