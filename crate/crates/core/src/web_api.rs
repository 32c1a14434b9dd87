//! JSON HTTP interface over the store: bearer-token login, latest capture,
//! archive listing and deletion, password change, contact management and
//! archived image bytes. A built UI bundle, if configured, is served at `/`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{FromRequestParts, Path as UrlPath, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tracing::warn;

use crate::ingest_ftp::sanitize_name;
use crate::store::{Contact, PhotoRecord, Store, StoreError};
use crate::time::Timestamp;

pub const SESSION_LIFETIME: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub token: String,
    pub account_id: i64,
    pub expires_at: Timestamp,
}

type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

/// Live sessions keyed by token. Each successful lookup slides the expiry
/// forward by the full lifetime.
pub struct SessionTable {
    sessions: Mutex<HashMap<String, Session>>,
    lifetime: Duration,
    clock: Clock,
}

impl SessionTable {
    pub fn new(lifetime: Duration) -> Self {
        SessionTable::with_clock(lifetime, Arc::new(Timestamp::now))
    }

    pub fn with_clock(lifetime: Duration, clock: Clock) -> Self {
        SessionTable {
            sessions: Mutex::new(HashMap::new()),
            lifetime,
            clock,
        }
    }

    pub fn create(&self, account_id: i64) -> Session {
        let mut raw = [0u8; 16];
        OsRng.fill_bytes(&mut raw);
        let now = (self.clock)();
        let session = Session {
            token: URL_SAFE_NO_PAD.encode(raw),
            account_id,
            expires_at: now + self.lifetime,
        };
        let mut table = self.sessions.lock().unwrap();
        table.retain(|_, s| s.expires_at > now);
        table.insert(session.token.clone(), session.clone());
        session
    }

    pub fn validate(&self, token: &str) -> Option<Session> {
        let now = (self.clock)();
        let mut table = self.sessions.lock().unwrap();
        let session = table.get_mut(token)?;
        if session.expires_at <= now {
            table.remove(token);
            return None;
        }
        session.expires_at = now + self.lifetime;
        Some(session.clone())
    }

    pub fn revoke(&self, token: &str) -> bool {
        self.sessions.lock().unwrap().remove(token).is_some()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct ApiState {
    pub store: Arc<Store>,
    pub sessions: SessionTable,
}

impl ApiState {
    pub fn new(store: Arc<Store>) -> Arc<Self> {
        Arc::new(ApiState {
            store,
            sessions: SessionTable::new(SESSION_LIFETIME),
        })
    }
}

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    Forbidden(String),
    NotFound(String),
    Unprocessable(String),
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "authentication required".to_string()),
            ApiError::Forbidden(m) => (StatusCode::FORBIDDEN, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => {
                warn!(error = %m, "internal error");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal error".to_string())
            }
        };
        let mut resp = (status, Json(ErrorBody { error: message })).into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => ApiError::NotFound(e.to_string()),
            StoreError::Invalid { .. } => ApiError::Unprocessable(e.to_string()),
            StoreError::InvalidCredentials => ApiError::Forbidden(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a store call off the async executor.
async fn blocking<T, F>(state: &Arc<ApiState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
{
    let store = Arc::clone(&state.store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

/// Extractor that requires `Authorization: Bearer <token>`.
pub struct Authenticated(pub Session);

fn bearer(parts: &Parts) -> Option<&str> {
    let value = parts.headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

impl FromRequestParts<Arc<ApiState>> for Authenticated {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<ApiState>) -> Result<Self, Self::Rejection> {
        let token = bearer(parts).ok_or(ApiError::Unauthorized)?;
        state
            .sessions
            .validate(token)
            .map(Authenticated)
            .ok_or(ApiError::Unauthorized)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoView {
    pub id: i64,
    pub name: String,
    /// URL of the image bytes.
    pub image: String,
    pub time: String,
    pub date: String,
}

impl From<&PhotoRecord> for PhotoView {
    fn from(r: &PhotoRecord) -> Self {
        PhotoView {
            id: r.id,
            name: r.photo_name.clone(),
            image: format!("/images/{}", r.file_name()),
            time: r.photo_time.clone(),
            date: r.photo_date.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
}

#[derive(Debug, Deserialize)]
pub struct PasswordRequest {
    pub old: String,
    pub new: String,
    pub confirm: String,
}

#[derive(Debug, Deserialize)]
pub struct ContactRequest {
    pub contact_no: String,
}

async fn login(State(state): State<Arc<ApiState>>, Json(req): Json<LoginRequest>) -> ApiResult<Json<LoginResponse>> {
    let result = blocking(&state, move |s| s.verify_login(&req.username, &req.password)).await;
    match result {
        Ok(account) => Ok(Json(LoginResponse {
            token: state.sessions.create(account.id).token,
        })),
        Err(ApiError::Forbidden(_)) => Err(ApiError::Unauthorized),
        Err(e) => Err(e),
    }
}

async fn logout(State(state): State<Arc<ApiState>>, Authenticated(session): Authenticated) -> StatusCode {
    state.sessions.revoke(&session.token);
    StatusCode::NO_CONTENT
}

async fn latest_photo(State(state): State<Arc<ApiState>>, _: Authenticated) -> ApiResult<Response> {
    Ok(match blocking(&state, |s| s.latest_photo()).await? {
        Some(r) => Json(PhotoView::from(&r)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn list_photos(State(state): State<Arc<ApiState>>, _: Authenticated) -> ApiResult<Json<Vec<PhotoView>>> {
    let records = blocking(&state, |s| s.list_photos()).await?;
    Ok(Json(records.iter().map(PhotoView::from).collect()))
}

async fn delete_photo(
    State(state): State<Arc<ApiState>>,
    _: Authenticated,
    UrlPath(id): UrlPath<i64>,
) -> ApiResult<StatusCode> {
    blocking(&state, move |s| s.delete_photo(id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

/// Resolves `name` inside `dir`, refusing anything that could escape it.
pub fn confine(dir: &Path, name: &str) -> Option<PathBuf> {
    if name.starts_with('/') {
        return None;
    }
    let clean = sanitize_name(name)?;
    let root = dir.canonicalize().ok()?;
    let path = root.join(clean).canonicalize().ok()?;
    (path.starts_with(&root) && path.is_file()).then_some(path)
}

async fn image(
    State(state): State<Arc<ApiState>>,
    _: Authenticated,
    UrlPath(name): UrlPath<String>,
) -> ApiResult<Response> {
    let not_found = || ApiError::NotFound(format!("image {name:?} not found"));
    let path = confine(state.store.archive_dir(), &name).ok_or_else(not_found)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "image/jpeg")], bytes).into_response())
}

async fn change_password(
    State(state): State<Arc<ApiState>>,
    Authenticated(session): Authenticated,
    Json(req): Json<PasswordRequest>,
) -> ApiResult<StatusCode> {
    if req.new != req.confirm {
        return Err(ApiError::Unprocessable("new password and confirmation differ".into()));
    }
    if req.new.is_empty() {
        return Err(ApiError::Unprocessable("new password must not be empty".into()));
    }
    blocking(&state, move |s| {
        s.change_password(session.account_id, &req.old, &req.new)
    })
    .await?;
    Ok(StatusCode::OK)
}

async fn list_contacts(State(state): State<Arc<ApiState>>, _: Authenticated) -> ApiResult<Json<Vec<Contact>>> {
    Ok(Json(blocking(&state, |s| s.list_contacts()).await?))
}

async fn add_contact(
    State(state): State<Arc<ApiState>>,
    _: Authenticated,
    Json(req): Json<ContactRequest>,
) -> ApiResult<Json<Contact>> {
    let contact_no = req.contact_no.trim().to_string();
    let number = contact_no.clone();
    let id = blocking(&state, move |s| s.add_contact(&number)).await?;
    Ok(Json(Contact { id, contact_no }))
}

async fn delete_contact(
    State(state): State<Arc<ApiState>>,
    _: Authenticated,
    UrlPath(id): UrlPath<i64>,
) -> ApiResult<StatusCode> {
    blocking(&state, move |s| s.delete_contact(id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn api_not_found() -> ApiError {
    ApiError::NotFound("no such route".into())
}

/// Every route of the HTTP contract. Static files under `static_dir`, when
/// given, are served for any other path without authentication.
pub fn router(state: Arc<ApiState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/photos/latest", get(latest_photo))
        .route("/api/photos", get(list_photos))
        .route("/api/photos/{id}", delete(delete_photo))
        .route("/api/password", post(change_password))
        .route("/api/contacts", get(list_contacts).post(add_contact))
        .route("/api/contacts/{id}", delete(delete_contact))
        .route("/api/{*rest}", axum::routing::any(api_not_found))
        .route("/images/{name}", get(image))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `router` on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router).await
}
