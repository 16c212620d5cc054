//! HTTP facade.
//!
//! | method | path                   | body                               |
//! |--------|------------------------|------------------------------------|
//! | GET    | `/healthz`             |                                    |
//! | POST   | `/api/upload`          | multipart: `uid`, `file`           |
//! | POST   | `/api/handle_file`     | `{uid, uploadOk, fileName}`        |
//! | POST   | `/api/handle_data`     | `{uid, start, end}` (`YYYY-MM-DD`) |
//! | POST   | `/api/session/start`   | `{uid, mood}`                      |
//! | POST   | `/api/session/stop`    | `{uid, mood}`                      |
//! | GET    | `/api/session/state`   | query `uid`                        |
//!
//! Every response is `{"ok": true, "data": ...}` or
//! `{"ok": false, "error": {"code", "message"}}` with `code` one of
//! `MALFORMED`, `NOT_FOUND`, `STATE_CONFLICT`, `UPSTREAM`, `INTERNAL`.

use std::any::Any;
use std::collections::HashMap;
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::config::{ingest_into_store, IngestStoreError};
use crate::ingest::{IngestCounts, DEFAULT_ZONE};
use crate::layout;
use crate::reportgen::{generate_report, report_to_json, EventLabeler, ReportError, TimeRange};
use crate::session::{Mood, SessionBook, SessionError};
use crate::store::{encode_name, DocumentPath, Store, StoreError};

pub const DEFAULT_UPLOAD_LIMIT: usize = 64 * 1024 * 1024;
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Malformed,
    NotFound,
    StateConflict,
    Upstream,
    Internal,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorCode::Malformed, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, ErrorCode::Internal, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "ok": false,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidPath { .. } => ApiError::malformed(e.to_string()),
            // Raw i/o detail stays in the server log.
            other => {
                eprintln!("store failure: {other}");
                ApiError::internal("storage failure")
            }
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::AlreadyWatching | SessionError::NotWatching | SessionError::ClockSkew { .. } => {
                ApiError::new(StatusCode::CONFLICT, ErrorCode::StateConflict, e.to_string())
            }
            SessionError::Store(s) => s.into(),
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidRange { .. } | ReportError::IncompleteSession(_) => {
                ApiError::malformed(e.to_string())
            }
            ReportError::Metadata(_) | ReportError::Categorizer(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, ErrorCode::Upstream, e.to_string())
            }
            ReportError::Store(s) => s.into(),
        }
    }
}

type ApiResult = Result<Json<serde_json::Value>, ApiError>;

fn ok<T: Serialize>(data: T) -> ApiResult {
    Ok(Json(json!({ "ok": true, "data": data })))
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Browser origin allowed to call the API with credentials.
    pub allow_origin: Option<String>,
    pub zone: Tz,
    pub upload_limit: usize,
    /// When set, `/api/*` requires `Authorization: Bearer <token>`.
    pub token: Option<String>,
    pub request_timeout: Duration,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            allow_origin: None,
            zone: DEFAULT_ZONE.parse().expect("default zone exists"),
            upload_limit: DEFAULT_UPLOAD_LIMIT,
            token: None,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
        }
    }

    /// Store root; uploads live next to it.
    pub fn store_dir(&self) -> PathBuf {
        self.data_dir.join("store")
    }

    pub fn upload_dir(&self) -> PathBuf {
        self.data_dir.join("uploads")
    }
}

pub struct AppState {
    config: ServiceConfig,
    store: Arc<Store>,
    sessions: SessionBook,
    labeler: Arc<dyn EventLabeler>,
    clock: Clock,
    report_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, labeler: Arc<dyn EventLabeler>, clock: Clock) -> Result<Self, StoreError> {
        let store = Arc::new(Store::open(config.store_dir())?);
        Ok(Self {
            sessions: SessionBook::new(Arc::clone(&store), config.zone),
            store,
            config,
            labeler,
            clock,
            report_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    fn report_lock(&self, uid: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.report_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(uid.to_owned()).or_default().clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/upload", post(upload))
        .route("/handle_file", post(handle_file))
        .route("/handle_data", post(handle_data))
        .route("/session/start", post(session_start))
        .route("/session/stop", post(session_stop))
        .route("/session/state", get(session_state))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token))
        .layer(DefaultBodyLimit::max(state.config.upload_limit));

    let mut app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .nest("/api", api)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, ErrorCode::Malformed, "method not allowed")
        })
        .layer(CatchPanicLayer::custom(panic_response));

    if let Some(origin) = &state.config.allow_origin {
        let origin = HeaderValue::from_str(origin).unwrap_or_else(|_| HeaderValue::from_static("null"));
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list([origin]))
                .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
                .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION])
                .allow_credentials(true),
        );
    }
    app.with_state(state)
}

fn panic_response(_: Box<dyn Any + Send + 'static>) -> Response {
    ApiError::internal("internal error").into_response()
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, ErrorCode::Malformed, "missing or invalid token")
                .into_response();
        }
    }
    next.run(req).await
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, app: Router, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(format!("invalid request body: {e}")))
}

fn check_uid(uid: &str) -> Result<(), ApiError> {
    DocumentPath::new(["Users", uid])
        .map(|_| ())
        .map_err(|_| ApiError::malformed("invalid uid"))
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| ApiError::internal("internal error"))?
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct HandleFileRequest {
    uid: String,
    upload_ok: bool,
    #[serde(default)]
    file_name: Option<String>,
}

async fn handle_file(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: HandleFileRequest = parse_body(&body)?;
    check_uid(&req.uid)?;
    if !req.upload_ok {
        return ok(IngestCounts {
            ingested: 0,
            skipped: 0,
        });
    }
    let file_name = req
        .file_name
        .ok_or_else(|| ApiError::malformed("fileName is required when uploadOk is true"))?;
    if !is_plain_file_name(&file_name) {
        return Err(ApiError::malformed("invalid fileName"));
    }
    let user_dir = state.config.upload_dir().join(encode_name(&req.uid));
    if !user_dir.is_dir() {
        return Err(ApiError::not_found(format!("no uploads for user {}", req.uid)));
    }
    let path = user_dir.join(&file_name);
    let st = Arc::clone(&state);
    let counts = blocking(move || {
        let content = match std::fs::read(&path) {
            Ok(c) => c,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ApiError::not_found(format!("no uploaded file named {file_name}")))
            }
            Err(_) => return Err(ApiError::internal("could not read upload")),
        };
        ingest_into_store(&st.store, &req.uid, &content, st.config.zone).map_err(|e| match e {
            IngestStoreError::Parse(p) => ApiError::malformed(p.to_string()),
            IngestStoreError::Store(s) => s.into(),
        })
    })
    .await?;
    ok(counts)
}

#[derive(Deserialize)]
struct HandleDataRequest {
    uid: String,
    start: String,
    end: String,
}

fn parse_date(s: &str) -> Result<NaiveDate, ApiError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| ApiError::malformed(format!("invalid date {s:?}")))
}

async fn handle_data(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: HandleDataRequest = parse_body(&body)?;
    check_uid(&req.uid)?;
    let range = TimeRange::new(parse_date(&req.start)?, parse_date(&req.end)?)?;
    let st = Arc::clone(&state);
    let uid = req.uid.clone();
    if !blocking(move || Ok(layout::user_exists(&st.store, &uid)?)).await? {
        return Err(ApiError::not_found(format!("unknown user {}", req.uid)));
    }

    let lock = state.report_lock(&req.uid);
    let _guard = lock.lock().await;
    let st = Arc::clone(&state);
    let work = blocking(move || {
        let report = generate_report(&st.store, &req.uid, range, st.config.zone, st.labeler.as_ref())?;
        Ok(report_to_json(&report))
    });
    match tokio::time::timeout(state.config.request_timeout, work).await {
        Ok(result) => ok(result?),
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            ErrorCode::Upstream,
            "report generation timed out",
        )),
    }
}

#[derive(Deserialize)]
struct SessionRequest {
    uid: String,
    mood: String,
}

async fn session_transition(state: Arc<AppState>, body: Bytes, starting: bool) -> ApiResult {
    let req: SessionRequest = parse_body(&body)?;
    check_uid(&req.uid)?;
    let mood: Mood = req
        .mood
        .parse()
        .map_err(|_| ApiError::malformed(format!("unknown mood {:?}", req.mood)))?;
    let now = (state.clock)();
    let session = blocking(move || {
        let s = if starting {
            state.sessions.start(&req.uid, mood, now)?
        } else {
            state.sessions.stop(&req.uid, mood, now)?
        };
        Ok(s)
    })
    .await?;
    ok(serde_json::to_value(session).map_err(|_| ApiError::internal("internal error"))?)
}

async fn session_start(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    session_transition(state, body, true).await
}

async fn session_stop(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    session_transition(state, body, false).await
}

#[derive(Deserialize)]
struct StateQuery {
    uid: String,
}

async fn session_state(
    State(state): State<Arc<AppState>>,
    query: Result<Query<StateQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let Query(q) = query.map_err(|_| ApiError::malformed("uid query parameter is required"))?;
    check_uid(&q.uid)?;
    let s = blocking(move || Ok(state.sessions.state(&q.uid)?)).await?;
    ok(s)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct UploadResponse {
    file_name: String,
}

async fn upload(
    State(state): State<Arc<AppState>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> ApiResult {
    let mut multipart = multipart.map_err(|_| ApiError::malformed("expected a multipart/form-data body"))?;
    let mut uid = None;
    let mut file: Option<(String, Bytes)> = None;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(multipart_error(e.status(), e.body_text())),
        };
        match field.name() {
            Some("uid") => {
                uid = Some(field.text().await.map_err(|e| multipart_error(e.status(), e.body_text()))?);
            }
            Some("file") => {
                let name = field.file_name().unwrap_or("upload.json").to_owned();
                let bytes = field.bytes().await.map_err(|e| multipart_error(e.status(), e.body_text()))?;
                file = Some((name, bytes));
            }
            _ => {}
        }
    }
    let uid = uid.ok_or_else(|| ApiError::malformed("missing uid field"))?;
    check_uid(&uid)?;
    let (name, bytes) = file.ok_or_else(|| ApiError::malformed("missing file field"))?;
    if bytes.len() > state.config.upload_limit {
        return Err(too_large());
    }
    let st = Arc::clone(&state);
    let stored = blocking(move || {
        let dir = st.config.upload_dir().join(encode_name(&uid));
        let stored = write_unique(&dir, &sanitize_file_name(&name), &bytes)
            .map_err(|_| ApiError::internal("could not store upload"))?;
        layout::register_user(&st.store, &uid)?;
        Ok(stored)
    })
    .await?;
    ok(UploadResponse { file_name: stored })
}

fn too_large() -> ApiError {
    ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, ErrorCode::Malformed, "upload exceeds the size limit")
}

fn multipart_error(status: StatusCode, text: String) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        too_large()
    } else {
        ApiError::malformed(text)
    }
}

fn is_plain_file_name(name: &str) -> bool {
    !name.is_empty() && name != "." && name != ".." && !name.contains(['/', '\\', '\0'])
}

/// Keeps `[A-Za-z0-9._-]` from the base name; everything else becomes `_`.
fn sanitize_file_name(name: &str) -> String {
    let base = name.rsplit(['/', '\\']).next().unwrap_or_default();
    let cleaned: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    let cleaned = cleaned.trim_start_matches('.').to_owned();
    if cleaned.is_empty() {
        "upload.json".to_owned()
    } else {
        cleaned
    }
}

/// Writes without replacing: `name`, then `stem-1.ext`, `stem-2.ext`, ...
fn write_unique(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<String> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let (stem, ext) = match name.rsplit_once('.') {
        Some((s, e)) if !s.is_empty() => (s.to_owned(), format!(".{e}")),
        _ => (name.to_owned(), String::new()),
    };
    for n in 0.. {
        let candidate = if n == 0 { name.to_owned() } else { format!("{stem}-{n}{ext}") };
        match std::fs::OpenOptions::new().write(true).create_new(true).open(dir.join(&candidate)) {
            Ok(mut f) => {
                f.write_all(bytes)?;
                f.sync_all()?;
                return Ok(candidate);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Empty body with the given status; handy for probes.
pub fn empty(status: StatusCode) -> Response {
    Response::builder().status(status).body(Body::empty()).expect("static response")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(sanitize_file_name("watch-history.json"), "watch-history.json");
        assert_eq!(sanitize_file_name("../../etc/passwd"), "passwd");
        assert_eq!(sanitize_file_name("C:\\x\\my file.json"), "my_file.json");
        assert_eq!(sanitize_file_name(".hidden"), "hidden");
        assert_eq!(sanitize_file_name(""), "upload.json");
        assert!(is_plain_file_name("a.json"));
        assert!(!is_plain_file_name("../a.json"));
        assert!(!is_plain_file_name(".."));
    }

    #[test]
    fn unique_names_get_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(write_unique(dir.path(), "h.json", b"1").unwrap(), "h.json");
        assert_eq!(write_unique(dir.path(), "h.json", b"2").unwrap(), "h-1.json");
        assert_eq!(write_unique(dir.path(), "h.json", b"3").unwrap(), "h-2.json");
        assert_eq!(write_unique(dir.path(), "noext", b"3").unwrap(), "noext");
        assert_eq!(write_unique(dir.path(), "noext", b"3").unwrap(), "noext-1");
        assert_eq!(std::fs::read(dir.path().join("h.json")).unwrap(), b"1");
    }

    #[test]
    fn error_envelope_codes() {
        let v = serde_json::to_value(ErrorCode::StateConflict).unwrap();
        assert_eq!(v, "STATE_CONFLICT");
        let e: ApiError = SessionError::NotWatching.into();
        assert_eq!(e.status, StatusCode::CONFLICT);
        assert_eq!(e.message, "You are not watching anything");
    }
}
