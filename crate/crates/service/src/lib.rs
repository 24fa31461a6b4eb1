//! Read-mostly HTTP API over a named dendrogram.
//!
//! Reads share a lock; a rename takes the write lock, persists the overrides file
//! atomically and only then swaps the new names in, so no request can observe a
//! half-applied rename.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nma_core::api::{ClustersView, DendrogramView, ErrorBody, NodeView, RenameRequest};
use nma_core::clustering::NodeId;
use nma_core::ingest::LogLine;
use nma_core::naming::apply_overrides;
use nma_core::pipeline::{explain_query, load_dendrogram, Query as ExplainQuery};
use nma_core::{Dendrogram, Error, NameOverrides};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::RwLock;

/// Where a session's artifacts live.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub dendrogram: PathBuf,
    /// Renames are persisted here; without it they live in memory only.
    pub overrides: Option<PathBuf>,
    /// Optional `label<TAB>image-url` sidecar for hover previews.
    pub images: Option<PathBuf>,
}

pub struct Session {
    base: Dendrogram,
    named: Dendrogram,
    overrides: NameOverrides,
    overrides_path: Option<PathBuf>,
    members: Vec<Vec<usize>>,
    images: BTreeMap<String, String>,
    body: Bytes,
    etag: String,
}

impl Session {
    pub fn load(cfg: &SessionConfig) -> nma_core::Result<Self> {
        let dg = load_dendrogram(&cfg.dendrogram)?;
        let overrides = match &cfg.overrides {
            Some(p) => NameOverrides::load_or_default(p, &dg.content_hash())?,
            None => NameOverrides::default(),
        };
        let images = match &cfg.images {
            Some(p) => load_images(p, &dg)?,
            None => BTreeMap::new(),
        };
        Ok(Session::new(dg, overrides, cfg.overrides.clone(), images))
    }

    pub fn new(
        dg: Dendrogram,
        overrides: NameOverrides,
        overrides_path: Option<PathBuf>,
        images: BTreeMap<String, String>,
    ) -> Self {
        let members = dg.all_members();
        let mut s = Session {
            named: apply_overrides(&dg, &overrides),
            base: dg,
            overrides,
            overrides_path,
            members,
            images,
            body: Bytes::new(),
            etag: String::new(),
        };
        s.refresh();
        s
    }

    pub fn dendrogram(&self) -> &Dendrogram {
        &self.named
    }

    pub fn overrides(&self) -> &NameOverrides {
        &self.overrides
    }

    fn refresh(&mut self) {
        let view = DendrogramView::new(&self.named, &self.members, &self.images);
        let body = serde_json::to_vec(&view).expect("dendrogram view serializes");
        self.etag = format!("\"{}\"", hex::encode(Sha256::digest(&body)));
        self.body = Bytes::from(body);
    }

    fn node_view(&self, id: NodeId) -> NodeView {
        NodeView::new(&self.named, id, &self.members[id])
    }

    /// Persists first, then swaps the names in.
    pub fn rename(&mut self, node: NodeId, name: &str) -> nma_core::Result<NodeView> {
        let mut next = self.overrides.clone();
        next.set_override(&self.named, node, name)?;
        if let Some(path) = &self.overrides_path {
            next.save(path, &self.base.content_hash())?;
        }
        self.named = apply_overrides(&self.base, &next);
        self.overrides = next;
        self.refresh();
        Ok(self.node_view(node))
    }
}

fn load_images(path: &Path, dg: &Dendrogram) -> nma_core::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |detail: String| Error::Format {
            what: "image sidecar",
            detail: format!("line {}: {detail}", no + 1),
        };
        let (label, url) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected label<TAB>url".into()))?;
        if dg.labels().id(label).is_none() {
            return Err(bad(format!("unknown label '{label}'")));
        }
        out.insert(label.to_string(), url.trim().to_string());
    }
    Ok(out)
}

enum Slot {
    Loading,
    Failed(String),
    Ready(Box<Session>),
}

/// Shared session slot. Empty until a session is installed.
#[derive(Clone)]
pub struct AppState {
    slot: Arc<RwLock<Slot>>,
}

impl Default for AppState {
    fn default() -> Self {
        AppState {
            slot: Arc::new(RwLock::new(Slot::Loading)),
        }
    }
}

impl AppState {
    pub fn with_session(session: Session) -> Self {
        AppState {
            slot: Arc::new(RwLock::new(Slot::Ready(Box::new(session)))),
        }
    }

    pub async fn install(&self, session: Session) {
        *self.slot.write().await = Slot::Ready(Box::new(session));
    }

    pub async fn fail(&self, reason: String) {
        *self.slot.write().await = Slot::Failed(reason);
    }
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownLabel(_) | Error::UnknownNode { .. } => StatusCode::NOT_FOUND,
            Error::EmptyName => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Format { .. } | Error::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!("{}", self.message);
        }
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn not_ready(slot: &Slot) -> ApiError {
    let msg = match slot {
        Slot::Failed(reason) => format!("session failed to load: {reason}"),
        _ => "session is still loading".to_string(),
    };
    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, msg)
}

macro_rules! session {
    ($guard:expr) => {
        match &*$guard {
            Slot::Ready(s) => s,
            other => return Err(not_ready(other)),
        }
    };
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/dendrogram", get(dendrogram))
        .route("/clusters", get(clusters))
        .route("/clusters/{node}/name", post(rename))
        .route("/explain", get(explain))
        .route("/classify-explain", post(classify_explain))
        .with_state(state)
}

async fn dendrogram(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let guard = state.slot.read().await;
    let s = session!(guard);
    let etag = HeaderValue::from_str(&s.etag).expect("hex etag is a valid header");
    if headers.get(header::IF_NONE_MATCH) == Some(&etag) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response());
    }
    let content_type = HeaderValue::from_static("application/json");
    Ok(([(header::ETAG, etag), (header::CONTENT_TYPE, content_type)], s.body.clone()).into_response())
}

async fn clusters(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Json<ClustersView>> {
    let cut: f64 = params
        .get("cut")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing query parameter 'cut'"))?
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "cut must be a number"))?;
    let guard = state.slot.read().await;
    let s = session!(guard);
    let nodes = s
        .named
        .cut_nodes(cut)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(Json(ClustersView {
        cut,
        clusters: nodes.into_iter().map(|id| s.node_view(id)).collect(),
    }))
}

async fn rename(
    State(state): State<AppState>,
    UrlPath(node): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<NodeView>> {
    let req: RenameRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed rename body: {e}")))?;
    let mut guard = state.slot.write().await;
    let s = match &mut *guard {
        Slot::Ready(s) => s,
        other => return Err(not_ready(other)),
    };
    let node: NodeId = node
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown node '{node}'")))?;
    let view = s.rename(node, &req.name)?;
    tracing::info!(node, name = %req.name.trim(), "renamed");
    Ok(Json(view))
}

async fn explain(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let label = params
        .get("label")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing query parameter 'label'"))?;
    let guard = state.slot.read().await;
    let s = session!(guard);
    Ok(Json(explain_query(&s.named, &ExplainQuery::Label(label.clone()))?).into_response())
}

async fn classify_explain(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let line: LogLine = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed record: {e}")))?;
    let guard = state.slot.read().await;
    let s = session!(guard);
    Ok(Json(explain_query(&s.named, &ExplainQuery::Record(line))?).into_response())
}

/// Serves on `listener`, loading the session in the background. Requests before
/// the load completes get 503. Returns on Ctrl-C.
pub async fn serve(listener: TcpListener, cfg: SessionConfig) -> std::io::Result<()> {
    let state = AppState::default();
    let loader = state.clone();
    tokio::spawn(async move {
        match tokio::task::spawn_blocking(move || Session::load(&cfg)).await {
            Ok(Ok(session)) => {
                tracing::info!(leaves = session.named.leaf_count(), "session loaded");
                loader.install(session).await;
            }
            Ok(Err(e)) => {
                tracing::error!("failed to load session: {e}");
                loader.fail(e.to_string()).await;
            }
            Err(e) => loader.fail(e.to_string()).await,
        }
    });
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
