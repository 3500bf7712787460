//! JSON HTTP API over attention-flow sessions.
//!
//! A session holds one export (single-model) or two exports of the same
//! sentence pair (comparison). Graphs are built lazily per
//! `(model, τ, head filter)` and cached for the life of the session.
//! Response bodies are the canonical documents from
//! [`attnflow_core::report`], so they match the CLI byte for byte.

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use attnflow_core::report::{self, to_canonical};
use attnflow_core::{
    build_attention_graph, combined_traversal, compute_influence, load_export, merge_graphs,
    run_query, Config, Export, FlowError, Graph, HeadFilter, Merged, Query, DEFAULT_ALPHA,
    DEFAULT_TAU,
};
use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

/// Which graph of a session a request refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSel {
    A,
    B,
    Merged,
}

impl ModelSel {
    fn parse(s: Option<&str>) -> Result<Self, ApiError> {
        match s.unwrap_or("a") {
            "a" | "A" => Ok(ModelSel::A),
            "b" | "B" => Ok(ModelSel::B),
            "merged" => Ok(ModelSel::Merged),
            other => Err(ApiError::bad_request(
                "InvalidModel",
                format!("model must be a, b or merged, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    model: ModelSel,
    tau_bits: u32,
    filter: String,
}

// Always behind an Arc, so the variant size gap costs nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug)]
enum Built {
    Single(Graph),
    Merged(Merged),
}

pub struct Session {
    id: String,
    a: Export,
    b: Option<Export>,
    cache: Mutex<HashMap<CacheKey, Arc<OnceLock<Arc<Built>>>>>,
}

impl Session {
    fn export(&self, model: ModelSel) -> Result<&Export, ApiError> {
        match model {
            ModelSel::A | ModelSel::Merged => Ok(&self.a),
            ModelSel::B => self.b.as_ref().ok_or_else(ApiError::single_model),
        }
    }

    /// Cached graph for `model`. Concurrent requests for the same key build
    /// it once; other keys proceed in parallel.
    fn graph(&self, model: ModelSel, config: &Config) -> Result<Arc<Built>, ApiError> {
        if model != ModelSel::A && self.b.is_none() {
            return Err(ApiError::single_model());
        }
        let key = CacheKey {
            model,
            tau_bits: config.tau.to_bits(),
            filter: config
                .head_filter
                .as_ref()
                .map(|f| f.to_string())
                .unwrap_or_default(),
        };
        let cell = {
            let mut cache = self.cache.lock().expect("cache lock");
            Arc::clone(cache.entry(key).or_default())
        };
        if let Some(built) = cell.get() {
            return Ok(Arc::clone(built));
        }
        let built = match model {
            ModelSel::A | ModelSel::B => {
                Built::Single(build_attention_graph(self.export(model)?, config)?)
            }
            ModelSel::Merged => {
                let a = self.graph(ModelSel::A, config)?;
                let b = self.graph(ModelSel::B, config)?;
                match (&*a, &*b) {
                    (Built::Single(a), Built::Single(b)) => Built::Merged(merge_graphs(a, b)?),
                    _ => unreachable!("single-model keys hold single graphs"),
                }
            }
        };
        Ok(Arc::clone(cell.get_or_init(|| Arc::new(built))))
    }

    fn single(&self, model: ModelSel, config: &Config) -> Result<(Arc<Built>, &Export), ApiError> {
        Ok((self.graph(model, config)?, self.export(model)?))
    }
}

fn as_single(built: &Built) -> &Graph {
    match built {
        Built::Single(g) => g,
        Built::Merged(m) => m.graph_a(),
    }
}

fn as_merged(built: &Built) -> &Merged {
    match built {
        Built::Merged(m) => m,
        Built::Single(_) => unreachable!("merged key holds a merged graph"),
    }
}

/// Shared server state.
pub struct AppState {
    fixture_dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(fixture_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            fixture_dir: fixture_dir.into(),
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .expect("session lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError {
                status: StatusCode::NOT_FOUND,
                body: json!({"error": {"code": "SessionNotFound", "message": format!("no session {id:?}"), "session_id": id}}),
            })
    }

    /// Registers a session and returns its id. Ids are sequential, so a
    /// fresh process replaying the same requests hands out the same ids.
    pub fn create_session(&self, a: Export, b: Option<Export>) -> Result<String, FlowError> {
        if let Some(b) = &b {
            if a.sequence() != b.sequence() {
                return Err(FlowError::TokenMismatch);
            }
            if a.num_layers() != b.num_layers() || a.num_heads() != b.num_heads() {
                return Err(FlowError::ConfigMismatch(
                    "exports have different layer or head counts".into(),
                ));
            }
        }
        let mut sessions = self.sessions.write().expect("session lock");
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        sessions.insert(
            id.clone(),
            Arc::new(Session {
                id: id.clone(),
                a,
                b,
                cache: Mutex::new(HashMap::new()),
            }),
        );
        Ok(id)
    }

    fn resolve(&self, relative: &str) -> Result<PathBuf, ApiError> {
        let rel = Path::new(relative);
        if rel
            .components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
        {
            return Err(ApiError::bad_request(
                "InvalidPath",
                format!("{relative:?} must be a relative path inside the fixture directory"),
            ));
        }
        Ok(self.fixture_dir.join(rel))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/meta", get(meta))
        .route("/sessions/{id}/graph", get(graph))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/influence", get(influence))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn bad_request(code: &str, message: String) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": {"code": code, "message": message}}),
        }
    }

    fn single_model() -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            body: json!({"error": {"code": "SingleModelSession", "message": "this session holds a single model"}}),
        }
    }
}

impl From<FlowError> for ApiError {
    fn from(err: FlowError) -> Self {
        let status = match &err {
            e if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            FlowError::TokenMismatch | FlowError::ConfigMismatch(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            FlowError::NodeNotInGraph(_) | FlowError::HeadNotPresent { .. } | FlowError::NoPath => {
                StatusCode::NOT_FOUND
            }
            FlowError::IoFailure { .. } => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            body: report::error_document(&err),
        }
    }
}

fn canonical(status: StatusCode, body: &Value) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical(body),
    )
        .into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        canonical(self.status, &self.body)
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok(body: Value) -> ApiResult {
    Ok(canonical(StatusCode::OK, &body))
}

/// Export given either by a path relative to the fixture directory or as a
/// base64 `.attn` blob.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSource {
    path: Option<String>,
    data: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    a: ExportSource,
    b: Option<ExportSource>,
}

fn load_source(state: &AppState, src: &ExportSource) -> Result<Export, ApiError> {
    match (&src.path, &src.data) {
        (Some(path), None) => Ok(load_export(state.resolve(path)?)?),
        (None, Some(data)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(data)
                .map_err(|e| ApiError::bad_request("InvalidBase64", e.to_string()))?;
            Ok(Export::from_bytes(&bytes)?)
        }
        _ => Err(ApiError::bad_request(
            "InvalidSource",
            "give exactly one of path or data".into(),
        )),
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::bad_request("MalformedBody", e.to_string()))
}

async fn create_session(State(state): State<Arc<AppState>>, body: String) -> ApiResult {
    let req: CreateSession = parse_body(&body)?;
    let a = load_source(&state, &req.a)?;
    let b = req.b.as_ref().map(|s| load_source(&state, s)).transpose()?;
    let id = state.create_session(a, b)?;
    Ok(canonical(StatusCode::CREATED, &json!({"session_id": id})))
}

async fn meta(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let session = state.session(&id)?;
    let mut models = serde_json::Map::new();
    models.insert("a".into(), report::validation_document(&session.a));
    if let Some(b) = &session.b {
        models.insert("b".into(), report::validation_document(b));
    }
    ok(json!({
        "session_id": session.id,
        "comparison": session.b.is_some(),
        "models": models,
    }))
}

/// Graph parameters shared by the GET endpoints and the query body.
#[derive(Debug, Default, Deserialize)]
pub struct Params {
    model: Option<String>,
    tau: Option<String>,
    alpha: Option<String>,
    heads: Option<String>,
    layer: Option<String>,
}

fn config_from(tau: Option<&str>, heads: Option<&str>) -> Result<Config, ApiError> {
    let tau = match tau {
        Some(t) => attnflow_core::scalar::parse_weight::<f32>(t)
            .ok_or_else(|| FlowError::InvalidTau(t.to_string()))?,
        None => DEFAULT_TAU as f32,
    };
    Config::validate_tau(tau)?;
    let mut cfg = Config::new(tau);
    if let Some(h) = heads.filter(|h| !h.trim().is_empty()) {
        cfg = cfg.with_head_filter(h.parse::<HeadFilter>()?);
    }
    Ok(cfg)
}

fn alpha_from(alpha: Option<&str>) -> Result<f64, ApiError> {
    match alpha {
        None => Ok(DEFAULT_ALPHA),
        Some(a) => match a.trim().parse::<f64>() {
            Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
            _ => Err(FlowError::InvalidAlpha(a.to_string()).into()),
        },
    }
}

async fn graph(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<Params>,
) -> ApiResult {
    let session = state.session(&id)?;
    let model = ModelSel::parse(p.model.as_deref())?;
    let config = config_from(p.tau.as_deref(), p.heads.as_deref())?;
    let alpha = alpha_from(p.alpha.as_deref())?;
    if model == ModelSel::Merged {
        let built = session.graph(model, &config)?;
        let b = session.b.as_ref().ok_or_else(ApiError::single_model)?;
        return ok(report::merged_document(&session.a, b, as_merged(&built), alpha)?);
    }
    let (built, export) = session.single(model, &config)?;
    ok(report::graph_document(export, as_single(&built), alpha)?)
}

async fn influence(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(p): UrlQuery<Params>,
) -> ApiResult {
    let session = state.session(&id)?;
    let model = ModelSel::parse(p.model.as_deref())?;
    let config = config_from(p.tau.as_deref(), p.heads.as_deref())?;
    let alpha = alpha_from(p.alpha.as_deref())?;
    let layer = match p.layer.as_deref() {
        None => 0,
        Some(l) => l.trim().parse().map_err(|_| {
            ApiError::bad_request("InvalidLayer", format!("layer must be an integer, got {l:?}"))
        })?,
    };
    if model == ModelSel::Merged {
        let built = session.graph(model, &config)?;
        let merged = as_merged(&built);
        let b = session.b.as_ref().ok_or_else(ApiError::single_model)?;
        let ta = compute_influence(&session.a, merged.graph_a(), alpha)?;
        let tb = compute_influence(b, merged.graph_b(), alpha)?;
        return ok(report::comparison_document(merged, &ta, &tb, layer)?);
    }
    let (built, export) = session.single(model, &config)?;
    let graph = as_single(&built);
    let table = compute_influence(export, graph, alpha)?;
    ok(report::influence_document(graph, &table, layer)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    model: Option<String>,
    tau: Option<Value>,
    alpha: Option<Value>,
    heads: Option<String>,
    query: Value,
}

/// Numbers and strings are both accepted; numbers go through their decimal
/// text so `0.3` parses exactly as the CLI's `--tau 0.3`.
fn scalar_text(v: &Option<Value>) -> Option<String> {
    match v {
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => Some(other.to_string()),
        None => None,
    }
}

async fn query(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> ApiResult {
    let session = state.session(&id)?;
    let req: QueryRequest = parse_body(&body)?;
    let model = ModelSel::parse(req.model.as_deref())?;
    let config = config_from(scalar_text(&req.tau).as_deref(), req.heads.as_deref())?;
    // Queries do not use α, but a bad value is still rejected.
    alpha_from(scalar_text(&req.alpha).as_deref())?;
    let q: Query = serde_json::from_value(req.query)
        .map_err(|e| FlowError::InvalidQuery(e.to_string()))?;
    let built = session.graph(model, &config)?;
    match model {
        ModelSel::Merged => ok(report::tagged_query_document(&combined_traversal(
            as_merged(&built),
            &q,
        )?)),
        _ => ok(report::query_document(&run_query(as_single(&built), &q)?)),
    }
}
