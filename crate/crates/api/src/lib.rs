//! HTTP front end over a workspace directory of scenario files.

mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

use scenario_core::concretize::{self, ConcretizeError};
use scenario_core::exec::{self, ExecError, TickConfig};
use scenario_core::model::{self, ScenarioGraph};
use scenario_core::modules::{self, Catalog};
use scenario_core::registry::Registry;
use scenario_core::validation;
use scenario_core::xosc::{self, ExportError, ExportOptions};

pub use store::{Store, StoreError};

#[derive(Clone)]
struct AppState {
    store: Store,
    catalog: Catalog,
    registry: Arc<Registry>,
    // Serializes writes so the revision check and the save are one step.
    writes: Arc<Mutex<()>>,
}

pub struct Config {
    pub workspace: PathBuf,
    pub registry: Registry,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<HeaderValue>,
}

impl Config {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        Config {
            workspace: workspace.into(),
            registry: Registry::builtin(),
            cors_origins: Vec::new(),
        }
    }
}

pub fn router(config: Config) -> Router {
    let state = AppState {
        store: Store::new(config.workspace.join("scenarios")),
        catalog: Catalog::new(config.workspace.join("catalog")),
        registry: Arc::new(config.registry),
        writes: Arc::new(Mutex::new(())),
    };
    let origins = if config.cors_origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(config.cors_origins)
    };
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods(tower_http::cors::Any)
        .allow_headers(tower_http::cors::Any);
    Router::new()
        .route("/scenarios", post(create))
        .route("/scenarios/{id}", get(read).put(update))
        .route("/scenarios/{id}/validate", post(validate))
        .route("/scenarios/{id}/export", post(export))
        .route("/scenarios/{id}/run", post(run))
        .route("/library/modules", get(list_modules).post(add_module))
        .layer(cors)
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl ToString) -> Self {
        ApiError {
            status,
            body: json!({ "error": error, "message": message.to_string() }),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no scenario '{id}'"))
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, axum::Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound => ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such scenario"),
            StoreError::Stale { current } => ApiError::new(
                StatusCode::CONFLICT,
                "StaleRevision",
                format!("scenario is at revision {current}"),
            )
            .with("revision", json!(current)),
            StoreError::Io(e) => ApiError::internal(e),
        }
    }
}

fn unprocessable(error: &str, message: impl ToString) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, error, message)
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        match &e {
            ExportError::LevelError { found } => {
                unprocessable("LevelError", &e).with("found", json!(found))
            }
            ExportError::InvalidScenario(findings) => {
                unprocessable("InvalidScenario", &e).with("findings", json!(findings))
            }
            ExportError::UnknownCatalog(_) => ApiError::bad_request(e),
            _ => unprocessable("ExportError", e),
        }
    }
}

impl From<ExecError> for ApiError {
    fn from(e: ExecError) -> Self {
        match &e {
            ExecError::LevelError { found } => {
                unprocessable("LevelError", &e).with("found", json!(found))
            }
            ExecError::InvalidScenario(findings) => {
                unprocessable("InvalidScenario", &e).with("findings", json!(findings))
            }
            ExecError::InvalidConfig(_) | ExecError::OutOfRange { .. } => ApiError::bad_request(e),
            _ => unprocessable("ExecError", e),
        }
    }
}

impl From<ConcretizeError> for ApiError {
    fn from(e: ConcretizeError) -> Self {
        match &e {
            ConcretizeError::LevelError { found } => {
                unprocessable("LevelError", &e).with("found", json!(found))
            }
            ConcretizeError::OutOfRange { .. } => ApiError::bad_request(e),
            _ => unprocessable("ConcretizeError", e),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_text(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn parse_scenario(text: &str, registry: &Registry) -> Result<ScenarioGraph, ApiError> {
    model::parse(text, registry).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "ParseError", e)
    })
}

/// Body as JSON, with an empty body meaning `T::default()`.
fn optional_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

fn session(id: &str, revision: u64, text: &str) -> Result<Value, ApiError> {
    let document: Value = serde_json::from_str(text).map_err(ApiError::internal)?;
    Ok(json!({ "id": id, "revision": revision, "document": document }))
}

fn load(state: &AppState, id: &str) -> Result<ScenarioGraph, ApiError> {
    let (text, _) = state.store.get(id).map_err(|e| match e {
        StoreError::NotFound => ApiError::not_found(id),
        e => e.into(),
    })?;
    parse_scenario(&text, &state.registry)
}

async fn create(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(ApiError::bad_request)?;
    let graph = parse_scenario(text, &state.registry)?;
    let canonical = model::serialize(&graph);
    let _guard = state.writes.lock().await;
    let id = state.store.create(graph.name(), &canonical)?;
    Ok((StatusCode::CREATED, axum::Json(session(&id, 1, &canonical)?)).into_response())
}

async fn read(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let (text, rev) = state.store.get(&id).map_err(|e| match e {
        StoreError::NotFound => ApiError::not_found(&id),
        e => e.into(),
    })?;
    Ok(axum::Json(session(&id, rev, &text)?).into_response())
}

#[derive(Deserialize)]
struct UpdateBody {
    revision: u64,
    document: Value,
}

async fn update(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let body: UpdateBody = serde_json::from_slice(&body).map_err(ApiError::bad_request)?;
    let graph = parse_scenario(&body.document.to_string(), &state.registry)?;
    let canonical = model::serialize(&graph);
    let _guard = state.writes.lock().await;
    let rev = state.store.update(&id, &canonical, body.revision).map_err(|e| match e {
        StoreError::NotFound => ApiError::not_found(&id),
        e => e.into(),
    })?;
    Ok(axum::Json(session(&id, rev, &canonical)?).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ValidateBody {
    /// Unsaved editor state to check instead of the stored document.
    document: Option<Value>,
    #[serde(default)]
    strict: bool,
}

async fn validate(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let stored = load(&state, &id)?;
    let body: ValidateBody = optional_body(&body)?;
    let graph = match body.document {
        Some(doc) => parse_scenario(&doc.to_string(), &state.registry)?,
        None => stored,
    };
    let report = validation::validate(&graph, &state.registry);
    let mut value: Value = serde_json::from_str(&report.to_json()).map_err(ApiError::internal)?;
    value["passes"] = json!(report.passes(body.strict));
    Ok(axum::Json(value).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExportBody {
    /// `[kind, directory]` pairs.
    #[serde(default)]
    catalog_locations: Vec<(String, String)>,
    #[serde(default)]
    parameterize: bool,
}

async fn export(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let graph = load(&state, &id)?;
    let body: ExportBody = optional_body(&body)?;
    let options = ExportOptions {
        catalog_locations: body.catalog_locations,
        parameterize: body.parameterize,
        ..ExportOptions::default()
    };
    let xml = xosc::export(&graph, &state.registry, &options)?;
    Ok(([(header::CONTENT_TYPE, "application/xml")], xml).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunBody {
    tick_config: Option<TickConfig>,
    /// Variant of a logical scenario.
    index: Option<u64>,
}

async fn run(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let mut graph = load(&state, &id)?;
    let body: RunBody = optional_body(&body)?;
    if let Some(index) = body.index {
        let plan = concretize::plan(&graph, &state.registry)?;
        graph = concretize::enumerate(&graph, &plan, index)?;
    }
    let config = body.tick_config.unwrap_or_default();
    let registry = state.registry.clone();
    let trace = tokio::task::spawn_blocking(move || exec::run(&graph, &registry, &config))
        .await
        .map_err(ApiError::internal)??;
    Ok(json_text(StatusCode::OK, trace.to_json()))
}

async fn list_modules(State(state): State<AppState>) -> ApiResult {
    let entries = state.catalog.list().map_err(ApiError::internal)?;
    let map: serde_json::Map<String, Value> = entries
        .into_iter()
        .map(|(name, entry)| (name, json!(entry)))
        .collect();
    Ok(axum::Json(Value::Object(map)).into_response())
}

async fn add_module(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(ApiError::bad_request)?;
    let def = modules::parse_module(text, &state.registry)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "ParseError", e))?;
    let _guard = state.writes.lock().await;
    let revision = state.catalog.save(&def).map_err(ApiError::internal)?;
    Ok((
        StatusCode::CREATED,
        axum::Json(json!({ "name": def.name, "revision": revision })),
    )
        .into_response())
}
