//! JSON HTTP service over a directory of checkpoints.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fragnet_chem::ChemError;
use fragnet_core::interpret::{explain, ExplainOptions};
use fragnet_core::{Checkpoint, CoreError};
use log::{info, warn};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use crate::layout::layout_2d;

/// Loaded checkpoints keyed by file stem.
pub struct Models {
    pub models: BTreeMap<String, Arc<Checkpoint>>,
}

impl Models {
    /// Loads every `*.json` checkpoint in `dir`. Unreadable files are
    /// skipped with a warning.
    pub fn scan(dir: &Path) -> std::io::Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        let mut models = BTreeMap::new();
        for path in entries {
            let Some(stem) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) else { continue };
            match Checkpoint::load(&path) {
                Ok(c) => {
                    info!("loaded model {stem} from {}", path.display());
                    models.insert(stem, Arc::new(c));
                }
                Err(e) => warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(Self { models })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Chem(ChemError::Syntax(_)) => "SyntaxError",
            CoreError::Chem(ChemError::Valence(_)) => "ValenceError",
            CoreError::Chem(ChemError::Unsupported(_)) => "UnsupportedError",
            CoreError::Config(_) => "InvalidRequest",
            _ => return Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()),
        };
        Self::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct MoleculeRequest {
    smiles: String,
    model: Option<String>,
    #[serde(default)]
    reducer: Option<String>,
    #[serde(default)]
    task: Option<usize>,
}

fn parse_body(body: &Bytes) -> Result<MoleculeRequest, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string()))
}

impl Models {
    /// The named model, or the only one when the name is omitted.
    fn pick(&self, name: Option<&str>) -> Result<(String, Arc<Checkpoint>), ApiError> {
        match name {
            Some(n) => self
                .models
                .get(n)
                .map(|c| (n.to_string(), Arc::clone(c)))
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownModel", format!("no model named {n:?}"))),
            None if self.models.len() == 1 => {
                let (n, c) = self.models.iter().next().unwrap();
                Ok((n.clone(), Arc::clone(c)))
            }
            None => Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "InvalidRequest",
                "\"model\" is required when several models are loaded",
            )),
        }
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

async fn health(State(models): State<Arc<Models>>) -> Json<Value> {
    Json(json!({ "status": "ok", "models": models.models.keys().collect::<Vec<_>>() }))
}

async fn list_models(State(models): State<Arc<Models>>) -> Json<Value> {
    let list: Vec<Value> = models
        .models
        .iter()
        .map(|(name, c)| {
            let cfg = c.config();
            json!({
                "name": name,
                "task": cfg.task.as_str(),
                "n_tasks": cfg.n_tasks,
                "target_names": c.metadata.target_names,
                "dataset": c.metadata.dataset,
                "fragmenter": cfg.fragmenter,
                "hidden_dim": cfg.hidden_dim,
                "heads": cfg.heads,
                "layers_per_graph": cfg.layers_per_graph,
                "metrics": c.metadata.metrics,
            })
        })
        .collect();
    Json(json!({ "models": list }))
}

async fn predict(State(models): State<Arc<Models>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req = parse_body(&body)?;
    let (name, ckpt) = models.pick(req.model.as_deref())?;
    let values = blocking(move || ckpt.predict(&req.smiles).map_err(ApiError::from)).await?;
    Ok(Json(json!({ "model": name, "prediction": values[0], "predictions": values })))
}

async fn explain_route(State(models): State<Arc<Models>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req = parse_body(&body)?;
    let (name, ckpt) = models.pick(req.model.as_deref())?;
    let options = ExplainOptions {
        reducer: req.reducer.unwrap_or_else(|| "sender".into()),
        task: req.task.unwrap_or(0),
    };
    blocking(move || {
        let explanation = explain(&ckpt, &req.smiles, &options)?;
        let mol = fragnet_chem::parse_smiles(&req.smiles).map_err(CoreError::from)?;
        Ok(Json(json!({
            "model": name,
            "explanation": explanation,
            "layout": layout_2d(&mol),
        })))
    })
    .await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

/// `cors_origin` of `None` or `"*"` allows any origin.
pub fn router(models: Arc<Models>, cors_origin: Option<&str>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match cors_origin.filter(|o| *o != "*").and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(origin) => cors.allow_origin(origin),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/health", get(health))
        .route("/models", get(list_models))
        .route("/predict", post(predict))
        .route("/explain", post(explain_route))
        .fallback(not_found)
        .layer(cors)
        .with_state(models)
}

pub async fn serve(models: Arc<Models>, port: u16, cors_origin: Option<&str>) -> std::io::Result<()> {
    let app = router(models, cors_origin);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
