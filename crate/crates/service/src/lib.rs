//! Stateless HTTP facade over `mcnn-core`.
//!
//! | Method | Path                 | Body                     | Response            |
//! |--------|----------------------|--------------------------|---------------------|
//! | POST   | `/api/analyze`       | analysis request         | portrait document   |
//! | POST   | `/api/trajectory`    | `{v_c0, n_d0, ...}`      | trajectory          |
//! | POST   | `/api/portrait.svg`  | analysis request         | `image/svg+xml`     |
//! | GET    | `/api/defaults`      |                          | default run config  |
//! | GET    | `/api/health`        |                          | status and version  |
//!
//! Every response carries `x-config-hash`. Invalid requests get 400 with the
//! offending `field_path`; numerical failures get 422 with diagnostics and
//! whatever partial result exists.

use std::net::SocketAddr;

use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use mcnn_core::config::{parse_json, CellBlock, GridBlock, InitialCondition, RunConfig};
use mcnn_core::export::document_json;
use mcnn_core::memristor::VcmParams;
use mcnn_core::render::{render_portrait, RenderStyle};
use mcnn_core::trajectory::SolverConfig;
use mcnn_core::{Analysis, AnalysisRequest, ConfigError, Error};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

pub const CONFIG_HASH_HEADER: &str = "x-config-hash";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    /// Largest sample count accepted on either grid axis.
    pub max_grid_samples: usize,
    pub max_trajectories: usize,
    /// Allow any origin. Off means same-origin only.
    pub permissive_cors: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_grid_samples: 201,
            max_trajectories: 64,
            permissive_cors: true,
        }
    }
}

/// Body of `POST /api/trajectory`: the initial condition plus any of the
/// physics blocks of an analysis request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRequest {
    pub v_c0: f64,
    pub n_d0: f64,
    #[serde(default)]
    pub cell: CellBlock,
    #[serde(default)]
    pub memristor: VcmParams,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl TrajectoryRequest {
    pub fn analysis_request(&self) -> AnalysisRequest {
        AnalysisRequest {
            cell: self.cell,
            memristor: self.memristor,
            grid: self.grid,
            solver: self.solver,
            trajectories: vec![InitialCondition {
                v_c0: self.v_c0,
                n_d0: self.n_d0,
            }],
        }
    }
}

#[derive(Debug)]
enum ApiError {
    Validation(ConfigError),
    Numerical {
        hash: String,
        body: serde_json::Value,
    },
    Internal(String),
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        Self::Validation(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            Self::Validation(e) => json_response(
                StatusCode::BAD_REQUEST,
                None,
                json!({"error": "validation", "field_path": e.path, "message": e.message})
                    .to_string(),
            ),
            Self::Numerical { hash, body } => json_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                Some(&hash),
                body.to_string(),
            ),
            Self::Internal(msg) => json_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                None,
                json!({"error": "internal", "message": msg}).to_string(),
            ),
        }
    }
}

fn json_response(status: StatusCode, hash: Option<&str>, body: String) -> Response {
    with_type(status, hash, "application/json", body)
}

fn with_type(
    status: StatusCode,
    hash: Option<&str>,
    content_type: &'static str,
    body: String,
) -> Response {
    let mut r = (status, body).into_response();
    let h = r.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    if let Some(v) = hash.and_then(|s| HeaderValue::from_str(s).ok()) {
        h.insert(CONFIG_HASH_HEADER, v);
    }
    r
}

fn check_caps(cfg: &ServiceConfig, req: &AnalysisRequest) -> Result<(), ConfigError> {
    let cap = cfg.max_grid_samples;
    if req.grid.v_c_samples > cap {
        return Err(ConfigError::new(
            "grid.v_c_samples",
            format!("exceeds the cap of {cap}"),
        ));
    }
    if req.grid.n_d_samples > cap {
        return Err(ConfigError::new(
            "grid.n_d_samples",
            format!("exceeds the cap of {cap}"),
        ));
    }
    if req.trajectories.len() > cfg.max_trajectories {
        return Err(ConfigError::new(
            "trajectories",
            format!("exceeds the cap of {} trajectories", cfg.max_trajectories),
        ));
    }
    Ok(())
}

fn analysis(cfg: &ServiceConfig, req: AnalysisRequest) -> Result<Analysis, ApiError> {
    check_caps(cfg, &req)?;
    Analysis::new(req).map_err(|e| match e {
        Error::Config(c) => ApiError::Validation(c),
        other => ApiError::Internal(other.to_string()),
    })
}

fn numerical(hash: &str, e: Error) -> ApiError {
    match e {
        Error::Config(c) => ApiError::Validation(c),
        e => ApiError::Numerical {
            hash: hash.to_string(),
            body: json!({"error": "numerical", "diagnostics": [{"message": e.to_string()}]}),
        },
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn failure_diagnostics(doc: &mcnn_core::export::PortraitDocument) -> Vec<serde_json::Value> {
    doc.trajectories
        .iter()
        .enumerate()
        .filter_map(|(k, r)| {
            r.failure
                .as_ref()
                .map(|f| json!({"trajectory": k, "kind": f.kind, "t": f.t, "message": f.message}))
        })
        .collect()
}

async fn analyze(State(cfg): State<ServiceConfig>, body: String) -> Result<Response, ApiError> {
    let req: AnalysisRequest = AnalysisRequest::from_json(&body)?;
    blocking(move || {
        let a = analysis(&cfg, req)?;
        let doc = a.portrait().map_err(|e| numerical(&a.config_hash, e))?;
        let diagnostics = failure_diagnostics(&doc);
        if !diagnostics.is_empty() {
            return Err(ApiError::Numerical {
                hash: a.config_hash.clone(),
                body: json!({"error": "numerical", "diagnostics": diagnostics, "document": doc}),
            });
        }
        Ok(json_response(
            StatusCode::OK,
            Some(&a.config_hash),
            document_json(&doc),
        ))
    })
    .await
}

async fn portrait_svg(
    State(cfg): State<ServiceConfig>,
    body: String,
) -> Result<Response, ApiError> {
    let req: AnalysisRequest = AnalysisRequest::from_json(&body)?;
    blocking(move || {
        let a = analysis(&cfg, req)?;
        let doc = a.portrait().map_err(|e| numerical(&a.config_hash, e))?;
        let svg = render_portrait(&doc, &RenderStyle::default());
        let diagnostics = failure_diagnostics(&doc);
        if !diagnostics.is_empty() {
            return Err(ApiError::Numerical {
                hash: a.config_hash.clone(),
                body: json!({"error": "numerical", "diagnostics": diagnostics, "svg": svg}),
            });
        }
        Ok(with_type(
            StatusCode::OK,
            Some(&a.config_hash),
            "image/svg+xml",
            svg,
        ))
    })
    .await
}

async fn trajectory(State(cfg): State<ServiceConfig>, body: String) -> Result<Response, ApiError> {
    let req: TrajectoryRequest = parse_json(&body)?;
    blocking(move || {
        let a = analysis(&cfg, req.analysis_request())?;
        let init = a.request.initial_states()[0];
        match a.trajectory(init) {
            Ok(t) => Ok(json_response(
                StatusCode::OK,
                Some(&a.config_hash),
                mcnn_core::export::to_json(&t),
            )),
            Err(Error::Simulation(e)) => Err(ApiError::Numerical {
                hash: a.config_hash.clone(),
                body: json!({
                    "error": "numerical",
                    "diagnostics": [{"kind": e.kind, "t": e.t, "message": e.to_string()}],
                    "partial": e.partial,
                }),
            }),
            Err(e) => Err(numerical(&a.config_hash, e)),
        }
    })
    .await
}

async fn defaults() -> Response {
    let cfg = RunConfig::default();
    json_response(
        StatusCode::OK,
        Some(&cfg.config_hash()),
        serde_json::to_string_pretty(&cfg).expect("defaults serialize"),
    )
}

async fn health() -> Response {
    json_response(
        StatusCode::OK,
        Some(&RunConfig::default().config_hash()),
        json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}).to_string(),
    )
}

pub fn router(cfg: ServiceConfig) -> Router {
    let r = Router::new()
        .route("/api/analyze", post(analyze))
        .route("/api/trajectory", post(trajectory))
        .route("/api/portrait.svg", post(portrait_svg))
        .route("/api/defaults", get(defaults))
        .route("/api/health", get(health))
        .with_state(cfg);
    if cfg.permissive_cors {
        r.layer(CorsLayer::permissive())
    } else {
        r
    }
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(cfg)).await
}
