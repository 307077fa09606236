use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use mcnn_core::config::RunConfig;
use mcnn_core::export::parse_document_json;
use mcnn_core::trajectory::Trajectory;
use mcnn_core::AnalysisRequest;
use mcnn_service::{router, ServiceConfig, CONFIG_HASH_HEADER};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    hash: Option<String>,
    content_type: String,
    body: String,
}

async fn call(app: Router, method: &str, uri: &str, body: &str) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let hash = resp
        .headers()
        .get(CONFIG_HASH_HEADER)
        .map(|v| v.to_str().unwrap().to_string());
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    Reply {
        status,
        hash,
        content_type,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

fn app() -> Router {
    router(ServiceConfig::default())
}

fn small_request() -> AnalysisRequest {
    let mut req = AnalysisRequest::default();
    req.grid.v_c_samples = 11;
    req.grid.n_d_samples = 11;
    req
}

#[tokio::test]
async fn health() {
    let r = call(app(), "GET", "/api/health", "").await;
    assert_eq!(r.status, StatusCode::OK);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["status"], "ok");
    assert!(v["version"].is_string());
    assert!(r.hash.is_some());
}

#[tokio::test]
async fn defaults_match_library() {
    let r = call(app(), "GET", "/api/defaults", "").await;
    assert_eq!(r.status, StatusCode::OK);
    let cfg = RunConfig::from_json(&r.body).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(r.hash.unwrap(), cfg.config_hash());
}

#[tokio::test]
async fn analyze_defaults() {
    let req = AnalysisRequest::default();
    let r = call(
        app(),
        "POST",
        "/api/analyze",
        &serde_json::to_string(&req).unwrap(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert!(r.content_type.starts_with("application/json"));
    assert_eq!(r.hash.as_deref(), Some(req.config_hash().as_str()));
    let doc = parse_document_json(&r.body).unwrap();
    assert_eq!(doc.config_hash, req.config_hash());
    assert_eq!(doc.field.len(), 21 * 21);
    assert_eq!(doc.nullclines.len(), 2);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert!(v["equilibria"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["kind"] == "on-continuum"));
}

#[tokio::test]
async fn analyze_matches_library_output() {
    let req = small_request();
    let text = serde_json::to_string(&req).unwrap();
    let a = call(app(), "POST", "/api/analyze", &text).await;
    let b = call(app(), "POST", "/api/analyze", &text).await;
    assert_eq!(a.body, b.body);
    let doc = mcnn_core::build_portrait(&req).unwrap();
    assert_eq!(a.body, mcnn_core::export::document_json(&doc));
}

#[tokio::test]
async fn empty_object_means_defaults() {
    let r = call(app(), "POST", "/api/analyze", "{}").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.hash.unwrap(), AnalysisRequest::default().config_hash());
}

#[tokio::test]
async fn trajectory_reaches_attractor() {
    let body = json!({"v_c0": 1.25, "n_d0": 1e27}).to_string();
    let r = call(app(), "POST", "/api/trajectory", &body).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let t: Trajectory = serde_json::from_str(&r.body).unwrap();
    let end = t.terminal;
    assert!(end.v_c > 1.0, "{end:?}");
    // Positive voltage resets the device toward its lower bound.
    assert!((end.n_d - 1e25).abs() / 1e25 < 1e-3, "{end:?}");
    assert!((t.points.last().unwrap().v_c - end.v_c).abs() < 1e-12);
    assert_eq!(t.points.first().unwrap().t, 0.0);
}

#[tokio::test]
async fn unknown_key_gives_field_path() {
    let body = json!({"cell": {"r_ohm": 1000.0}}).to_string();
    let r = call(app(), "POST", "/api/analyze", &body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["error"], "validation");
    assert_eq!(v["field_path"], "cell.r_ohm");
    assert!(v["message"].as_str().unwrap().contains("r_ohm"));
}

#[tokio::test]
async fn invalid_value_gives_field_path() {
    let body = json!({"grid": {"v_c_min": 2.0, "v_c_max": 1.0}}).to_string();
    let r = call(app(), "POST", "/api/portrait.svg", &body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert!(
        v["field_path"].as_str().unwrap().starts_with("grid.v_c"),
        "{v}"
    );

    let body = json!({"v_c0": 0.0, "n_d0": 1e30}).to_string();
    let r = call(app(), "POST", "/api/trajectory", &body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["field_path"], "trajectories[0].n_d0");

    let r = call(app(), "POST", "/api/trajectory", "{\"v_c0\": 0.0}").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn caps_enforced() {
    let body = json!({"grid": {"v_c_samples": 202}}).to_string();
    let r = call(app(), "POST", "/api/analyze", &body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["field_path"], "grid.v_c_samples");

    let ics: Vec<Value> = (0..65)
        .map(|_| json!({"v_c0": 0.5, "n_d0": 1e26}))
        .collect();
    let body = json!({ "trajectories": ics }).to_string();
    let r = call(app(), "POST", "/api/analyze", &body).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["field_path"], "trajectories");

    let tight = router(ServiceConfig {
        max_grid_samples: 10,
        ..ServiceConfig::default()
    });
    let r = call(tight, "POST", "/api/analyze", "{}").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn svg_endpoint() {
    let req = small_request();
    let r = call(
        app(),
        "POST",
        "/api/portrait.svg",
        &serde_json::to_string(&req).unwrap(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type, "image/svg+xml");
    assert!(r.body.starts_with("<svg"));
    assert!(r.body.contains(&req.config_hash()));
    assert_eq!(r.hash.unwrap(), req.config_hash());
}

#[tokio::test]
async fn numerical_failure_is_422_with_partial() {
    let body = json!({"v_c0": 1.25, "n_d0": 1e27, "solver": {"rel_tol": 1e-6, "max_step": 1e-5, "horizon": 1e-3}}).to_string();
    let ok = call(app(), "POST", "/api/trajectory", &body).await;
    assert_eq!(ok.status, StatusCode::OK);

    // Tolerances no step can satisfy.
    let body = json!({"v_c0": 1.25, "n_d0": 1e27, "solver": {"rel_tol": 1e-300, "abs_tol_v": 1e-300, "abs_tol_n": 1e-300}}).to_string();
    let r = call(app(), "POST", "/api/trajectory", &body).await;
    assert_eq!(
        r.status,
        StatusCode::UNPROCESSABLE_ENTITY,
        "{}",
        &r.body[..r.body.len().min(300)]
    );
    let v: Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(v["error"], "numerical");
    assert_eq!(v["diagnostics"][0]["kind"], "step-underflow");
    assert!(!v["partial"]["points"].as_array().unwrap().is_empty());
    assert!(r.hash.is_some());
}

#[tokio::test]
async fn cors_headers() {
    let req = Request::builder()
        .method("GET")
        .uri("/api/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app().oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get("access-control-allow-origin").unwrap(),
        "*"
    );

    let closed = router(ServiceConfig {
        permissive_cors: false,
        ..ServiceConfig::default()
    });
    let req = Request::builder()
        .uri("/api/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = closed.oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test]
async fn unknown_route_is_404() {
    let r = call(app(), "GET", "/api/nope", "").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}
