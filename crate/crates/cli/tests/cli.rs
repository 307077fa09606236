use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::body::{to_bytes, Body};
use axum::http::Request;
use mcnn_core::export::{parse_field_csv, parse_trajectory_csv};
use mcnn_core::{AnalysisRequest, RunConfig};
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

fn mcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcnn"))
        .args(args)
        .env_remove("MCNN_THREADS")
        .output()
        .unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    mcnn(&all)
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_records(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stderr.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|_| panic!("not a JSON line: {l}")))
        .collect()
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

#[test]
fn defaults_match_shipped_config() {
    let out = mcnn(&["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text,
        std::fs::read_to_string(repo_file("configs/default.json")).unwrap()
    );
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["cell"]["r_ohms"], 1000.0);
    assert_eq!(v["cell"]["a_template"][4], 2.0);
    assert_eq!(RunConfig::from_json(&text).unwrap(), RunConfig::default());
}

#[test]
fn sdr_monostable_slice() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(
        tmp.path(),
        &["sdr", "--n-d", "max", "--set", "cell.r_ohms=3000"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(tmp.path().join("sdr.json"));
    let z = v["sdr"]["zero_crossings"].as_array().unwrap();
    assert_eq!(z.len(), 1);
    assert_eq!(z[0]["v_c"], 0.0);
    assert_eq!(z[0]["stability"], "stable");
    let csv = std::fs::read_to_string(tmp.path().join("sdr.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("v_c,dv_dt"));
    assert_eq!(csv.lines().count(), 1202);
}

#[test]
fn portrait_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert!(run_in(d.path(), &["portrait"]).status.success());
    }
    for name in ["portrait.svg", "portrait.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn every_artifact_carries_the_hash() {
    let tmp = TempDir::new().unwrap();
    let hash = AnalysisRequest::default().config_hash();
    for cmd in [
        vec!["field"],
        vec!["nullclines"],
        vec!["equilibria"],
        vec!["regions"],
        vec!["trajectory"],
        vec!["portrait"],
        vec!["sdr", "--n-d", "min"],
    ] {
        let out = run_in(tmp.path(), &cmd);
        assert!(out.status.success(), "{cmd:?}");
        let manifest = json(tmp.path().join("manifest.json"));
        assert_eq!(manifest["config_hash"], hash.as_str());
        assert_eq!(manifest["command"], cmd[0]);
        assert_eq!(manifest["status"], "ok");
        for name in manifest["artifacts"].as_array().unwrap() {
            let name = name.as_str().unwrap();
            if name.ends_with(".json") {
                assert_eq!(
                    json(tmp.path().join(name))["config_hash"],
                    hash.as_str(),
                    "{name}"
                );
            }
        }
    }
    let svg = std::fs::read_to_string(tmp.path().join("portrait.svg")).unwrap();
    assert!(svg.contains(&hash));
}

#[test]
fn csv_artifacts_parse_back() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "field",
            "--set",
            "grid.v_c_samples=2",
            "--set",
            "grid.n_d_samples=2",
        ],
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(tmp.path().join("field.csv")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(parse_field_csv(&text).unwrap().len(), 4);

    assert!(run_in(tmp.path(), &["trajectory"]).status.success());
    let text = std::fs::read_to_string(tmp.path().join("trajectory-0.csv")).unwrap();
    let points = parse_trajectory_csv(&text).unwrap();
    assert_eq!(points[0].v_c, 1.25);
    assert!(points.len() >= 200);
}

#[test]
fn config_file_and_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"cell": {"r_ohms": 3000.0}, "trajectories": []}"#).unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "equilibria",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "cell.c_farads=2e-9",
        ],
    );
    assert!(out.status.success());
    let manifest = json(tmp.path().join("manifest.json"));
    assert_eq!(manifest["config"]["cell"]["r_ohms"], 3000.0);
    assert_eq!(manifest["config"]["cell"]["c_farads"], 2e-9);
    let mut req = AnalysisRequest::default();
    req.cell.r_ohms = 3000.0;
    req.cell.c_farads = 2e-9;
    req.trajectories.clear();
    assert_eq!(manifest["config_hash"], req.config_hash().as_str());
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    for (args, path) in [
        (vec!["field", "--set", "cell.r_ohm=5"], "cell.r_ohm"),
        (
            vec!["field", "--set", "grid.v_c_samples=1"],
            "grid.v_c_samples",
        ),
        (
            vec!["trajectory", "--set", "trajectories.0.n_d0=1e30"],
            "trajectories[0].n_d0",
        ),
        (vec!["sdr", "--n-d", "middle"], "--n-d"),
        (vec!["sdr", "--n-d", "1e30"], "--n-d"),
    ] {
        let out = run_in(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let records = stderr_records(&out);
        let err = records.iter().find(|r| r["level"] == "error").unwrap();
        assert_eq!(err["kind"], "config");
        assert_eq!(err["field_path"], path, "{args:?}");
    }

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"grid": {"n_d_axis_scale": "cubic"}}"#).unwrap();
    let out = run_in(tmp.path(), &["field", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_records(&out)[0]["field_path"], "grid.n_d_axis_scale");

    let out = mcnn(&["field", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_mcnn"))
        .args(["defaults"])
        .env("MCNN_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_3_with_partials() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "portrait",
            "--set",
            "solver.rel_tol=1e-300",
            "--set",
            "solver.abs_tol_v=1e-300",
            "--set",
            "solver.abs_tol_n=1e-300",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let records = stderr_records(&out);
    let err = records.iter().find(|r| r["level"] == "error").unwrap();
    assert_eq!(err["kind"], "numerical");
    assert_eq!(err["trajectory"], 0);
    assert_eq!(err["failure"], "step-underflow");

    let diag = json(tmp.path().join("diagnostics.json"));
    assert_eq!(diag["diagnostics"][0]["kind"], "step-underflow");
    let manifest = json(tmp.path().join("manifest.json"));
    assert_eq!(manifest["status"], "numerical-failure");
    let svg = std::fs::read_to_string(tmp.path().join("portrait.svg")).unwrap();
    assert!(svg.contains("trajectory failed"));
    let doc = json(tmp.path().join("portrait.json"));
    assert!(!doc["trajectories"][0]["trajectory"]["points"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn diagnostics_are_json_lines() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["nullclines"]);
    assert!(out.status.success());
    let records = stderr_records(&out);
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r["event"] == "artifact"));
    assert!(tmp.path().join("nullclines.csv").exists());
}

#[test]
fn thread_count_does_not_change_output() {
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let tmp = TempDir::new().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_mcnn"))
            .args(["field", "--out", tmp.path().to_str().unwrap()])
            .env("MCNN_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(std::fs::read(tmp.path().join("field.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[tokio::test]
async fn service_matches_cli_portrait() {
    let tmp = TempDir::new().unwrap();
    let config = repo_file("configs/default.json");
    assert!(run_in(
        tmp.path(),
        &["portrait", "--config", config.to_str().unwrap()]
    )
    .status
    .success());
    let cli = std::fs::read_to_string(tmp.path().join("portrait.json")).unwrap();

    let cfg = RunConfig::from_json(&std::fs::read_to_string(&config).unwrap()).unwrap();
    let body = serde_json::to_string(&cfg.request()).unwrap();
    let app = mcnn_service::router(mcnn_service::ServiceConfig::default());
    let resp = app
        .oneshot(
            Request::post("/api/analyze")
                .header("content-type", "application/json")
                .body(Body::from(body))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    assert_eq!(std::str::from_utf8(&bytes).unwrap(), cli);
}

fn schema_covers(schema: &Value, value: &Value, path: &str) {
    match value {
        Value::Object(map) => {
            let props = schema["properties"]
                .as_object()
                .unwrap_or_else(|| panic!("{path}: no properties"));
            assert_eq!(schema["additionalProperties"], false, "{path}");
            assert_eq!(
                props.len(),
                map.len(),
                "{path}: schema and config keys differ"
            );
            for (k, v) in map {
                let sub = props
                    .get(k)
                    .unwrap_or_else(|| panic!("{path}.{k} missing from schema"));
                schema_covers(sub, v, &format!("{path}.{k}"));
            }
        }
        Value::Array(items) if schema["items"].is_object() => {
            for v in items {
                schema_covers(&schema["items"], v, &format!("{path}[]"));
            }
        }
        _ => {}
    }
}

#[test]
fn schema_document_tracks_config() {
    let schema: Value = serde_json::from_str(
        &std::fs::read_to_string(repo_file("docs/config.schema.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        schema["x-schema-version"],
        mcnn_core::config::SCHEMA_VERSION
    );
    let defaults = serde_json::to_value(RunConfig::default()).unwrap();
    schema_covers(&schema, &defaults, "");
}
