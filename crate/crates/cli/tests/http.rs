mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use fragnet_cli::server::{router, Models};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(names: &[&str]) -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    write_models(dir.path(), names);
    // A stray file that is not a checkpoint is skipped.
    std::fs::write(dir.path().join("notes.json"), "{}").unwrap();
    let models = Models::scan(dir.path()).unwrap();
    (dir, router(Arc::new(models), None))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn health_lists_both_models() {
    let (_d, app) = app(&["esol", "lipo"]);
    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["models"], json!(["esol", "lipo"]));
    let (_, models) = call(&app, "GET", "/models", None).await;
    assert_eq!(models["models"].as_array().unwrap().len(), 2);
    assert_eq!(models["models"][0]["task"], "regression");
}

#[tokio::test]
async fn bad_smiles_is_a_syntax_error() {
    let (_d, app) = app(&["esol"]);
    let (status, body) = call(&app, "POST", "/explain", Some(json!({"smiles": "not a smiles", "model": "esol"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "SyntaxError");
    assert!(body["error"]["message"].as_str().unwrap().contains("syntax"));
}

#[tokio::test]
async fn salt_explanation_has_chloride_and_virtual_rows() {
    let (_d, app) = app(&["esol"]);
    let (status, body) = call(&app, "POST", "/explain", Some(json!({"smiles": SALT, "model": "esol"}))).await;
    assert_eq!(status, StatusCode::OK);
    let e = &body["explanation"];
    assert!(e["fragments"].as_array().unwrap().iter().any(|f| f["smiles"] == "[Cl-]"));
    assert!(e["connections"].as_array().unwrap().iter().any(|c| c["kind"] == "VIRTUAL"));
    let n_atoms = e["atom_weights"].as_array().unwrap().len();
    assert_eq!(body["layout"]["coords"].as_array().unwrap().len(), n_atoms);
}

#[tokio::test]
async fn predict_and_error_statuses() {
    let (_d, app) = app(&["esol", "lipo"]);
    let (status, body) = call(&app, "POST", "/predict", Some(json!({"smiles": "CCO", "model": "lipo"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["prediction"].as_f64().unwrap().is_finite());

    let (status, body) = call(&app, "POST", "/predict", Some(json!({"smiles": "CCO", "model": "tox"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "UnknownModel");

    // Two models loaded, so the name is required.
    let (status, _) = call(&app, "POST", "/predict", Some(json!({"smiles": "CCO"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(&app, "POST", "/predict", Some(json!({"smiles": 4}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "InvalidRequest");

    let (status, _) = call(&app, "GET", "/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn repeated_and_concurrent_requests_agree() {
    let (_d, app) = app(&["esol"]);
    let molecules = ["CCO", SALT, "c1ccccc1O", "CC(=O)Nc1ccc(O)cc1"];
    let single: Vec<Value> = {
        let mut out = Vec::new();
        for s in molecules {
            out.push(call(&app, "POST", "/explain", Some(json!({"smiles": s}))).await.1);
        }
        out
    };
    let handles: Vec<_> = molecules
        .iter()
        .map(|s| {
            let app = app.clone();
            let s = s.to_string();
            tokio::spawn(async move { call(&app, "POST", "/explain", Some(json!({"smiles": s}))).await.1 })
        })
        .collect();
    for (h, expect) in handles.into_iter().zip(single) {
        assert_eq!(h.await.unwrap(), expect);
    }
}

#[tokio::test]
async fn cors_header_present() {
    let (_d, app) = app(&["esol"]);
    let req = Request::builder()
        .uri("/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}
