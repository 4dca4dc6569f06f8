use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use scenario_api::{router, Config};
use scenario_core::exec::{self, TickConfig};
use scenario_core::fixtures;
use scenario_core::model;
use scenario_core::modules::module_document;
use scenario_core::registry::Registry;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: impl Into<String>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.into()))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let content_type = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, body }
}

async fn create(app: &Router, fixture_name: &str) -> String {
    let r = call(app, Method::POST, "/scenarios", read_fixture(fixture_name)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()["id"].as_str().unwrap().to_string()
}

fn app() -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Config::new(dir.path()));
    (dir, app)
}

#[tokio::test]
async fn create_read_and_revisions() {
    let (dir, app) = app();
    let r = call(&app, Method::POST, "/scenarios", read_fixture("uis1.json")).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let session = r.json();
    assert_eq!(session["revision"], 1);
    let id = session["id"].as_str().unwrap();

    // Persisted in the CLI's file format.
    let stored = std::fs::read_to_string(dir.path().join("scenarios").join(format!("{id}.json"))).unwrap();
    let reg = Registry::builtin();
    assert_eq!(model::parse(&stored, &reg).unwrap(), fixtures::uis1(&reg));

    let got = call(&app, Method::GET, &format!("/scenarios/{id}"), "").await;
    assert_eq!(got.status, StatusCode::OK);
    assert_eq!(got.json()["document"], session["document"]);

    let put = json!({ "revision": 1, "document": session["document"] }).to_string();
    let first = call(&app, Method::PUT, &format!("/scenarios/{id}"), put.clone()).await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(first.json()["revision"], 2);
    let second = call(&app, Method::PUT, &format!("/scenarios/{id}"), put).await;
    assert_eq!(second.status, StatusCode::CONFLICT);
    assert_eq!(second.json()["revision"], 2);

    // A second scenario with the same name gets its own id.
    let other = create(&app, "uis1.json").await;
    assert_ne!(other, id);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let (_dir, app) = app();
    for (method, uri) in [
        (Method::GET, "/scenarios/nope"),
        (Method::POST, "/scenarios/nope/validate"),
        (Method::POST, "/scenarios/nope/export"),
        (Method::POST, "/scenarios/nope/run"),
        (Method::GET, "/scenarios/..%2Fetc"),
    ] {
        assert_eq!(call(&app, method, uri, "").await.status, StatusCode::NOT_FOUND, "{uri}");
    }
    let put = json!({ "revision": 1, "document": serde_json::from_str::<Value>(&read_fixture("minimal.json")).unwrap() });
    assert_eq!(call(&app, Method::PUT, "/scenarios/nope", put.to_string()).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let (_dir, app) = app();
    assert_eq!(call(&app, Method::POST, "/scenarios", "{not json").await.status, StatusCode::BAD_REQUEST);
    let id = create(&app, "uis1.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/validate"), "{not json").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/validate"), r#"{"document": {"name": 3}}"#).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "ParseError");
}

#[tokio::test]
async fn validation_reports() {
    let (_dir, app) = app();
    let id = create(&app, "uis1.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/validate"), "").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["is_valid"], true);

    // Inline unsaved state takes precedence over the stored document.
    let inline = format!(r#"{{"document": {}}}"#, read_fixture("bad_join.json"));
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/validate"), inline).await;
    let report = r.json();
    assert_eq!(report["is_valid"], false);
    assert_eq!(report["findings"][0]["rule_id"], "R5");

    let ped = create(&app, "pedestrian_50kmh.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{ped}/validate"), r#"{"strict": true}"#).await;
    assert_eq!(r.json()["is_valid"], true);
    assert_eq!(r.json()["passes"], false);
}

#[tokio::test]
async fn export_matches_golden() {
    let (_dir, app) = app();
    let id = create(&app, "uis1.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/export"), "").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type.as_deref(), Some("application/xml"));
    assert_eq!(r.text(), read_fixture("golden/uis1.xosc"));

    let body = r#"{"catalog_locations": [["vehicle", "catalogs/vehicles"]], "parameterize": true}"#;
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/export"), body).await;
    assert!(r.text().contains("value=\"$ego_drive_distance\""));
}

#[tokio::test]
async fn export_and_run_refuse_logical_scenarios() {
    let (_dir, app) = app();
    let id = create(&app, "uis1_logical.json").await;
    for action in ["export", "run"] {
        let r = call(&app, Method::POST, &format!("/scenarios/{id}/{action}"), "").await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{action}");
        assert_eq!(r.json()["error"], "LevelError");
        assert_eq!(r.json()["found"], "logical");
    }
    let bad = create(&app, "bad_join.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{bad}/export"), "").await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["findings"][0]["rule_id"], "R5");
}

#[tokio::test]
async fn run_trace_is_the_core_trace() {
    let (_dir, app) = app();
    let reg = Registry::builtin();
    let id = create(&app, "uis1.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/run"), "").await;
    assert_eq!(r.status, StatusCode::OK);
    let expected = exec::run(&fixtures::uis1(&reg), &reg, &TickConfig::default()).unwrap();
    assert_eq!(r.text(), expected.to_json());

    let cfg = TickConfig { max_time: 2.0, ..TickConfig::default() };
    let body = json!({ "tick_config": cfg }).to_string();
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/run"), body).await;
    assert_eq!(r.text(), exec::run(&fixtures::uis1(&reg), &reg, &cfg).unwrap().to_json());

    let bad = json!({ "tick_config": TickConfig::with_dt(0.0) }).to_string();
    let r = call(&app, Method::POST, &format!("/scenarios/{id}/run"), bad).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let logical = create(&app, "uis1_logical.json").await;
    let r = call(&app, Method::POST, &format!("/scenarios/{logical}/run"), r#"{"index": 3}"#).await;
    assert_eq!(r.status, StatusCode::OK);
    let trace = r.json();
    assert_eq!(trace["outcome"]["kind"], "collision", "{}", trace["outcome"]);
    let r = call(&app, Method::POST, &format!("/scenarios/{logical}/run"), r#"{"index": 12}"#).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn module_library() {
    let (_dir, app) = app();
    let r = call(&app, Method::GET, "/library/modules", "").await;
    assert_eq!(r.json(), json!({}));

    let reg = Registry::builtin();
    let doc = module_document(&fixtures::crossing_maneuver(&reg));
    let r = call(&app, Method::POST, "/library/modules", doc).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let rev = r.json()["revision"].clone();

    let list = call(&app, Method::GET, "/library/modules", "").await.json();
    assert_eq!(list["CrossingManeuver"]["head"], rev);
    assert_eq!(list["CrossingManeuver"]["roles"], json!(["crosser", "trigger"]));

    assert_eq!(call(&app, Method::POST, "/library/modules", "{}").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let (_dir, app) = app();
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/scenarios")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert!(res.headers().contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}
