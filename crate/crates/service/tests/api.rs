use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use enrichment_core::export::parse_table;
use enrichment_service::{router, DesignsResponse, ErrorBody, Health, PerformanceResponse, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

/// Small calibration so the suite stays fast.
fn quick(mut body: Value) -> Value {
    let obj = body.as_object_mut().unwrap();
    obj.entry("calibration_paths").or_insert(json!(20_000));
    obj.entry("iterations").or_insert(json!(2_000));
    body
}

fn app() -> Router {
    router(ServiceConfig::default())
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json<T: serde::de::DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> Reply {
    let request = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let headers = response.headers().clone();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

async fn post_json(app: &Router, uri: &str, body: &Value) -> Reply {
    call(app, "POST", uri, body.to_string()).await
}

#[tokio::test]
async fn health_reports_ok() {
    let reply = call(&app(), "GET", "/api/v1/health", Body::empty()).await;
    assert_eq!(reply.status, StatusCode::OK);
    let health: Health = reply.json();
    assert_eq!(health.status, "ok");
}

#[tokio::test]
async fn designs_defaults_and_export() {
    let app = app();
    let reply = post_json(&app, "/api/v1/designs", &json!({})).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    let designs: DesignsResponse = reply.json();
    assert_eq!(designs.adaptive.stages(), 5);
    assert_eq!(designs.adaptive.k_star(), 3);
    assert_eq!(designs.combined.constant.constant, designs.subpop1.constant.constant);
    assert_eq!(designs.parameters.alpha, Some(0.025));

    let export = call(&app, "GET", &format!("/api/v1/export/{}/ad", designs.job_id), Body::empty()).await;
    assert_eq!(export.status, StatusCode::OK);
    let table = parse_table(&export.text()).unwrap();
    assert_eq!(table.rows.len(), 5);
    assert_eq!(table.rows[2][7], Some(f64::INFINITY));
    assert_eq!(table.rows[3][4], None);
    for name in ["sc", "ss.csv", "parameters"] {
        let r = call(&app, "GET", &format!("/api/v1/export/{}/{name}", designs.job_id), Body::empty()).await;
        assert_eq!(r.status, StatusCode::OK, "{name}");
    }
    let report = call(&app, "GET", &format!("/api/v1/export/{}/report", designs.job_id), Body::empty()).await;
    assert!(report.text().starts_with("<!DOCTYPE html>"));
    let missing = call(&app, "GET", &format!("/api/v1/export/{}/performance", designs.job_id), Body::empty()).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);

    let again = post_json(&app, "/api/v1/designs", &json!({})).await;
    assert_eq!(again.headers["x-cache"], "hit");
    assert_eq!(again.body, reply.body);
    assert!(reply.headers.contains_key("x-compute-time-ms"));
}

#[tokio::test]
async fn single_stage_boundary_is_the_normal_quantile() {
    let reply = post_json(&app(), "/api/v1/designs", &quick(json!({"stages": 1, "k_star": 1}))).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    let designs: DesignsResponse = reply.json();
    for e in [designs.combined.efficacy[0], designs.subpop1.efficacy[0]] {
        assert!((e - 1.96).abs() < 5e-4, "{e}");
    }
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let app = app();
    for (body, parameter) in [
        (json!({"alpha": 0.0}), Some("alpha")),
        (json!({"k_star": 9}), Some("k_star")),
        (json!({"iterations": 0}), Some("iterations")),
        (json!({"bogus": 1}), None),
    ] {
        let reply = post_json(&app, "/api/v1/performance", &body).await;
        assert_eq!(reply.status, StatusCode::BAD_REQUEST, "{body}");
        let err: ErrorBody = reply.json();
        assert_eq!(err.parameter.as_deref(), parameter, "{}", err.error);
    }
    let reply = call(&app, "POST", "/api/v1/designs", "{not json").await;
    assert_eq!(reply.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_job_is_404() {
    let app = app();
    let reply = call(&app, "GET", "/api/v1/export/deadbeef/ad", Body::empty()).await;
    assert_eq!(reply.status, StatusCode::NOT_FOUND);
    let designs: DesignsResponse = post_json(&app, "/api/v1/designs", &quick(json!({}))).await.json();
    let reply = call(&app, "GET", &format!("/api/v1/export/{}/nope", designs.job_id), Body::empty()).await;
    assert_eq!(reply.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn performance_sweep_and_ss_constancy() {
    let app = app();
    let reply = post_json(&app, "/api/v1/performance", &quick(json!({}))).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    let full: PerformanceResponse = reply.json();
    assert_eq!(full.performance.effects.len(), 9);
    let single: PerformanceResponse = post_json(
        &app,
        "/api/v1/performance",
        &quick(json!({"effect_min": 0.0, "effect_max": 0.0, "grid_points": 1})),
    )
    .await
    .json();
    for m in &full.performance.subpop1 {
        assert_eq!(m, &single.performance.subpop1[0]);
    }
    let csv = call(&app, "GET", &format!("/api/v1/export/{}/performance", full.job_id), Body::empty()).await;
    let table = parse_table(&csv.text()).unwrap();
    assert_eq!(table.header.len(), 10);
}

#[tokio::test]
async fn time_limit_message_is_verbatim() {
    let reply = post_json(
        &app(),
        "/api/v1/performance",
        &json!({"iterations": 5_000_000, "time_limit_secs": 0.2}),
    )
    .await;
    assert_eq!(reply.status, StatusCode::REQUEST_TIMEOUT);
    let err: ErrorBody = reply.json();
    assert_eq!(err.error, "reached CPU time limit");
}

#[tokio::test]
async fn server_caps_the_time_limit() {
    let app = router(ServiceConfig {
        max_time_limit_secs: 0.2,
        ..ServiceConfig::default()
    });
    let reply = post_json(&app, "/api/v1/performance", &json!({"iterations": 5_000_000, "time_limit_secs": 0})).await;
    assert_eq!(reply.status, StatusCode::REQUEST_TIMEOUT);
}

#[tokio::test]
async fn fresh_seed_changes_the_job() {
    let app = app();
    let a: DesignsResponse = post_json(&app, "/api/v1/designs", &quick(json!({}))).await.json();
    let b: DesignsResponse = post_json(&app, "/api/v1/designs", &quick(json!({"fresh_seed": true}))).await.json();
    assert_ne!(a.job_id, b.job_id);
    assert_ne!(a.calibration.seed, b.calibration.seed);
}

#[tokio::test]
async fn ingest_sample_and_errors() {
    let app = app();
    let reply = call(&app, "POST", "/api/v1/ingest", "subpop,treatment,outcome\n1,1,1\n1,0,0\n2,1,0\n2,0,0\n").await;
    assert_eq!(reply.status, StatusCode::OK);
    let v: Value = reply.json();
    assert_eq!(v["population"]["pi1"], json!(0.5));
    assert_eq!(v["population"]["p1t"], json!(0.999));

    let bad = call(&app, "POST", "/api/v1/ingest", "s,t,y\n1,1,1\n1,0,0\n2,1,0\n3,0,0\n").await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert!(bad.json::<ErrorBody>().error.contains("row 5"));
    let empty = call(&app, "POST", "/api/v1/ingest", "s,t,y\n").await;
    assert_eq!(empty.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn abandoned_request_frees_its_worker() {
    let app = router(ServiceConfig {
        workers: 1,
        ..ServiceConfig::default()
    });
    let heavy = json!({"iterations": 50_000_000, "seed": 7});
    let abandoned = tokio::time::timeout(Duration::from_millis(500), post_json(&app, "/api/v1/performance", &heavy)).await;
    assert!(abandoned.is_err(), "heavy request should still be running");
    // With one worker, this only runs once the abandoned computation stops.
    let started = Instant::now();
    let reply = post_json(&app, "/api/v1/designs", &quick(json!({"seed": 8}))).await;
    assert_eq!(reply.status, StatusCode::OK);
    assert!(started.elapsed() < Duration::from_secs(20), "{:?}", started.elapsed());
}
