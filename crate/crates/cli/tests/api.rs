mod common;

use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use curvemrf::io::decode_pgm;
use curvemrf_cli::serve::{app, ServerOptions, QUEUE_DEPTH};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn server() -> Router {
    app(common::bank(), ServerOptions::default()).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn job(side: usize, lambda: f64, passes: usize) -> Value {
    json!({
        "image": B64.encode(common::disk_image(side)),
        "strokes": B64.encode(common::disk_strokes(side, true)),
        "lambda": lambda,
        "passes": passes,
    })
}

async fn wait_for(app: &Router, id: u64, pred: impl Fn(&Value) -> bool) -> Value {
    let start = Instant::now();
    loop {
        let (code, v) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(code, StatusCode::OK);
        if pred(&v) {
            return v;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "timed out: {v}");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

fn finished(v: &Value) -> bool {
    matches!(v["status"].as_str(), Some("done" | "failed" | "cancelled"))
}

#[tokio::test]
async fn job_lifecycle() {
    let app = server();
    let (code, v) = call(&app, "POST", "/jobs", Some(job(20, 0.5, 20))).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    let id = v["id"].as_u64().unwrap();
    let status = wait_for(&app, id, finished).await;
    assert_eq!(status["status"], "done");
    assert_eq!(status["pass"], 20);
    assert!(status["lower_bound"].is_f64());

    let (code, r) = call(&app, "GET", &format!("/jobs/{id}/result"), None).await;
    assert_eq!(code, StatusCode::OK);
    let labeling = decode_pgm(&B64.decode(r["labeling"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!((labeling.dims.width, labeling.dims.height), (20, 20));
    // centre is a foreground seed, the left column background
    assert_eq!(labeling.data[10 * 20 + 10], 255);
    assert_eq!(labeling.data[10 * 20], 0);
    let mm = decode_pgm(&B64.decode(r["min_marginal_map"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(mm.data.len(), 400);
    let (e, lb) = (r["energy"].as_f64().unwrap(), r["lower_bound"].as_f64().unwrap());
    assert!(lb <= e + 1e-6 * e.abs().max(1.0), "lb {lb} energy {e}");
    assert_eq!(lb, status["lower_bound"].as_f64().unwrap());

    let (code, _) = call(&app, "DELETE", &format!("/jobs/{id}"), None).await;
    assert_eq!(code, StatusCode::CONFLICT);
}

#[tokio::test]
async fn lambda_zero_follows_the_likelihoods() {
    let app = server();
    let (_, v) = call(&app, "POST", "/jobs", Some(job(20, 0.0, 5))).await;
    let id = v["id"].as_u64().unwrap();
    assert_eq!(wait_for(&app, id, finished).await["status"], "done");
    let (_, r) = call(&app, "GET", &format!("/jobs/{id}/result"), None).await;
    let labeling = decode_pgm(&B64.decode(r["labeling"].as_str().unwrap()).unwrap()).unwrap();
    for y in 0..20 {
        for x in 0..20 {
            let inside = (x as f64 + 0.5 - 10.0).hypot(y as f64 + 0.5 - 10.0) < 7.0;
            assert_eq!(labeling.data[y * 20 + x] == 255, inside, "pixel ({x}, {y})");
        }
    }
}

#[tokio::test]
async fn rejects_invalid_submissions() {
    let app = server();
    let good = job(20, 1.0, 5);
    let mut cases = vec![];
    let mut v = good.clone();
    v["image"] = json!("%%% not base64");
    cases.push(v);
    let mut v = good.clone();
    v["strokes"] = json!(B64.encode(b"P5\n2 2\n255\nabcd"));
    cases.push(v);
    let mut v = good.clone();
    v["strokes"] = json!(B64.encode(common::disk_strokes(20, false)));
    cases.push(v);
    let mut v = good.clone();
    v["strokes"] = json!(B64.encode(common::disk_strokes(18, true)));
    cases.push(v);
    let mut v = good.clone();
    v["lambda"] = json!(-1.0);
    cases.push(v);
    let mut v = good.clone();
    v["passes"] = json!(0);
    cases.push(v);
    let mut v = good.clone();
    v["image"] = json!(B64.encode(common::disk_image(161)));
    v["strokes"] = json!(B64.encode(common::disk_strokes(161, true)));
    cases.push(v);
    for case in cases {
        let (code, body) = call(&app, "POST", "/jobs", Some(case)).await;
        assert_eq!(code, StatusCode::BAD_REQUEST, "{body}");
        assert!(body["error"].is_string());
    }
    let req = Request::builder()
        .method("POST")
        .uri("/jobs")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn large_images_need_the_override() {
    let opts = ServerOptions {
        allow_large: true,
        ..Default::default()
    };
    let app = app(common::bank(), opts).unwrap();
    let (code, v) = call(&app, "POST", "/jobs", Some(job(161, 0.0, 1))).await;
    assert_eq!(code, StatusCode::ACCEPTED, "{v}");
}

#[tokio::test]
async fn unknown_jobs_are_404() {
    let app = server();
    for (method, uri) in [("GET", "/jobs/99"), ("GET", "/jobs/99/result"), ("DELETE", "/jobs/99")] {
        let (code, _) = call(&app, method, uri, None).await;
        assert_eq!(code, StatusCode::NOT_FOUND, "{method} {uri}");
    }
}

#[tokio::test]
async fn bank_endpoint_returns_the_bank() {
    let app = server();
    let (code, v) = call(&app, "GET", "/bank", None).await;
    assert_eq!(code, StatusCode::OK);
    let bank = curvemrf::PatternBank::from_json(&v.to_string()).unwrap();
    assert_eq!(bank, common::bank());
}

#[tokio::test]
async fn queue_is_bounded_and_jobs_cancel() {
    let app = server();
    let (_, v) = call(&app, "POST", "/jobs", Some(job(40, 1.0, 100_000))).await;
    let running = v["id"].as_u64().unwrap();
    let progress = wait_for(&app, running, |v| v["status"] == "running" && v["pass"].as_u64() > Some(0)).await;
    assert!(progress["lower_bound"].is_f64());

    let mut queued = vec![];
    for _ in 0..QUEUE_DEPTH {
        let (code, v) = call(&app, "POST", "/jobs", Some(job(20, 1.0, 5))).await;
        assert_eq!(code, StatusCode::ACCEPTED);
        queued.push(v["id"].as_u64().unwrap());
    }
    let (code, v) = call(&app, "POST", "/jobs", Some(job(20, 1.0, 5))).await;
    assert_eq!(code, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"], "queue full");

    let (code, v) = call(&app, "DELETE", &format!("/jobs/{}", queued[0]), None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(v["status"], "cancelled");
    let (code, _) = call(&app, "GET", &format!("/jobs/{}/result", queued[0]), None).await;
    assert_eq!(code, StatusCode::CONFLICT);

    let (code, _) = call(&app, "DELETE", &format!("/jobs/{running}"), None).await;
    assert_eq!(code, StatusCode::ACCEPTED);
    let v = wait_for(&app, running, finished).await;
    assert_eq!(v["status"], "cancelled");

    // the rest drain in order once the long job stops
    for &id in &queued[1..] {
        assert_eq!(wait_for(&app, id, finished).await["status"], "done");
    }
    assert_eq!(
        call(&app, "GET", &format!("/jobs/{}", queued[0]), None).await.1["status"],
        "cancelled"
    );
}

#[tokio::test]
async fn pending_result_is_409() {
    let app = server();
    let (_, v) = call(&app, "POST", "/jobs", Some(job(40, 1.0, 100_000))).await;
    let id = v["id"].as_u64().unwrap();
    let (code, body) = call(&app, "GET", &format!("/jobs/{id}/result"), None).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert!(matches!(body["status"].as_str(), Some("queued" | "running")));
    call(&app, "DELETE", &format!("/jobs/{id}"), None).await;
}

fn bank_file(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("bank.json");
    std::fs::write(&path, common::bank().to_json().unwrap()).unwrap();
    path
}

#[test]
fn binary_serves_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let bank = bank_file(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_curvemrf"))
        .args(["serve", "--bank"])
        .arg(&bank)
        .args(["--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();

    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /bank HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"patterns\""));

    let busy = Command::new(env!("CARGO_BIN_EXE_curvemrf"))
        .args(["serve", "--bank"])
        .arg(&bank)
        .args(["--bind", &addr])
        .output()
        .unwrap();
    assert_eq!(busy.status.code(), Some(3), "{}", String::from_utf8_lossy(&busy.stderr));

    child.kill().unwrap();
    child.wait().unwrap();
}
