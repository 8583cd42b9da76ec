//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;
use std::thread::JoinHandle;

use image::{Rgb, RgbImage};
use xpose_core::viewgen::protocol::{ErrorBody, GenerateRequestBody, GenerateResponseBody, GENERATE_PATH, HEALTH_PATH};
use xpose_core::viewgen::{GeneratorFailure, MockServer, RemoteGenerator, MOCK_MODEL_ID};
use xpose_core::{ViewDelta, ViewGenerator, ViewRequest};

pub const GOLDEN_REQUEST: &str = "generate_request.json";
pub const GOLDEN_RESPONSE: &str = "generate_response.json";
/// Set to rewrite the golden files from the current mock server.
pub const BLESS_ENV: &str = "XPOSE_BLESS_FIXTURES";

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// The request the golden files were recorded from.
pub fn golden_view_request() -> ViewRequest {
    let image = RgbImage::from_fn(32, 32, |x, y| Rgb([(x * 8) as u8, (y * 8) as u8, ((x + y) * 4) as u8]));
    ViewRequest::new(image, vec![ViewDelta::new(30.0, 0.0), ViewDelta::new(-45.0, 15.0)], 50, 7).unwrap()
}

fn read_fixture(name: &str) -> Result<String, String> {
    let path = fixture_path(name);
    fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Raw HTTP exchange returning the status code and body whatever the code.
pub fn raw(method: &str, url: &str, body: Option<&str>) -> Result<(u16, String), String> {
    let req = ureq::request(method, url).set("Content-Type", "application/json");
    let result = match body {
        Some(b) => req.send_string(b),
        None => req.call(),
    };
    match result {
        Ok(resp) => {
            let status = resp.status();
            Ok((status, resp.into_string().map_err(|e| e.to_string())?))
        }
        Err(ureq::Error::Status(status, resp)) => Ok((status, resp.into_string().map_err(|e| e.to_string())?)),
        Err(e) => Err(e.to_string()),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Records the golden files from a running mock server.
pub fn bless(server: &MockServer) -> Result<(), String> {
    let body = GenerateRequestBody::from_request(&golden_view_request()).map_err(|e| e.to_string())?;
    let request = serde_json::to_string_pretty(&body).map_err(|e| e.to_string())?;
    let (status, response) = raw("POST", &format!("{}{GENERATE_PATH}", server.endpoint()), Some(&request))?;
    ensure(status == 200, || format!("mock answered {status}"))?;
    let response: serde_json::Value = serde_json::from_str(&response).map_err(|e| e.to_string())?;
    fs::create_dir_all(fixture_path("")).map_err(|e| e.to_string())?;
    fs::write(fixture_path(GOLDEN_REQUEST), request + "\n").map_err(|e| e.to_string())?;
    let response = serde_json::to_string_pretty(&response).map_err(|e| e.to_string())?;
    fs::write(fixture_path(GOLDEN_RESPONSE), response + "\n").map_err(|e| e.to_string())?;
    Ok(())
}

/// Golden request and response files against a live mock server and the
/// client. Returns a short summary.
pub fn check_golden_round_trip() -> Result<String, String> {
    let server = MockServer::start("127.0.0.1:0").map_err(|e| e.to_string())?;
    if std::env::var_os(BLESS_ENV).is_some() {
        bless(&server)?;
    }
    let expected = golden_view_request();

    let golden_request = read_fixture(GOLDEN_REQUEST)?;
    let parsed: GenerateRequestBody = serde_json::from_str(&golden_request).map_err(|e| format!("golden request: {e}"))?;
    let ours = GenerateRequestBody::from_request(&expected).map_err(|e| e.to_string())?;
    ensure(parsed.views == ours.views && parsed.steps == ours.steps && parsed.seed == ours.seed, || {
        "golden request fields differ from the client's serialization".into()
    })?;
    let decoded = parsed.into_request().map_err(|e| e.to_string())?;
    ensure(decoded == expected, || "golden request does not decode to the recorded request".into())?;
    let reparsed: GenerateRequestBody =
        serde_json::from_str(&serde_json::to_string(&ours).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(reparsed.into_request().map_err(|e| e.to_string())? == expected, || "client request does not round trip".into())?;

    let golden_response: GenerateResponseBody =
        serde_json::from_str(&read_fixture(GOLDEN_RESPONSE)?).map_err(|e| format!("golden response: {e}"))?;
    let golden_images = golden_response.decode_images().map_err(|e| e.to_string())?;
    ensure(golden_images.len() == expected.deltas.len(), || "golden response has the wrong image count".into())?;

    let (status, body) = raw("POST", &format!("{}{GENERATE_PATH}", server.endpoint()), Some(&golden_request))?;
    ensure(status == 200, || format!("golden request answered {status}: {body}"))?;
    let live: GenerateResponseBody = serde_json::from_str(&body).map_err(|e| e.to_string())?;
    let live_images = live.decode_images().map_err(|e| e.to_string())?;
    ensure(live_images == golden_images, || "mock response differs from the golden response".into())?;

    let client = RemoteGenerator::new(server.endpoint());
    let health = client.health().map_err(|e| e.to_string())?;
    ensure(health.status == "ok" && health.model == MOCK_MODEL_ID, || format!("unexpected health {health:?}"))?;
    let generated = client.generate(&expected).map_err(|e| e.to_string())?;
    ensure(generated == golden_images, || "client output differs from the golden response".into())?;
    Ok(format!("{} views round-tripped", generated.len()))
}

/// Status codes of the mock server's error paths.
pub fn check_error_statuses() -> Result<String, String> {
    let server = MockServer::start("127.0.0.1:0").map_err(|e| e.to_string())?;
    let base = server.endpoint();
    let png = xpose_core::viewgen::protocol::encode_png_b64(&RgbImage::new(8, 8)).map_err(|e| e.to_string())?;
    let views = r#"[{"d_azimuth_deg":10.0,"d_elevation_deg":0.0}]"#;
    let body = |image: &str, views: &str, steps: i64| {
        format!(r#"{{"image_png_b64":"{image}","views":{views},"steps":{steps},"seed":0}}"#)
    };
    let generate = format!("{base}{GENERATE_PATH}");
    let cases: Vec<(&str, &str, String, Option<String>, u16)> = vec![
        ("health", "GET", format!("{base}{HEALTH_PATH}"), None, 200),
        ("valid", "POST", generate.clone(), Some(body(&png, views, 10)), 200),
        ("unknown route", "GET", format!("{base}/v1/nope"), None, 404),
        ("wrong method", "GET", generate.clone(), None, 405),
        ("malformed json", "POST", generate.clone(), Some("{\"image_png_b64\":".into()), 400),
        ("unknown field", "POST", generate.clone(), Some(body(&png, views, 10).replace("\"seed\"", "\"sed\"")), 400),
        ("malformed base64", "POST", generate.clone(), Some(body("%%%not-base64", views, 10)), 400),
        ("not a png", "POST", generate.clone(), Some(body("aGVsbG8=", views, 10)), 400),
        ("empty views", "POST", generate.clone(), Some(body(&png, "[]", 10)), 422),
        ("zero steps", "POST", generate, Some(body(&png, views, 0)), 422),
    ];
    for (name, method, url, body, want) in &cases {
        let (status, text) = raw(method, url, body.as_deref())?;
        ensure(status == *want, || format!("{name}: expected {want}, got {status}"))?;
        if *want >= 400 {
            let err: ErrorBody = serde_json::from_str(&text).map_err(|e| format!("{name}: error body {e}: {text}"))?;
            ensure(!err.error.is_empty(), || format!("{name}: empty error string"))?;
        }
    }
    Ok(format!("{} status cases", cases.len()))
}

/// A one-shot server answering every request with a fixed status and body.
pub struct CannedServer {
    pub endpoint: String,
    handle: Option<JoinHandle<()>>,
}

impl CannedServer {
    pub fn start(status: u16, body: impl Into<String>, requests: usize) -> Self {
        let body = body.into();
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
        let endpoint = format!("http://{}", server.server_addr().to_ip().expect("ip address"));
        let handle = std::thread::spawn(move || {
            for _ in 0..requests {
                let Ok(mut req) = server.recv() else { return };
                let mut sink = Vec::new();
                let _ = req.as_reader().read_to_end(&mut sink);
                let _ = req.respond(tiny_http::Response::from_string(body.clone()).with_status_code(status));
            }
        });
        Self { endpoint, handle: Some(handle) }
    }
}

impl Drop for CannedServer {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Client mapping of server failures onto [`GeneratorFailure`].
pub fn check_client_failures() -> Result<String, String> {
    let request = golden_view_request();

    let server = CannedServer::start(400, r#"{"error":"image is not square"}"#, 1);
    match RemoteGenerator::new(&server.endpoint).generate(&request) {
        Err(GeneratorFailure::HttpStatus { status: 400, message }) if message == "image is not square" => {}
        other => return Err(format!("400 mapped to {other:?}")),
    }
    drop(server);

    let one = GenerateResponseBody::from_images(&[request.image.clone()]).map_err(|e| e.to_string())?;
    let one = serde_json::to_string(&one).map_err(|e| e.to_string())?;
    let server = CannedServer::start(200, one, 1);
    match RemoteGenerator::new(&server.endpoint).generate(&request) {
        Err(GeneratorFailure::CountMismatch { expected: 2, got: 1 }) => {}
        other => return Err(format!("short response mapped to {other:?}")),
    }
    drop(server);

    let server = CannedServer::start(200, r#"{"images_png_b64":["AAAA","AAAA"]}"#, 1);
    match RemoteGenerator::new(&server.endpoint).generate(&request) {
        Err(GeneratorFailure::Decode(_)) => {}
        other => return Err(format!("undecodable images mapped to {other:?}")),
    }
    drop(server);

    let server = CannedServer::start(503, r#"{"error":"model loading"}"#, 1);
    match RemoteGenerator::new(&server.endpoint).health() {
        Err(GeneratorFailure::HttpStatus { status: 503, .. }) => {}
        other => return Err(format!("503 health mapped to {other:?}")),
    }
    Ok("http status, count mismatch, decode".into())
}
