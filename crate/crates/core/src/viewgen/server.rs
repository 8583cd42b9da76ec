use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use log::{info, warn};
use tiny_http::{Header, Method, Response, Server};

use super::mock::MockGenerator;
use super::protocol::{ErrorBody, GenerateRequestBody, GenerateResponseBody, HealthResponse, GENERATE_PATH, HEALTH_PATH};
use super::{GeneratorFailure, ViewGenerator};

pub const MOCK_MODEL_ID: &str = "xpose-mock/1";

/// In-process `/v1` server backed by [`MockGenerator`]. It is the reference
/// implementation of the wire protocol and the source of the golden fixtures.
pub struct MockServer {
    server: Arc<Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves on a
    /// background thread until dropped.
    pub fn start(addr: &str) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server is not bound to an IP socket"))?;
        let worker = {
            let server = server.clone();
            std::thread::spawn(move || serve_loop(&server))
        };
        info!("mock generator listening on http://{addr}");
        Ok(Self { server, addr, worker: Some(worker) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks the calling thread until the server stops.
    pub fn wait(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn serve_loop(server: &Server) {
    for mut request in server.incoming_requests() {
        let mut body = Vec::new();
        let (status, payload) = match request.as_reader().read_to_end(&mut body) {
            Ok(_) => handle(request.method(), request.url(), &body),
            Err(e) => error_response(400, format!("could not read body: {e}")),
        };
        let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = Response::from_string(payload).with_status_code(status).with_header(header);
        if let Err(e) = request.respond(response) {
            warn!("mock server failed to respond: {e}");
        }
    }
}

fn error_response(status: u16, message: String) -> (u16, String) {
    (status, serde_json::to_string(&ErrorBody { error: message }).expect("serializable"))
}

/// Routes one request. Returns the status code and JSON body.
pub(crate) fn handle(method: &Method, url: &str, body: &[u8]) -> (u16, String) {
    let path = url.split('?').next().unwrap_or(url);
    match (method, path) {
        (Method::Get, HEALTH_PATH) => {
            let health = HealthResponse { status: "ok".into(), model: MOCK_MODEL_ID.into() };
            (200, serde_json::to_string(&health).expect("serializable"))
        }
        (Method::Post, GENERATE_PATH) => generate(body),
        (_, HEALTH_PATH | GENERATE_PATH) => error_response(405, format!("method {method} not allowed on {path}")),
        _ => error_response(404, format!("no route for {path}")),
    }
}

fn generate(body: &[u8]) -> (u16, String) {
    let parsed: GenerateRequestBody = match serde_json::from_slice(body) {
        Ok(p) => p,
        Err(e) => return error_response(400, format!("malformed JSON: {e}")),
    };
    let request = match parsed.into_request() {
        Ok(r) => r,
        Err(GeneratorFailure::Decode(msg)) => return error_response(400, format!("malformed image: {msg}")),
        Err(e) => return error_response(422, e.to_string()),
    };
    let images = match MockGenerator.generate(&request) {
        Ok(i) => i,
        Err(e) => return error_response(422, e.to_string()),
    };
    match GenerateResponseBody::from_images(&images) {
        Ok(resp) => (200, serde_json::to_string(&resp).expect("serializable")),
        Err(e) => error_response(500, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewgen::protocol::encode_png_b64;
    use image::RgbImage;

    fn body(views: &str, image: &str) -> Vec<u8> {
        format!(r#"{{"image_png_b64":"{image}","views":{views},"steps":50,"seed":1}}"#).into_bytes()
    }

    #[test]
    fn routes_and_status_codes() {
        assert_eq!(handle(&Method::Get, HEALTH_PATH, b"").0, 200);
        assert_eq!(handle(&Method::Get, "/nope", b"").0, 404);
        assert_eq!(handle(&Method::Get, GENERATE_PATH, b"").0, 405);
        assert_eq!(handle(&Method::Post, GENERATE_PATH, b"{not json").0, 400);
        assert_eq!(handle(&Method::Post, GENERATE_PATH, &body("[]", "%%%")).0, 400);
        let png = encode_png_b64(&RgbImage::new(16, 16)).unwrap();
        assert_eq!(handle(&Method::Post, GENERATE_PATH, &body("[]", &png)).0, 422);
        let (status, payload) = handle(
            &Method::Post,
            GENERATE_PATH,
            &body(r#"[{"d_azimuth_deg":10,"d_elevation_deg":0},{"d_azimuth_deg":-10,"d_elevation_deg":5}]"#, &png),
        );
        assert_eq!(status, 200);
        let resp: GenerateResponseBody = serde_json::from_str(&payload).unwrap();
        let imgs = resp.decode_images().unwrap();
        assert_eq!(imgs.len(), 2);
        let d = crate::viewgen::decode_stamp(&imgs[1]);
        assert!((d.azimuth_deg - -10.0).abs() <= 360.0 / 16.0);
    }
}
