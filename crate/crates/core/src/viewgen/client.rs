use std::sync::{Condvar, Mutex};
use std::time::Duration;

use image::RgbImage;
use log::debug;

use super::protocol::{ErrorBody, GenerateRequestBody, GenerateResponseBody, HealthResponse, GENERATE_PATH, HEALTH_PATH};
use super::{check_output, GeneratorFailure, ViewGenerator, ViewRequest};

/// Environment variable that overrides any configured endpoint.
pub const ENDPOINT_ENV: &str = "XPOSE_GENERATOR_ENDPOINT";

/// Picks the generator endpoint: the environment wins over configuration.
pub fn resolve_endpoint(configured: Option<&str>) -> Option<String> {
    std::env::var(ENDPOINT_ENV)
        .ok()
        .filter(|s| !s.trim().is_empty())
        .or_else(|| configured.map(str::to_owned))
}

/// Counting gate bounding the number of concurrent requests.
#[derive(Debug)]
struct InFlight {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(max: usize) -> Self {
        Self { max: max.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// HTTP client for a `/v1` generator service. Sends one POST per request,
/// carrying every delta of the batch.
#[derive(Debug)]
pub struct RemoteGenerator {
    endpoint: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl RemoteGenerator {
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 2;
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_options(endpoint, Self::DEFAULT_TIMEOUT, Self::DEFAULT_MAX_IN_FLIGHT)
    }

    pub fn with_options(endpoint: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(timeout.min(Duration::from_secs(10)))
            .timeout(timeout)
            .build();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            agent,
            in_flight: InFlight::new(max_in_flight),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn health(&self) -> Result<HealthResponse, GeneratorFailure> {
        let _slot = self.in_flight.acquire();
        let resp = self.agent.get(&format!("{}{HEALTH_PATH}", self.endpoint)).call().map_err(map_error)?;
        resp.into_json().map_err(|e| GeneratorFailure::Decode(format!("health body: {e}")))
    }
}

fn map_error(err: ureq::Error) -> GeneratorFailure {
    match err {
        ureq::Error::Status(status, resp) => {
            let body = resp.into_string().unwrap_or_default();
            let message = serde_json::from_str::<ErrorBody>(&body).map(|b| b.error).unwrap_or(body);
            GeneratorFailure::HttpStatus { status, message }
        }
        ureq::Error::Transport(t) => {
            let msg = t.to_string();
            if msg.to_ascii_lowercase().contains("timed out") {
                GeneratorFailure::Timeout(msg)
            } else {
                GeneratorFailure::Transport(msg)
            }
        }
    }
}

impl ViewGenerator for RemoteGenerator {
    fn generate(&self, request: &ViewRequest) -> Result<Vec<RgbImage>, GeneratorFailure> {
        request.validate()?;
        let body = serde_json::to_string(&GenerateRequestBody::from_request(request)?)
            .map_err(|e| GeneratorFailure::InvalidRequest(e.to_string()))?;
        let _slot = self.in_flight.acquire();
        debug!("POST {}{GENERATE_PATH} with {} views", self.endpoint, request.deltas.len());
        let resp = self
            .agent
            .post(&format!("{}{GENERATE_PATH}", self.endpoint))
            .set("Content-Type", "application/json")
            .send_string(&body)
            .map_err(map_error)?;
        let text = resp.into_string().map_err(|e| GeneratorFailure::Decode(e.to_string()))?;
        let parsed: GenerateResponseBody =
            serde_json::from_str(&text).map_err(|e| GeneratorFailure::Decode(format!("response body: {e}")))?;
        if parsed.images_png_b64.len() != request.deltas.len() {
            return Err(GeneratorFailure::CountMismatch {
                expected: request.deltas.len(),
                got: parsed.images_png_b64.len(),
            });
        }
        let images = parsed.decode_images()?;
        check_output(request, &images)?;
        Ok(images)
    }
}
