//! Thin HTTP client for remote mode.

use serde::de::DeserializeOwned;
use ureq::Agent;

use crate::Failure;

pub struct Remote {
    base: String,
    agent: Agent,
}

impl Remote {
    pub fn new(base: &str) -> Self {
        let agent = Agent::config_builder().http_status_as_error(false).build().new_agent();
        Remote {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn get(&self, path: &str) -> Result<Vec<u8>, Failure> {
        self.get_query(path, &[])
    }

    pub fn get_query(&self, path: &str, query: &[(&str, &str)]) -> Result<Vec<u8>, Failure> {
        let mut request = self.agent.get(format!("{}{path}", self.base));
        for (k, v) in query {
            request = request.query(*k, *v);
        }
        finish(request.call())
    }

    pub fn post(&self, path: &str, headers: &[(&str, &str)], body: Vec<u8>) -> Result<Vec<u8>, Failure> {
        let mut request = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json");
        for (k, v) in headers {
            request = request.header(*k, *v);
        }
        finish(request.send(&body[..]))
    }

    pub fn json<T: DeserializeOwned>(body: Vec<u8>) -> Result<T, Failure> {
        serde_json::from_slice(&body).map_err(|e| Failure::domain(format!("unexpected response: {e}")))
    }
}

fn finish(response: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Vec<u8>, Failure> {
    let mut response = response.map_err(|e| Failure::domain(format!("request failed: {e}")))?;
    let status = response.status();
    let body = response
        .body_mut()
        .read_to_vec()
        .map_err(|e| Failure::domain(format!("reading response: {e}")))?;
    if status.is_success() {
        return Ok(body);
    }
    let message = serde_json::from_slice::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| v["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| String::from_utf8_lossy(&body).into_owned());
    Err(Failure::domain(format!("{status}: {message}")))
}
