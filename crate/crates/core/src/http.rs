//! Minimal blocking JSON-over-HTTP client shared by the remote bindings and
//! API execution.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

impl HttpReply {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("transport error: {0}")]
    Transport(String),
}

/// POSTs `body` as JSON. Non-2xx statuses are returned, not raised.
pub fn post_json(
    url: &str,
    body: &impl Serialize,
    bearer_token: Option<&str>,
    timeout: Duration,
) -> Result<HttpReply, HttpError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut request = agent.post(url);
    if let Some(token) = bearer_token {
        request = request.header("Authorization", format!("Bearer {token}"));
    }
    let map_err = |e: ureq::Error| match e {
        ureq::Error::Timeout(_) => HttpError::Timeout(timeout.as_millis() as u64),
        other => HttpError::Transport(other.to_string()),
    };
    let mut response = request.send_json(body).map_err(map_err)?;
    let status = response.status().as_u16();
    let body = response.body_mut().read_to_string().map_err(map_err)?;
    Ok(HttpReply { status, body })
}
