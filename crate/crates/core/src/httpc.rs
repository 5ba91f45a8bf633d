//! Shared HTTP plumbing for the embedding and labeling clients.
//!
//! Both providers speak plain JSON-over-POST, so the transport layer reduces
//! to one retrying call. Errors are plain strings here; callers wrap them in
//! their own error types with request context attached.

use std::time::Duration;

use serde_json::Value;
use ureq::Agent;

/// Bearer token environment variable honored on every outgoing request.
pub const API_KEY_ENV: &str = "CIVITOPIC_API_KEY";

pub(crate) fn build_agent(timeout_secs: u64) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .build()
        .into()
}

/// POSTs `payload` to `url`, retrying transient failures. `retries` counts the
/// attempts after the first; backoff grows linearly at 100ms per attempt. A
/// non-2xx status is retried like a transport error since the stub providers
/// surface overload that way.
pub(crate) fn post_json(
    agent: &Agent,
    url: &str,
    payload: &Value,
    retries: u32,
) -> Result<Value, String> {
    let mut last_error = String::new();
    for attempt in 0..=retries {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(100 * attempt as u64));
        }
        let mut request = agent.post(url);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
        }
        match request.send_json(payload) {
            Ok(mut response) => match response.body_mut().read_json::<Value>() {
                Ok(value) => return Ok(value),
                Err(e) => last_error = format!("invalid json from {url}: {e}"),
            },
            Err(e) => last_error = format!("request to {url} failed: {e}"),
        }
    }
    Err(last_error)
}
