//! JSON-over-HTTPS backend: POST `{model, prompt, images: [base64 PNG]}`,
//! read the completion text from the response body.

use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use serde_json::{json, Value};

use super::backend::{BackendError, VlmBackend, VlmRequest};

/// Default environment variable holding the API key.
pub const DEFAULT_API_KEY_ENV: &str = "XBISCOPE_API_KEY";

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        }
    }

    /// Read the key from `env_var`; absent or empty means no auth header.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>, env_var: &str, timeout: Duration) -> Self {
        let key = std::env::var(env_var).ok().filter(|k| !k.is_empty());
        Self::new(endpoint, model, key, timeout)
    }

    pub fn payload(&self, request: &VlmRequest) -> Result<Value, BackendError> {
        let images = request
            .images
            .iter()
            .map(encode_png_b64)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(json!({
            "model": self.model,
            "prompt": request.prompt,
            "images": images,
        }))
    }
}

fn encode_png_b64(img: &RgbImage) -> Result<String, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| BackendError::Malformed(format!("png encode: {e}")))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

/// Completion text from common response shapes.
fn completion_text(body: &Value) -> Option<String> {
    for key in ["completion", "text", "output"] {
        if let Some(s) = body.get(key).and_then(Value::as_str) {
            return Some(s.to_string());
        }
    }
    body.pointer("/choices/0/message/content")
        .or_else(|| body.pointer("/choices/0/text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl VlmBackend for HttpBackend {
    fn identity(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &VlmRequest) -> Result<String, BackendError> {
        let payload = self.payload(request)?;
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(payload)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            429 => return Err(BackendError::RateLimited),
            500.. => return Err(BackendError::Transport(format!("HTTP {status}"))),
            400.. => {
                return Err(BackendError::Rejected {
                    status,
                    message: text.chars().take(300).collect(),
                })
            }
            _ => {}
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        completion_text(&body).ok_or_else(|| BackendError::Malformed("no completion text in response".into()))
    }

    fn allows_reask(&self) -> bool {
        true
    }
}
