//! Minimal W3C WebDriver client: just the commands a screenshot burst needs.

use std::time::{Duration, Instant};

use base64::Engine;
use image::RgbImage;
use serde_json::{json, Value};

use super::{decode_png, BrowserConfig, BrowserSession, CaptureError, ElementRef, SessionFactory};

const ELEMENT_KEY: &str = "element-6066-11e4-a52f-4f735466cecf";
const INITIAL_HEIGHT: u32 = 1080;

pub struct WebDriverSession {
    agent: ureq::Agent,
    base: String,
    session_id: String,
    page_load_timeout: f64,
    clock: Instant,
}

enum CmdError {
    /// The driver answered with a WebDriver error object.
    Driver(DriverError),
    Other(CaptureError),
}

#[derive(Debug)]
struct DriverError {
    status: u16,
    error: String,
    message: String,
}

impl WebDriverSession {
    pub fn start(cfg: &BrowserConfig) -> Result<Self, CaptureError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(cfg.page_load_timeout + 30.0)))
            .build()
            .into();
        let base = cfg.webdriver_endpoint.trim_end_matches('/').to_string();
        let mut session = WebDriverSession {
            agent,
            base,
            session_id: String::new(),
            page_load_timeout: cfg.page_load_timeout,
            clock: Instant::now(),
        };
        let value = session
            .command("POST", "/session", Some(capabilities(cfg)))
            .map_err(|e| match e {
                CmdError::Driver(d) => {
                    CaptureError::Session(format!("new session refused: {}: {}", d.error, d.message))
                }
                CmdError::Other(e) => e,
            })?;
        session.session_id = value
            .get("sessionId")
            .and_then(Value::as_str)
            .ok_or_else(|| CaptureError::Session("new-session response lacks sessionId".into()))?
            .to_string();
        let ms = (cfg.page_load_timeout * 1000.0).round() as u64;
        session.session_cmd("POST", "/timeouts", Some(json!({ "pageLoad": ms, "script": ms })))?;
        session.set_window_size(cfg.viewport_width, INITIAL_HEIGHT)?;
        Ok(session)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    fn command(&self, method: &str, path: &str, body: Option<Value>) -> Result<Value, CmdError> {
        let url = format!("{}{}", self.base, path);
        let transport = |e: ureq::Error| Err(CmdError::Other(CaptureError::Session(format!("{method} {url}: {e}"))));
        let mut resp = match (method, body) {
            ("GET", _) => self.agent.get(&url).call().or_else(transport)?,
            ("DELETE", _) => self.agent.delete(&url).call().or_else(transport)?,
            (_, body) => self
                .agent
                .post(&url)
                .send_json(body.unwrap_or_else(|| json!({})))
                .or_else(transport)?,
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CmdError::Other(CaptureError::Session(e.to_string())))?;
        let parsed: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
        let value = parsed.get("value").cloned().unwrap_or(Value::Null);
        if status >= 400 || value.get("error").is_some() {
            return Err(CmdError::Driver(DriverError {
                status,
                error: value
                    .get("error")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown error")
                    .to_string(),
                message: value
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or(text.as_str())
                    .to_string(),
            }));
        }
        Ok(value)
    }

    fn session_cmd_raw(&self, method: &str, path: &str, body: Option<Value>) -> Result<Value, CmdError> {
        self.command(method, &format!("/session/{}{}", self.session_id, path), body)
    }

    fn session_cmd(&self, method: &str, path: &str, body: Option<Value>) -> Result<Value, CaptureError> {
        self.session_cmd_raw(method, path, body).map_err(|e| match e {
            CmdError::Driver(d) => CaptureError::Session(format!("{path}: {} ({}): {}", d.error, d.status, d.message)),
            CmdError::Other(e) => e,
        })
    }

    fn decode_b64_png(value: &Value) -> Result<RgbImage, CaptureError> {
        let data = value
            .as_str()
            .ok_or_else(|| CaptureError::Session("screenshot response is not a string".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| CaptureError::Image(e.to_string()))?;
        decode_png(&bytes)
    }
}

fn capabilities(cfg: &BrowserConfig) -> Value {
    let name = cfg.name.to_ascii_lowercase();
    let mut always = serde_json::Map::new();
    if name.contains("firefox") {
        always.insert("browserName".into(), json!("firefox"));
        let args: Vec<&str> = if cfg.headless { vec!["-headless"] } else { vec![] };
        always.insert("moz:firefoxOptions".into(), json!({ "args": args }));
    } else if name.contains("chrom") || name.contains("edge") {
        if name.contains("edge") {
            always.insert("browserName".into(), json!("MicrosoftEdge"));
        } else {
            always.insert("browserName".into(), json!("chrome"));
        }
        let mut args = vec![format!("--window-size={},{}", cfg.viewport_width, INITIAL_HEIGHT)];
        if cfg.headless {
            args.push("--headless=new".into());
        }
        let key = if name.contains("edge") {
            "ms:edgeOptions"
        } else {
            "goog:chromeOptions"
        };
        always.insert(key.into(), json!({ "args": args }));
    }
    always.insert("xbiscope:headless".into(), json!(cfg.headless));
    json!({ "capabilities": { "alwaysMatch": always } })
}

impl BrowserSession for WebDriverSession {
    fn navigate(&mut self, url: &str) -> Result<(), CaptureError> {
        match self.session_cmd_raw("POST", "/url", Some(json!({ "url": url }))) {
            Ok(_) => Ok(()),
            Err(CmdError::Driver(d)) if d.error == "timeout" => Err(CaptureError::Timeout {
                url: url.to_string(),
                seconds: self.page_load_timeout,
            }),
            Err(CmdError::Driver(d)) => Err(CaptureError::Session(format!(
                "navigate {url}: {}: {}",
                d.error, d.message
            ))),
            Err(CmdError::Other(e)) => Err(e),
        }
    }

    fn execute(&mut self, script: &str, args: Vec<Value>) -> Result<Value, CaptureError> {
        self.session_cmd("POST", "/execute/sync", Some(json!({ "script": script, "args": args })))
    }

    fn find_element(&mut self, css: &str) -> Result<Option<ElementRef>, CaptureError> {
        match self.session_cmd_raw(
            "POST",
            "/element",
            Some(json!({ "using": "css selector", "value": css })),
        ) {
            Ok(v) => v
                .get(ELEMENT_KEY)
                .and_then(Value::as_str)
                .map(|id| Some(ElementRef(id.to_string())))
                .ok_or_else(|| CaptureError::Session("element response lacks a reference".into())),
            Err(CmdError::Driver(d)) if d.error == "no such element" => Ok(None),
            Err(CmdError::Driver(d)) => Err(CaptureError::Session(format!("find {css}: {}: {}", d.error, d.message))),
            Err(CmdError::Other(e)) => Err(e),
        }
    }

    fn click(&mut self, element: &ElementRef) -> Result<(), CaptureError> {
        self.session_cmd("POST", &format!("/element/{}/click", element.0), Some(json!({})))
            .map(|_| ())
    }

    fn full_page_screenshot(&mut self) -> Result<Option<RgbImage>, CaptureError> {
        match self.session_cmd_raw("GET", "/moz/screenshot/full", None) {
            Ok(v) => Self::decode_b64_png(&v).map(Some),
            Err(CmdError::Driver(d))
                if matches!(
                    d.error.as_str(),
                    "unknown command" | "unsupported operation" | "unknown method"
                ) || d.status == 404
                    || d.status == 405 =>
            {
                Ok(None)
            }
            Err(CmdError::Driver(d)) => Err(CaptureError::Session(format!(
                "full-page screenshot: {}: {}",
                d.error, d.message
            ))),
            Err(CmdError::Other(e)) => Err(e),
        }
    }

    fn viewport_screenshot(&mut self) -> Result<RgbImage, CaptureError> {
        let v = self.session_cmd("GET", "/screenshot", None)?;
        Self::decode_b64_png(&v)
    }

    fn set_window_size(&mut self, width: u32, height: u32) -> Result<(), CaptureError> {
        self.session_cmd(
            "POST",
            "/window/rect",
            Some(json!({ "width": width, "height": height })),
        )
        .map(|_| ())
    }

    fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }

    fn pause(&mut self, seconds: f64) {
        if seconds > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(seconds));
        }
    }
}

impl Drop for WebDriverSession {
    fn drop(&mut self) {
        if !self.session_id.is_empty() {
            let _ = self.command("DELETE", &format!("/session/{}", self.session_id), None);
        }
    }
}

/// Opens a fresh WebDriver session per capture task.
#[derive(Debug, Clone, Default)]
pub struct WebDriverFactory;

impl SessionFactory for WebDriverFactory {
    fn open(&self, cfg: &BrowserConfig) -> Result<Box<dyn BrowserSession + Send>, CaptureError> {
        Ok(Box::new(WebDriverSession::start(cfg)?))
    }
}
