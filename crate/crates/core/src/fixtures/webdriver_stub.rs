//! A W3C WebDriver look-alike backed by the emulated browser. It fetches
//! pages over HTTP (normally from [`super::server::serve_corpus`]) and
//! implements exactly the commands the capture client sends.

use std::collections::HashMap;
use std::io::Cursor;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use image::RgbImage;
use serde_json::{json, Value};

use super::browser::{EmulatedPage, PageHost, ScriptError};
use super::server::{spawn_server, Handler, HttpRequest, HttpResponse, ServerHandle};
use super::FixtureError;

const ELEMENT_KEY: &str = "element-6066-11e4-a52f-4f735466cecf";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullPageSupport {
    Always,
    /// Only sessions created headless get the full-page command.
    HeadlessOnly,
    Never,
}

#[derive(Debug, Clone)]
pub struct StubOptions {
    pub full_page: FullPageSupport,
    /// URLs containing any of these never finish loading.
    pub stall_on: Vec<String>,
}

impl Default for StubOptions {
    fn default() -> Self {
        StubOptions {
            full_page: FullPageSupport::Always,
            stall_on: Vec::new(),
        }
    }
}

struct HttpHost {
    agent: ureq::Agent,
}

impl HttpHost {
    fn new() -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        HttpHost { agent }
    }
}

impl PageHost for HttpHost {
    fn fetch_page(&self, url: &str) -> Result<(u16, String), String> {
        let mut resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, body))
    }

    fn fetch_image(&self, page_url: &str, src: &str) -> Option<RgbImage> {
        let base = &page_url[..page_url.rfind('/')? + 1];
        let mut resp = self.agent.get(&format!("{base}{src}")).call().ok()?;
        if resp.status().as_u16() != 200 {
            return None;
        }
        let bytes = resp.body_mut().read_to_vec().ok()?;
        image::load_from_memory(&bytes).ok().map(|i| i.to_rgb8())
    }
}

struct StubSession {
    headless: bool,
    window: (u32, u32),
    page: Option<EmulatedPage>,
    loaded_at: Instant,
}

struct Stub {
    opts: StubOptions,
    host: HttpHost,
    next_id: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<Mutex<StubSession>>>>,
}

fn error(status: u16, code: &str, message: &str) -> HttpResponse {
    HttpResponse::json(
        status,
        &json!({ "value": { "error": code, "message": message, "stacktrace": "" } }),
    )
}

fn ok(value: Value) -> HttpResponse {
    HttpResponse::json(200, &json!({ "value": value }))
}

fn png_b64(img: &RgbImage) -> String {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("png encode to memory");
    base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
}

fn requested_headless(caps: &Value) -> bool {
    let always = caps
        .pointer("/capabilities/alwaysMatch")
        .cloned()
        .unwrap_or(Value::Null);
    if let Some(h) = always.get("xbiscope:headless").and_then(Value::as_bool) {
        return h;
    }
    ["moz:firefoxOptions", "goog:chromeOptions", "ms:edgeOptions"]
        .iter()
        .any(|k| {
            always
                .pointer(&format!("/{k}/args"))
                .and_then(Value::as_array)
                .is_some_and(|args| args.iter().filter_map(Value::as_str).any(|a| a.contains("headless")))
        })
}

impl Stub {
    fn session(&self, id: &str) -> Option<Arc<Mutex<StubSession>>> {
        self.sessions.lock().expect("sessions poisoned").get(id).cloned()
    }

    fn handle(&self, rq: HttpRequest) -> HttpResponse {
        let body: Value = serde_json::from_slice(&rq.body).unwrap_or(Value::Null);
        let parts: Vec<&str> = rq.path.trim_matches('/').split('/').collect();
        match (rq.method.as_str(), parts.as_slice()) {
            ("GET", ["status"]) => ok(json!({ "ready": true, "message": "fixture webdriver stub" })),
            ("POST", ["session"]) => {
                let id = format!("stub-{}", self.next_id.fetch_add(1, Ordering::SeqCst));
                let headless = requested_headless(&body);
                let session = StubSession {
                    headless,
                    window: (1280, 1080),
                    page: None,
                    loaded_at: Instant::now(),
                };
                self.sessions
                    .lock()
                    .expect("sessions poisoned")
                    .insert(id.clone(), Arc::new(Mutex::new(session)));
                ok(
                    json!({ "sessionId": id, "capabilities": { "browserName": "fixture", "xbiscope:headless": headless } }),
                )
            }
            ("DELETE", ["session", id]) => {
                self.sessions.lock().expect("sessions poisoned").remove(*id);
                ok(Value::Null)
            }
            (method, ["session", id, rest @ ..]) => match self.session(id) {
                Some(s) => {
                    let mut s = s.lock().expect("session poisoned");
                    self.session_command(&mut s, method, rest, &body)
                }
                None => error(404, "invalid session id", "no such session"),
            },
            _ => error(404, "unknown command", &format!("{} {}", rq.method, rq.path)),
        }
    }

    fn session_command(&self, s: &mut StubSession, method: &str, rest: &[&str], body: &Value) -> HttpResponse {
        let elapsed_ms = s.loaded_at.elapsed().as_millis() as u64;
        match (method, rest) {
            ("POST", ["timeouts"]) => ok(Value::Null),
            ("POST", ["window", "rect"]) => {
                let w = body.get("width").and_then(Value::as_u64).unwrap_or(s.window.0 as u64);
                let h = body.get("height").and_then(Value::as_u64).unwrap_or(s.window.1 as u64);
                s.window = (w.max(1) as u32, h.max(1) as u32);
                ok(json!({ "x": 0, "y": 0, "width": s.window.0, "height": s.window.1 }))
            }
            ("POST", ["url"]) => {
                let Some(url) = body.get("url").and_then(Value::as_str) else {
                    return error(400, "invalid argument", "missing url");
                };
                if self.opts.stall_on.iter().any(|f| url.contains(f.as_str())) {
                    return error(500, "timeout", &format!("page load timed out: {url}"));
                }
                match EmulatedPage::load(&self.host, url) {
                    Ok(page) => {
                        s.page = Some(page);
                        s.loaded_at = Instant::now();
                        ok(Value::Null)
                    }
                    Err(e) => error(500, "unknown error", &format!("navigation failed: {e}")),
                }
            }
            ("POST", ["execute", "sync"]) => {
                let script = body.get("script").and_then(Value::as_str).unwrap_or_default();
                let args = body.get("args").and_then(Value::as_array).cloned().unwrap_or_default();
                let width = s.window.0;
                let Some(page) = s.page.as_mut() else {
                    return error(500, "javascript error", "no document");
                };
                match page.execute(script, &args, width, elapsed_ms, true) {
                    Ok(v) => ok(v),
                    Err(ScriptError::Unsupported) => error(500, "javascript error", "script not supported by the stub"),
                    Err(ScriptError::BadArgs(m)) => error(400, "invalid argument", &m),
                }
            }
            ("POST", ["element"]) => {
                let css = body.get("value").and_then(Value::as_str).unwrap_or_default();
                let Some(page) = s.page.as_ref() else {
                    return error(404, "no such element", "no document");
                };
                match page.find(css) {
                    Ok(Some(uid)) => ok(json!({ ELEMENT_KEY: uid.to_string() })),
                    Ok(None) => error(404, "no such element", css),
                    Err(e) => error(400, "invalid selector", &e),
                }
            }
            ("POST", ["element", eid, "click"]) => {
                let uid = eid.parse::<usize>().ok();
                let clicked = match (s.page.as_mut(), uid) {
                    (Some(page), Some(uid)) => page.click(uid),
                    _ => false,
                };
                if clicked {
                    ok(Value::Null)
                } else {
                    error(404, "stale element reference", eid)
                }
            }
            ("GET", ["screenshot"]) => {
                let (w, h) = s.window;
                match s.page.as_mut() {
                    Some(page) => ok(json!(png_b64(&page.screenshot(&self.host, w, Some(h), elapsed_ms)))),
                    None => ok(json!(png_b64(&RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]))))),
                }
            }
            ("GET", ["moz", "screenshot", "full"]) => {
                let supported = match self.opts.full_page {
                    FullPageSupport::Always => true,
                    FullPageSupport::HeadlessOnly => s.headless,
                    FullPageSupport::Never => false,
                };
                if !supported {
                    return error(404, "unknown command", "full-page screenshots are not available");
                }
                let w = s.window.0;
                match s.page.as_mut() {
                    Some(page) => ok(json!(png_b64(&page.screenshot(&self.host, w, None, elapsed_ms)))),
                    None => error(500, "unknown error", "no document"),
                }
            }
            _ => error(404, "unknown command", &format!("{method} {}", rest.join("/"))),
        }
    }
}

/// Start the stub on `bind` (e.g. `127.0.0.1:0`).
pub fn spawn_webdriver_stub(bind: &str, opts: StubOptions) -> Result<ServerHandle, FixtureError> {
    let stub = Arc::new(Stub {
        opts,
        host: HttpHost::new(),
        next_id: AtomicU64::new(1),
        sessions: Mutex::new(HashMap::new()),
    });
    let handler: Arc<Handler> = Arc::new(move |rq| stub.handle(rq));
    spawn_server(bind, 8, handler)
}
