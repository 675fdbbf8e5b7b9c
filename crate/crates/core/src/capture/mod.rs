//! Timed full-page screenshot bursts over a browser session.
//!
//! A burst is: navigate, wait for `document.readyState == "complete"`, settle,
//! dismiss configured pop-ups once, check the page text for blocked-access
//! keywords, then take `n` full-page frames spaced by at least `interval`.

mod session;
pub mod store;
mod webdriver;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use session::{BrowserSession, ElementRef, SessionFactory};
pub use webdriver::{WebDriverFactory, WebDriverSession};

/// Keywords that mark a page as an access-control or anti-bot response.
pub const DEFAULT_BLOCKED_KEYWORDS: [&str; 4] = [
    "403 forbidden",
    "you have been blocked",
    "access denied",
    "verify you are human",
];

const EXCERPT_CHARS: usize = 500;

/// Scripts sent through execute-script. Anything emulating a browser must
/// implement exactly these.
pub mod scripts {
    pub const READY_STATE: &str = "return document.readyState;";
    pub const PAGE_TEXT: &str = "return document.body ? document.body.innerText : '';";
    pub const SCROLL_HEIGHT: &str =
        "return Math.max(document.body.scrollHeight, document.documentElement.scrollHeight);";
    pub const REMOVE_SELECTOR: &str =
        "var n = 0; document.querySelectorAll(arguments[0]).forEach(function (e) { e.remove(); n++; }); return n;";
    pub const CLICK_TEXT: &str = "var kw = arguments[0].toLowerCase(); var hits = Array.prototype.filter.call(document.querySelectorAll('body *'), function (e) { return (e.innerText || '').toLowerCase().indexOf(kw) !== -1; }); var leaf = hits.filter(function (e) { return !hits.some(function (o) { return o !== e && e.contains(o); }); }); if (!leaf.length) { return false; } leaf[0].click(); return true;";
    pub const REMOVE_TEXT: &str = "var kw = arguments[0].toLowerCase(); var hits = Array.prototype.filter.call(document.querySelectorAll('body *'), function (e) { return (e.innerText || '').toLowerCase().indexOf(kw) !== -1; }); var leaf = hits.filter(function (e) { return !hits.some(function (o) { return o !== e && e.contains(o); }); }); if (!leaf.length) { return 0; } (leaf[0].closest('[role=dialog],[aria-modal],[data-popup]') || leaf[0]).remove(); return 1;";
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("webdriver session error: {0}")]
    Session(String),
    #[error("timed out loading {url} after {seconds}s")]
    Timeout { url: String, seconds: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid capture request: {0}")]
    Invalid(String),
    #[error("could not decode screenshot: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrowserConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_label: Option<String>,
    pub webdriver_endpoint: String,
    #[serde(default = "default_true")]
    pub headless: bool,
    #[serde(default = "default_viewport_width")]
    pub viewport_width: u32,
    /// Seconds.
    #[serde(default = "default_page_load_timeout")]
    pub page_load_timeout: f64,
}

fn default_true() -> bool {
    true
}
fn default_viewport_width() -> u32 {
    1920
}
fn default_page_load_timeout() -> f64 {
    30.0
}

impl BrowserConfig {
    pub fn new(name: impl Into<String>, webdriver_endpoint: impl Into<String>) -> Self {
        BrowserConfig {
            name: name.into(),
            version_label: None,
            webdriver_endpoint: webdriver_endpoint.into(),
            headless: true,
            viewport_width: default_viewport_width(),
            page_load_timeout: default_page_load_timeout(),
        }
    }

    /// Directory-safe identifier: `name` or `name-version`.
    pub fn label(&self) -> String {
        let raw = match &self.version_label {
            Some(v) => format!("{}-{}", self.name, v),
            None => self.name.clone(),
        };
        raw.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CaptureError> {
        if self.viewport_width == 0 {
            return Err(CaptureError::Config("viewport_width must be > 0".into()));
        }
        if self.page_load_timeout.is_nan() || self.page_load_timeout <= 0.0 {
            return Err(CaptureError::Config("page_load_timeout must be > 0".into()));
        }
        if self.name.trim().is_empty() {
            return Err(CaptureError::Config("browser name must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureOptions {
    pub frames: usize,
    /// Seconds between frames.
    pub interval: f64,
    /// Seconds to wait after the document is ready, before anything else.
    pub settle: f64,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        CaptureOptions {
            frames: 5,
            interval: 1.0,
            settle: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedVerdict {
    pub matched_keyword: String,
    pub page_excerpt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopupAction {
    Click,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopupMatch {
    Selector(String),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopupRule {
    #[serde(rename = "match")]
    pub matcher: PopupMatch,
    pub action: PopupAction,
}

impl PopupRule {
    pub fn click(selector: &str) -> Self {
        PopupRule {
            matcher: PopupMatch::Selector(selector.into()),
            action: PopupAction::Click,
        }
    }

    pub fn remove(selector: &str) -> Self {
        PopupRule {
            matcher: PopupMatch::Selector(selector.into()),
            action: PopupAction::Remove,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopupFilter {
    #[serde(default)]
    pub rules: Vec<PopupRule>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DismissalOutcome {
    pub fired: Vec<String>,
    pub warnings: Vec<String>,
}

/// One browser's burst of one URL.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenshotSet {
    pub url: String,
    pub browser: String,
    pub frames: Vec<RgbImage>,
    /// Monotonic seconds since navigation started.
    pub capture_times: Vec<f64>,
    pub popup_dismissals: Vec<String>,
    pub warnings: Vec<String>,
    pub blocked: Option<BlockedVerdict>,
}

impl ScreenshotSet {
    pub fn validate(&self) -> Result<(), CaptureError> {
        if self.frames.is_empty() || self.frames.len() != self.capture_times.len() {
            return Err(CaptureError::Invalid(format!(
                "{} frames but {} capture times",
                self.frames.len(),
                self.capture_times.len()
            )));
        }
        if self.capture_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CaptureError::Invalid("capture times not strictly increasing".into()));
        }
        let width = self.frames[0].width();
        if self.frames.iter().any(|f| f.width() != width) {
            return Err(CaptureError::Invalid("frames differ in width".into()));
        }
        Ok(())
    }
}

/// First configured keyword found case-insensitively in `page_text`.
pub fn detect_blocked_page<S: AsRef<str>>(page_text: &str, keywords: &[S]) -> Option<BlockedVerdict> {
    // lowercase char by char so match positions map back onto the original
    let mut lowered = String::with_capacity(page_text.len());
    let mut origin = Vec::with_capacity(page_text.len());
    let chars: Vec<char> = page_text.chars().collect();
    for (ci, c) in chars.iter().enumerate() {
        for l in c.to_lowercase() {
            let start = lowered.len();
            lowered.push(l);
            origin.extend(std::iter::repeat_n(ci, lowered.len() - start));
        }
    }
    for kw in keywords {
        let kw = kw.as_ref();
        let needle = kw.to_lowercase();
        if let Some(pos) = lowered.find(&needle) {
            let hit = origin.get(pos).copied().unwrap_or(chars.len());
            let start = hit.saturating_sub(EXCERPT_CHARS / 2);
            let excerpt: String = chars.iter().skip(start).take(EXCERPT_CHARS).collect();
            return Some(BlockedVerdict {
                matched_keyword: kw.to_string(),
                page_excerpt: excerpt,
            });
        }
    }
    None
}

/// Apply each matching rule at most once, in order. Failures are warnings.
pub fn dismiss_popups(session: &mut dyn BrowserSession, popups: &PopupFilter) -> DismissalOutcome {
    let mut out = DismissalOutcome::default();
    for rule in &popups.rules {
        let result = match (&rule.matcher, rule.action) {
            (PopupMatch::Selector(css), PopupAction::Click) => match session.find_element(css) {
                Ok(Some(el)) => session.click(&el).map(|_| Some(format!("clicked: {css}"))),
                Ok(None) => Ok(None),
                Err(e) => Err(e),
            },
            (PopupMatch::Selector(css), PopupAction::Remove) => session
                .execute(scripts::REMOVE_SELECTOR, vec![json!(css)])
                .map(|v| (as_count(&v) > 0).then(|| format!("removed: {css}"))),
            (PopupMatch::Text(kw), PopupAction::Click) => session
                .execute(scripts::CLICK_TEXT, vec![json!(kw)])
                .map(|v| (v == Value::Bool(true)).then(|| format!("clicked text: {kw}"))),
            (PopupMatch::Text(kw), PopupAction::Remove) => session
                .execute(scripts::REMOVE_TEXT, vec![json!(kw)])
                .map(|v| (as_count(&v) > 0).then(|| format!("removed text: {kw}"))),
        };
        match result {
            Ok(Some(desc)) => out.fired.push(desc),
            Ok(None) => {}
            Err(e) => {
                log::warn!("pop-up rule {:?} skipped: {e}", rule.matcher);
                out.warnings.push(format!("{:?}: {e}", rule.matcher));
            }
        }
    }
    out
}

fn as_count(v: &Value) -> u64 {
    v.as_u64()
        .or_else(|| v.as_f64().map(|f| f.max(0.0) as u64))
        .unwrap_or(0)
}

/// Capture a burst of `opts.frames` full-page screenshots of `url`.
pub fn capture_burst<S: AsRef<str>>(
    session: &mut dyn BrowserSession,
    url: &str,
    cfg: &BrowserConfig,
    opts: &CaptureOptions,
    popups: &PopupFilter,
    blocked_keywords: &[S],
) -> Result<ScreenshotSet, CaptureError> {
    cfg.validate()?;
    if opts.frames == 0 {
        return Err(CaptureError::Invalid("frame count must be >= 1".into()));
    }
    if opts.interval.is_nan() || opts.interval < 0.0 || opts.settle.is_nan() || opts.settle < 0.0 {
        return Err(CaptureError::Invalid("interval and settle must be >= 0".into()));
    }

    let started = session.now();
    session.navigate(url)?;
    wait_ready(session, url, cfg.page_load_timeout, started)?;
    session.pause(opts.settle);

    let dismissal = dismiss_popups(session, popups);
    let text = session
        .execute(scripts::PAGE_TEXT, vec![])?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let blocked = detect_blocked_page(&text, blocked_keywords);
    let frame_target = if blocked.is_some() { 1 } else { opts.frames };

    let mut full_page_supported = None;
    let mut frames = Vec::with_capacity(frame_target);
    let mut capture_times: Vec<f64> = Vec::with_capacity(frame_target);
    for i in 0..frame_target {
        if let Some(&last) = capture_times.last() {
            let due = last + opts.interval;
            let now = session.now() - started;
            if due > now {
                session.pause(due - now);
            }
        }
        let mut t = session.now() - started;
        if let Some(&last) = capture_times.last() {
            // keep times strictly increasing even on coarse clocks
            if t <= last {
                t = last + 1e-6;
            }
        }
        capture_times.push(t);
        frames.push(full_page(session, cfg, &mut full_page_supported)?);
        log::debug!("{url} [{}] frame {i} at {t:.3}s", cfg.label());
    }

    let set = ScreenshotSet {
        url: url.to_string(),
        browser: cfg.label(),
        frames,
        capture_times,
        popup_dismissals: dismissal.fired,
        warnings: dismissal.warnings,
        blocked,
    };
    set.validate()?;
    Ok(set)
}

fn wait_ready(session: &mut dyn BrowserSession, url: &str, timeout: f64, started: f64) -> Result<(), CaptureError> {
    loop {
        let state = session.execute(scripts::READY_STATE, vec![])?;
        if state.as_str() == Some("complete") {
            return Ok(());
        }
        if session.now() - started >= timeout {
            return Err(CaptureError::Timeout {
                url: url.to_string(),
                seconds: timeout,
            });
        }
        session.pause(0.1);
    }
}

fn full_page(
    session: &mut dyn BrowserSession,
    cfg: &BrowserConfig,
    supported: &mut Option<bool>,
) -> Result<RgbImage, CaptureError> {
    if *supported != Some(false) {
        match session.full_page_screenshot()? {
            Some(img) => {
                *supported = Some(true);
                return Ok(img);
            }
            None => *supported = Some(false),
        }
    }
    if !cfg.headless {
        return Err(CaptureError::Config(format!(
            "{} does not support full-page screenshots outside headless mode; set headless = true",
            cfg.name
        )));
    }
    let height = session
        .execute(scripts::SCROLL_HEIGHT, vec![])?
        .as_f64()
        .ok_or_else(|| CaptureError::Session("scroll height script returned a non-number".into()))?;
    session.set_window_size(cfg.viewport_width, height.max(1.0).ceil() as u32)?;
    session.viewport_screenshot()
}

pub(crate) fn decode_png(bytes: &[u8]) -> Result<RgbImage, CaptureError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|i| i.to_rgb8())
        .map_err(|e| CaptureError::Image(e.to_string()))
}
