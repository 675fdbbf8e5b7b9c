//! Run configuration file (TOML) and its digest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xbiscope_core::capture::store::RunMode;
use xbiscope_core::capture::{BrowserConfig, CaptureOptions, PopupFilter, DEFAULT_BLOCKED_KEYWORDS};
use xbiscope_core::detector::{DetectorConfig, RetryPolicy, Stage3Input, StageFlags, DEFAULT_API_KEY_ENV};
use xbiscope_core::ingest::{FilterPolicy, ReportSource};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    pub browsers: Vec<BrowserConfig>,
    #[serde(default)]
    pub capture: CaptureSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default = "default_keywords")]
    pub blocked_keywords: Vec<String>,
    #[serde(default)]
    pub popup_filter: PopupFilter,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub ingest: IngestSection,
}

fn default_mode() -> RunMode {
    RunMode::Xbi
}

fn default_keywords() -> Vec<String> {
    DEFAULT_BLOCKED_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureSection {
    pub frames: usize,
    pub interval: f64,
    pub settle: f64,
}

impl Default for CaptureSection {
    fn default() -> Self {
        let o = CaptureOptions::default();
        CaptureSection {
            frames: o.frames,
            interval: o.interval,
            settle: o.settle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub backend: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Requests per rolling minute; 0 disables the limit.
    pub rate_limit_per_minute: u32,
    pub ads: bool,
    pub dynamics: bool,
    pub stage3_input: Stage3Input,
    pub post_filter: bool,
    pub max_pixels: u64,
    pub request_timeout: f64,
    /// Multiplier on the 1s/4s/16s retry schedule.
    pub retry_scale: f64,
    pub mock_mapping: Option<PathBuf>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        DetectorSection {
            backend: BackendKind::Mock,
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "vlm".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            rate_limit_per_minute: 0,
            ads: d.flags.ads_enabled,
            dynamics: d.flags.dynamics_enabled,
            stage3_input: d.stage3_input,
            post_filter: d.post_filter,
            max_pixels: d.max_pixels,
            request_timeout: 120.0,
            retry_scale: 1.0,
            mock_mapping: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub output: PathBuf,
    pub prompts: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            output: PathBuf::from("runs"),
            prompts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub source: ReportSource,
    pub base_url: Option<String>,
    pub query: String,
    pub require_url: bool,
    pub exclude_mobile: bool,
    pub allowed_browsers: Vec<String>,
    pub min_browser_version: Option<u32>,
}

impl Default for IngestSection {
    fn default() -> Self {
        let p = FilterPolicy::desktop_firefox();
        IngestSection {
            source: ReportSource::Bugzilla,
            base_url: None,
            query: String::new(),
            require_url: p.require_url,
            exclude_mobile: p.exclude_mobile,
            allowed_browsers: p.allowed_browsers.into_iter().collect(),
            min_browser_version: p.min_browser_version,
        }
    }
}

impl IngestSection {
    pub fn policy(&self) -> FilterPolicy {
        FilterPolicy {
            require_url: self.require_url,
            exclude_mobile: self.exclude_mobile,
            allowed_browsers: self.allowed_browsers.iter().cloned().collect(),
            min_browser_version: self.min_browser_version,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut firefox = BrowserConfig::new("firefox", "http://127.0.0.1:4444");
        firefox.viewport_width = 1280;
        let mut chrome = BrowserConfig::new("chrome", "http://127.0.0.1:9515");
        chrome.viewport_width = 1280;
        RunConfig {
            mode: RunMode::Xbi,
            browsers: vec![firefox, chrome],
            capture: CaptureSection::default(),
            detector: DetectorSection::default(),
            blocked_keywords: default_keywords(),
            popup_filter: PopupFilter::default(),
            paths: PathsSection::default(),
            ingest: IngestSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| UsageError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read `path`, or fall back to the built-in defaults when `None`.
    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paths.output);
        if let Some(p) = cfg.paths.prompts.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.detector.mock_mapping.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.browsers.len() != 2 {
            return Err(UsageError(format!(
                "exactly two [[browsers]] entries are required, found {}",
                self.browsers.len()
            )));
        }
        for b in &self.browsers {
            b.validate().map_err(|e| UsageError(e.to_string()))?;
        }
        if self.browsers[0].label() == self.browsers[1].label() {
            return Err(UsageError(format!(
                "both browsers have the label {:?}; set distinct names or version_label values",
                self.browsers[0].label()
            )));
        }
        if self.capture.frames == 0 {
            return Err(UsageError("capture.frames must be >= 1".into()));
        }
        if self.capture.interval.is_nan()
            || self.capture.interval < 0.0
            || self.capture.settle.is_nan()
            || self.capture.settle < 0.0
        {
            return Err(UsageError("capture.interval and capture.settle must be >= 0".into()));
        }
        if self.detector.request_timeout.is_nan() || self.detector.request_timeout <= 0.0 {
            return Err(UsageError("detector.request_timeout must be > 0".into()));
        }
        if self.detector.max_pixels == 0 {
            return Err(UsageError("detector.max_pixels must be > 0".into()));
        }
        self.ingest.policy().validate().map_err(UsageError)?;
        Ok(())
    }

    pub fn browser_pair(&self) -> [BrowserConfig; 2] {
        [self.browsers[0].clone(), self.browsers[1].clone()]
    }

    pub fn labels(&self) -> [String; 2] {
        [self.browsers[0].label(), self.browsers[1].label()]
    }

    pub fn capture_options(&self) -> CaptureOptions {
        CaptureOptions {
            frames: self.capture.frames,
            interval: self.capture.interval,
            settle: self.capture.settle,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            flags: StageFlags {
                ads_enabled: self.detector.ads,
                dynamics_enabled: self.detector.dynamics,
            },
            stage3_input: self.detector.stage3_input,
            post_filter: self.detector.post_filter,
            max_pixels: self.detector.max_pixels,
            retry: RetryPolicy::scaled(self.detector.retry_scale),
        }
    }

    /// SHA-256 over the canonical JSON form (object keys sorted).
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = canonical_json(&value);
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r##"
[[browsers]]
name = "firefox"
webdriver_endpoint = "http://127.0.0.1:4444"

[[browsers]]
name = "chrome"
webdriver_endpoint = "http://127.0.0.1:9515"
headless = true

[capture]
frames = 3

[detector]
ads = false

[[popup_filter.rules]]
match = { selector = "#cookie-accept" }
action = "click"
"##;

    #[test]
    fn parses_sample() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.capture.frames, 3);
        assert!(!cfg.detector_config().flags.ads_enabled);
        assert_eq!(cfg.popup_filter.rules.len(), 1);
        assert_eq!(cfg.labels(), ["firefox".to_string(), "chrome".to_string()]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let one = "[[browsers]]\nname = \"firefox\"\nwebdriver_endpoint = \"x\"\n";
        assert!(RunConfig::parse(one).is_err());
        assert!(RunConfig::parse(&SAMPLE.replace("frames = 3", "frames = 0")).is_err());
        assert!(RunConfig::parse(&format!("{SAMPLE}\nunknown_key = 1\n")).is_err());
    }

    #[test]
    fn digest_tracks_every_field() {
        let base = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(base.digest(), RunConfig::parse(SAMPLE).unwrap().digest());
        let mut variants = Vec::new();
        let mut c = base.clone();
        c.capture.interval = 1.5;
        variants.push(c);
        let mut c = base.clone();
        c.detector.model = "other".into();
        variants.push(c);
        let mut c = base.clone();
        c.blocked_keywords.push("captcha".into());
        variants.push(c);
        let mut c = base.clone();
        c.browsers[1].headless = false;
        variants.push(c);
        let mut c = base.clone();
        c.detector.stage3_input = Stage3Input::FirstFrame;
        variants.push(c);
        for v in variants {
            assert_ne!(v.digest(), base.digest());
        }
    }
}
