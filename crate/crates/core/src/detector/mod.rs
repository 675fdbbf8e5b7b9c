//! Three-stage VLM analysis of a site captured in two browsers:
//! advertisements, then dynamic elements, then inconsistencies with an impact
//! score, followed by a best-effort blocked-page filter.

mod backend;
mod http;
mod impact;
mod mock;
mod parse;
pub mod prompts;
mod ratelimit;

use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::ScreenshotSet;
use crate::composite::{self, OverlayImage};

pub use backend::{budget_scale, fit_to_budget, image_hash, BackendError, RetryPolicy, Stage, VlmBackend, VlmRequest};
pub use http::{HttpBackend, DEFAULT_API_KEY_ENV};
pub use impact::{ImpactScore, UnknownImpact};
pub use mock::{CannedCompletions, MockBackend, MockCall, MockMapping};
pub use parse::{
    involves_popup, parse_ad_finding, parse_dyn_finding, parse_impact, parse_xbi, parse_yes_no, ParseError,
    POPUP_KEYWORDS,
};
pub use prompts::PromptSet;
pub use ratelimit::RateLimiter;

const REASK_CLARIFIER: &str =
    "\n\nAnswer with exactly one impact label: no-XBI, minor-visual, significant-visual or blocked-unsupported.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdFinding {
    pub present: bool,
    pub regions: Vec<String>,
    pub raw_response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynKind {
    Slider,
    Carousel,
    ProgressBar,
    Video,
    DynamicChart,
    PersonalizedRecommendation,
    LocationRecommendation,
    RealTimeContent,
    Other,
}

impl DynKind {
    pub fn name(self) -> &'static str {
        match self {
            DynKind::Slider => "slider",
            DynKind::Carousel => "carousel",
            DynKind::ProgressBar => "progress bar",
            DynKind::Video => "video",
            DynKind::DynamicChart => "dynamic chart",
            DynKind::PersonalizedRecommendation => "personalized recommendation",
            DynKind::LocationRecommendation => "location recommendation",
            DynKind::RealTimeContent => "real-time content",
            DynKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynElement {
    pub kind: DynKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynFinding {
    pub present: bool,
    pub elements: Vec<DynElement>,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XbiFinding {
    pub description: String,
    pub involves_popup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostFilter {
    Kept,
    DroppedBlocked,
}

/// Verdict that the blocked-page filter overrode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredVerdict {
    pub impact: ImpactScore,
    pub findings: Vec<XbiFinding>,
    pub check_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XbiResult {
    pub impact: ImpactScore,
    pub findings: Vec<XbiFinding>,
    pub raw_response: String,
    pub post_filter: PostFilter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<FilteredVerdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageFlags {
    pub ads_enabled: bool,
    pub dynamics_enabled: bool,
}

impl Default for StageFlags {
    fn default() -> Self {
        StageFlags {
            ads_enabled: true,
            dynamics_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage3Input {
    #[default]
    Overlay,
    FirstFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAnalysis {
    pub site_id: String,
    /// Browser labels, slot A then B.
    pub browsers: [String; 2],
    /// Absent when the ad stage was disabled.
    #[serde(default)]
    pub ads: Option<[AdFinding; 2]>,
    #[serde(default)]
    pub dynamics: Option<[DynFinding; 2]>,
    pub xbi: XbiResult,
    pub stage_flags: StageFlags,
    pub change_fraction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub flags: StageFlags,
    pub stage3_input: Stage3Input,
    pub post_filter: bool,
    /// Images above this many pixels are downscaled before upload.
    pub max_pixels: u64,
    pub retry: RetryPolicy,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            flags: StageFlags::default(),
            stage3_input: Stage3Input::Overlay,
            post_filter: true,
            max_pixels: 4_000_000,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("{stage} stage failed: {source}")]
    Backend {
        stage: &'static str,
        #[source]
        source: BackendError,
    },
    #[error("{stage} stage: unparseable completion ({error}): {raw_response:?}")]
    Parse {
        stage: &'static str,
        error: ParseError,
        raw_response: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Where a site analysis stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteFailure {
    pub stage: String,
    pub message: String,
}

/// Analysis plus the artifacts worth persisting next to it.
#[derive(Debug, Clone)]
pub struct SiteOutcome {
    pub analysis: SiteAnalysis,
    pub overlays: [OverlayImage; 2],
    /// Rendered prompts by stage label (`ads[a]`, `xbi`, ...), in call order.
    pub prompts: Vec<(String, String)>,
}

/// Backend plus everything needed to drive it: prompts, limits, retries.
#[derive(Clone)]
pub struct Detector {
    backend: Arc<dyn VlmBackend>,
    limiter: Option<Arc<RateLimiter>>,
    prompts: PromptSet,
    config: DetectorConfig,
}

impl Detector {
    pub fn new(backend: Arc<dyn VlmBackend>, prompts: PromptSet, config: DetectorConfig) -> Self {
        Detector {
            backend,
            limiter: None,
            prompts,
            config,
        }
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    /// One completion with rate limiting and retries on transient errors.
    fn call(&self, stage: Stage, prompt: String, images: Vec<RgbImage>) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            let issued_at = self
                .limiter
                .as_ref()
                .map(|l| l.acquire())
                .unwrap_or_else(std::time::Instant::now);
            let request = VlmRequest {
                stage,
                prompt: prompt.clone(),
                images: images.clone(),
                issued_at,
            };
            match self.backend.complete(&request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.config.retry.delays.len() => {
                    let delay = self.config.retry.delays[attempt];
                    log::warn!("{} call failed ({e}); retry {} in {delay:?}", stage.name(), attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn single_stage<T>(
        &self,
        stage: Stage,
        prompt: String,
        image: &RgbImage,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, DetectError> {
        if image.width() == 0 || image.height() == 0 {
            return Err(DetectError::Invalid("empty image".into()));
        }
        let images = fit_to_budget(std::slice::from_ref(image), self.config.max_pixels);
        let raw = self
            .call(stage, prompt, images)
            .map_err(|source| DetectError::Backend {
                stage: stage.name(),
                source,
            })?;
        parse(&raw).map_err(|error| DetectError::Parse {
            stage: stage.name(),
            error,
            raw_response: raw,
        })
    }

    pub fn detect_ads(&self, image: &OverlayImage) -> Result<AdFinding, DetectError> {
        self.single_stage(Stage::Ads, self.prompts.render_ads(), &image.pixels, parse_ad_finding)
    }

    pub fn detect_dynamic(&self, image: &OverlayImage) -> Result<DynFinding, DetectError> {
        self.single_stage(
            Stage::Dynamics,
            self.prompts.render_dynamics(),
            &image.pixels,
            parse_dyn_finding,
        )
    }

    /// Stage 3 over an image pair already cropped to one size. `ads` and
    /// `dynamics` are `None` when those stages did not run.
    pub fn detect_xbi(
        &self,
        pair: [&RgbImage; 2],
        browsers: &[String; 2],
        ads: Option<&[AdFinding; 2]>,
        dynamics: Option<&[DynFinding; 2]>,
    ) -> Result<(XbiResult, String), DetectError> {
        if pair[0].dimensions() != pair[1].dimensions() {
            return Err(DetectError::Invalid(format!(
                "stage-3 images differ in size: {:?} vs {:?}",
                pair[0].dimensions(),
                pair[1].dimensions()
            )));
        }
        let prompt = self.prompts.render_xbi(browsers, ads, dynamics);
        let images = fit_to_budget(&[pair[0].clone(), pair[1].clone()], self.config.max_pixels);
        let backend_err = |source| DetectError::Backend { stage: "xbi", source };
        let raw = self
            .call(Stage::Xbi, prompt.clone(), images.clone())
            .map_err(backend_err)?;
        let (raw, parsed) = match parse_xbi(&raw) {
            Ok(p) => (raw, p),
            Err(first) if self.backend.allows_reask() => {
                log::warn!("stage-3 answer unparseable ({first}); asking once more");
                let again = self
                    .call(Stage::Xbi, format!("{prompt}{REASK_CLARIFIER}"), images)
                    .map_err(backend_err)?;
                match parse_xbi(&again) {
                    Ok(p) => (again, p),
                    Err(error) => {
                        return Err(DetectError::Parse {
                            stage: "xbi",
                            error,
                            raw_response: again,
                        })
                    }
                }
            }
            Err(error) => {
                return Err(DetectError::Parse {
                    stage: "xbi",
                    error,
                    raw_response: raw,
                })
            }
        };
        let (impact, findings) = parsed;
        Ok((
            XbiResult {
                impact,
                findings,
                raw_response: raw,
                post_filter: PostFilter::Kept,
                original: None,
                warnings: Vec::new(),
            },
            prompt,
        ))
    }

    /// Ask the backend whether a reported inconsistency is really a blocked or
    /// unloaded page. Only ever moves a result to no-XBI; failures keep the
    /// result and add a warning.
    pub fn post_filter_blocked(&self, mut result: XbiResult, pair: [&RgbImage; 2]) -> (XbiResult, Option<String>) {
        if result.impact == ImpactScore::NoXbi || result.post_filter != PostFilter::Kept {
            return (result, None);
        }
        let descriptions: Vec<String> = result.findings.iter().map(|f| f.description.clone()).collect();
        let prompt = self.prompts.render_blocked_check(&descriptions);
        let images = fit_to_budget(&[pair[0].clone(), pair[1].clone()], self.config.max_pixels);
        let answer = match self.call(Stage::BlockedCheck, prompt.clone(), images) {
            Ok(a) => a,
            Err(e) => {
                result.warnings.push(format!("blocked-page filter skipped: {e}"));
                return (result, Some(prompt));
            }
        };
        match parse_yes_no(&answer) {
            Ok(true) => {
                let original = FilteredVerdict {
                    impact: result.impact,
                    findings: std::mem::take(&mut result.findings),
                    check_response: answer,
                };
                result.impact = ImpactScore::NoXbi;
                result.post_filter = PostFilter::DroppedBlocked;
                result.original = Some(original);
            }
            Ok(false) => {}
            Err(e) => result
                .warnings
                .push(format!("blocked-page filter answer unparseable ({e}): {answer:?}")),
        }
        (result, Some(prompt))
    }

    /// Full pipeline for one site: overlays, crop, enabled stages in order,
    /// then the post filter.
    pub fn analyze_site(&self, site_id: &str, sets: [&ScreenshotSet; 2]) -> Result<SiteOutcome, SiteFailure> {
        let fail = |stage: &str, message: String| SiteFailure {
            stage: stage.to_string(),
            message,
        };
        for set in sets {
            if set.blocked.is_some() {
                return Err(fail("capture", format!("{} was blocked before capture", set.browser)));
            }
        }
        let overlays = [
            composite::overlay(sets[0]).map_err(|e| fail("composite", e.to_string()))?,
            composite::overlay(sets[1]).map_err(|e| fail("composite", e.to_string()))?,
        ];
        self.analyze_overlays(
            site_id,
            [sets[0].browser.clone(), sets[1].browser.clone()],
            overlays,
            || [sets[0].frames[0].clone(), sets[1].frames[0].clone()],
        )
    }

    /// Pipeline from precomputed overlays. `first_frames` is only consulted
    /// when stage 3 is configured to look at single frames.
    pub fn analyze_overlays(
        &self,
        site_id: &str,
        browsers: [String; 2],
        overlays: [OverlayImage; 2],
        first_frames: impl FnOnce() -> [RgbImage; 2],
    ) -> Result<SiteOutcome, SiteFailure> {
        let fail = |stage: &str, e: DetectError| SiteFailure {
            stage: stage.to_string(),
            message: e.to_string(),
        };
        let flags = self.config.flags;
        let mut prompts = Vec::new();

        let ads = if flags.ads_enabled {
            let mut pair = Vec::with_capacity(2);
            for (o, slot) in overlays.iter().zip(["a", "b"]) {
                prompts.push((format!("ads[{slot}]"), self.prompts.render_ads()));
                pair.push(self.detect_ads(o).map_err(|e| fail("ads", e))?);
            }
            Some(<[AdFinding; 2]>::try_from(pair).expect("two findings"))
        } else {
            None
        };
        let dynamics = if flags.dynamics_enabled {
            let mut pair = Vec::with_capacity(2);
            for (o, slot) in overlays.iter().zip(["a", "b"]) {
                prompts.push((format!("dynamics[{slot}]"), self.prompts.render_dynamics()));
                pair.push(self.detect_dynamic(o).map_err(|e| fail("dynamics", e))?);
            }
            Some(<[DynFinding; 2]>::try_from(pair).expect("two findings"))
        } else {
            None
        };

        let [a, b] = match self.config.stage3_input {
            Stage3Input::Overlay => [overlays[0].pixels.clone(), overlays[1].pixels.clone()],
            Stage3Input::FirstFrame => first_frames(),
        };
        let (a, b) = composite::crop_to_common(&a, &b).map_err(|e| SiteFailure {
            stage: "composite".into(),
            message: e.to_string(),
        })?;
        let (xbi, xbi_prompt) = self
            .detect_xbi([&a, &b], &browsers, ads.as_ref(), dynamics.as_ref())
            .map_err(|e| fail("xbi", e))?;
        prompts.push(("xbi".into(), xbi_prompt));
        let xbi = if self.config.post_filter {
            let (xbi, check_prompt) = self.post_filter_blocked(xbi, [&a, &b]);
            if let Some(p) = check_prompt {
                prompts.push(("blocked_check".into(), p));
            }
            xbi
        } else {
            xbi
        };

        let change_fraction = [overlays[0].change_fraction, overlays[1].change_fraction];
        Ok(SiteOutcome {
            analysis: SiteAnalysis {
                site_id: site_id.to_string(),
                browsers,
                ads,
                dynamics,
                xbi,
                stage_flags: flags,
                change_fraction,
            },
            overlays,
            prompts,
        })
    }
}
