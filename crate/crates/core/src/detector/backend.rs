use std::time::{Duration, Instant};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Which prompt a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ads,
    Dynamics,
    Xbi,
    BlockedCheck,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ads => "ads",
            Stage::Dynamics => "dynamics",
            Stage::Xbi => "xbi",
            Stage::BlockedCheck => "blocked_check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct VlmRequest {
    /// Not part of the wire payload; lets test backends route by stage.
    pub stage: Stage,
    pub prompt: String,
    pub images: Vec<RgbImage>,
    /// When the rate limiter released this request.
    pub issued_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited by backend")]
    RateLimited,
    #[error("backend rejected request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited)
    }
}

/// A vision-language model endpoint: prompt plus ordered images in, text out.
pub trait VlmBackend: Send + Sync {
    fn identity(&self) -> &str;
    fn complete(&self, request: &VlmRequest) -> Result<String, BackendError>;
    /// Whether one clarifying re-ask after an unparseable answer is worthwhile.
    fn allows_reask(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Wait before each retry; the number of entries is the retry cap.
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 4, 16].into_iter().map(Duration::from_secs).collect(),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { delays: vec![] }
    }

    /// Same schedule shape with every delay multiplied by `factor`.
    pub fn scaled(factor: f64) -> Self {
        RetryPolicy {
            delays: RetryPolicy::default()
                .delays
                .into_iter()
                .map(|d| d.mul_f64(factor.max(0.0)))
                .collect(),
        }
    }
}

/// Content hash of an image: SHA-256 over width, height and raw RGB bytes.
pub fn image_hash(img: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

/// Scale factor (<= 1) that brings `width * height` under `max_pixels`.
pub fn budget_scale(width: u32, height: u32, max_pixels: u64) -> f64 {
    let area = width as u64 * height as u64;
    if max_pixels == 0 || area <= max_pixels {
        1.0
    } else {
        (max_pixels as f64 / area as f64).sqrt()
    }
}

/// Downscale every image by one shared factor, chosen from the largest image.
pub fn fit_to_budget(images: &[RgbImage], max_pixels: u64) -> Vec<RgbImage> {
    let scale = images
        .iter()
        .map(|i| budget_scale(i.width(), i.height(), max_pixels))
        .fold(1.0, f64::min);
    if scale >= 1.0 {
        return images.to_vec();
    }
    images
        .iter()
        .map(|i| {
            let w = ((i.width() as f64 * scale).floor() as u32).max(1);
            let h = ((i.height() as f64 * scale).floor() as u32).max(1);
            image::imageops::resize(i, w, h, image::imageops::FilterType::Triangle)
        })
        .collect()
}
