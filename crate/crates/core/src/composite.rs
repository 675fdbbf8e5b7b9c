//! Burst compositing: blend a timed burst into one overlay so that content
//! which moved between frames shows up ghosted, and crop image pairs to a
//! common size before they are compared.

use image::{GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::ScreenshotSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompositeError {
    #[error("cannot composite an empty frame list")]
    EmptyBurst,
    #[error("screenshot set for {0} is blocked and cannot be composited")]
    Blocked(String),
    #[error("crop would produce a zero-area image ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("diff mask needs at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {index} is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
}

/// Blend of a screenshot burst.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayImage {
    pub pixels: RgbImage,
    pub source_frame_count: usize,
    /// Number of pixels that differ between at least two cropped source frames.
    pub changed_pixels: u64,
    /// `changed_pixels / (width * height)`.
    pub change_fraction: f64,
}

/// Sidecar persisted next to `overlay.png`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySidecar {
    pub width: u32,
    pub height: u32,
    pub source_frame_count: usize,
    pub changed_pixels: u64,
    pub change_fraction: f64,
}

impl OverlayImage {
    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn sidecar(&self) -> OverlaySidecar {
        OverlaySidecar {
            width: self.width(),
            height: self.height(),
            source_frame_count: self.source_frame_count,
            changed_pixels: self.changed_pixels,
            change_fraction: self.change_fraction,
        }
    }

    /// Wrap an already-blended image (e.g. one loaded from disk).
    pub fn from_pixels(pixels: RgbImage, sidecar: Option<&OverlaySidecar>) -> Self {
        let (count, changed, fraction) = sidecar
            .map(|s| (s.source_frame_count, s.changed_pixels, s.change_fraction))
            .unwrap_or((1, 0, 0.0));
        OverlayImage {
            pixels,
            source_frame_count: count,
            changed_pixels: changed,
            change_fraction: fraction,
        }
    }
}

/// Overlay of a captured burst. Blocked sets are rejected.
pub fn overlay(set: &ScreenshotSet) -> Result<OverlayImage, CompositeError> {
    if set.blocked.is_some() {
        return Err(CompositeError::Blocked(set.url.clone()));
    }
    overlay_frames(&set.frames)
}

/// Crop all frames top-left anchored to the smallest common size, then take
/// the per-channel mean with half-up rounding.
pub fn overlay_frames(frames: &[RgbImage]) -> Result<OverlayImage, CompositeError> {
    let (width, height) = common_size(frames)?;
    let n = frames.len() as u32;
    let mut sums = vec![0u32; (width as usize) * (height as usize) * 3];
    for frame in frames {
        for y in 0..height {
            let row_start = (y as usize) * (width as usize) * 3;
            for x in 0..width {
                let px = frame.get_pixel(x, y).0;
                let base = row_start + (x as usize) * 3;
                sums[base] += px[0] as u32;
                sums[base + 1] += px[1] as u32;
                sums[base + 2] += px[2] as u32;
            }
        }
    }
    // round(sum / n) with ties going up, in integers
    let raw: Vec<u8> = sums.iter().map(|&s| ((2 * s + n) / (2 * n)) as u8).collect();
    let pixels = RgbImage::from_raw(width, height, raw).expect("buffer sized to dimensions");

    let changed_pixels = if frames.len() < 2 {
        0
    } else {
        count_changed(frames, width, height)
    };
    let area = (width as u64) * (height as u64);
    Ok(OverlayImage {
        pixels,
        source_frame_count: frames.len(),
        changed_pixels,
        change_fraction: changed_pixels as f64 / area as f64,
    })
}

/// Top-left crops of both images to `(min(w), min(h))`.
pub fn crop_to_common(a: &RgbImage, b: &RgbImage) -> Result<(RgbImage, RgbImage), CompositeError> {
    let width = a.width().min(b.width());
    let height = a.height().min(b.height());
    if width == 0 || height == 0 {
        return Err(CompositeError::ZeroArea { width, height });
    }
    Ok((crop(a, width, height), crop(b, width, height)))
}

/// Binary mask (255 = changed) of pixels where any two frames differ in any
/// channel. Frames must already share one size.
pub fn diff_mask(frames: &[RgbImage]) -> Result<GrayImage, CompositeError> {
    if frames.len() < 2 {
        return Err(CompositeError::TooFewFrames(frames.len()));
    }
    let expected = frames[0].dimensions();
    for (index, f) in frames.iter().enumerate() {
        if f.dimensions() != expected {
            return Err(CompositeError::DimensionMismatch {
                index,
                expected,
                got: f.dimensions(),
            });
        }
    }
    let (width, height) = expected;
    let mut mask = GrayImage::new(width, height);
    for (x, y, out) in mask.enumerate_pixels_mut() {
        let first = frames[0].get_pixel(x, y);
        if frames[1..].iter().any(|f| f.get_pixel(x, y) != first) {
            *out = Luma([255]);
        }
    }
    Ok(mask)
}

/// Number of set pixels in a mask produced by [`diff_mask`].
pub fn mask_population(mask: &GrayImage) -> u64 {
    mask.pixels().filter(|p| p.0[0] != 0).count() as u64
}

pub(crate) fn crop(img: &RgbImage, width: u32, height: u32) -> RgbImage {
    if img.dimensions() == (width, height) {
        return img.clone();
    }
    image::imageops::crop_imm(img, 0, 0, width, height).to_image()
}

fn common_size(frames: &[RgbImage]) -> Result<(u32, u32), CompositeError> {
    let first = frames.first().ok_or(CompositeError::EmptyBurst)?;
    let (width, height) = frames
        .iter()
        .fold(first.dimensions(), |(w, h), f| (w.min(f.width()), h.min(f.height())));
    if width == 0 || height == 0 {
        return Err(CompositeError::ZeroArea { width, height });
    }
    Ok((width, height))
}

fn count_changed(frames: &[RgbImage], width: u32, height: u32) -> u64 {
    let mut changed = 0;
    for y in 0..height {
        for x in 0..width {
            let first = frames[0].get_pixel(x, y);
            if frames[1..].iter().any(|f| f.get_pixel(x, y) != first) {
                changed += 1;
            }
        }
    }
    changed
}
