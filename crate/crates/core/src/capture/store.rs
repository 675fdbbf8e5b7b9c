//! On-disk screenshot tree:
//! `{run}/run.json`, `{run}/{site_id}/{browser}/{frame}.png` and a
//! `capture.json` sidecar per browser directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{decode_png, BlockedVerdict, CaptureError, ScreenshotSet};

pub const RUN_MANIFEST: &str = "run.json";
pub const CAPTURE_SIDECAR: &str = "capture.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Two different browsers.
    Xbi,
    /// Two versions of one browser.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteEntry {
    pub site_id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub run_id: String,
    pub mode: RunMode,
    pub created_at: String,
    /// Browser directory labels in slot order (A, B).
    pub browsers: [String; 2],
    pub sites: Vec<SiteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureSidecar {
    pub url: String,
    pub browser: String,
    pub frame_count: usize,
    pub capture_times: Vec<f64>,
    #[serde(default)]
    pub popup_dismissals: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub blocked: Option<BlockedVerdict>,
    /// Set when the capture itself failed; no frames are stored then.
    #[serde(default)]
    pub error: Option<String>,
}

pub fn browser_dir(run_dir: &Path, site_id: &str, browser: &str) -> PathBuf {
    run_dir.join(site_id).join(browser)
}

pub fn write_manifest(run_dir: &Path, manifest: &RunManifest) -> Result<(), CaptureError> {
    fs::create_dir_all(run_dir)?;
    let json = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    fs::write(run_dir.join(RUN_MANIFEST), json)?;
    Ok(())
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, CaptureError> {
    let path = run_dir.join(RUN_MANIFEST);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| CaptureError::Invalid(format!("{}: {e}", path.display())))
}

/// Write frames and sidecar; stale frames from an earlier run are removed.
pub fn write_set(dir: &Path, set: &ScreenshotSet) -> Result<(), CaptureError> {
    fs::create_dir_all(dir)?;
    clear_frames(dir)?;
    for (i, frame) in set.frames.iter().enumerate() {
        frame
            .save_with_format(dir.join(format!("{i}.png")), image::ImageFormat::Png)
            .map_err(|e| CaptureError::Image(e.to_string()))?;
    }
    let sidecar = CaptureSidecar {
        url: set.url.clone(),
        browser: set.browser.clone(),
        frame_count: set.frames.len(),
        capture_times: set.capture_times.clone(),
        popup_dismissals: set.popup_dismissals.clone(),
        warnings: set.warnings.clone(),
        blocked: set.blocked.clone(),
        error: None,
    };
    write_sidecar(dir, &sidecar)
}

pub fn write_failure(dir: &Path, url: &str, browser: &str, error: &str) -> Result<(), CaptureError> {
    fs::create_dir_all(dir)?;
    clear_frames(dir)?;
    write_sidecar(
        dir,
        &CaptureSidecar {
            url: url.to_string(),
            browser: browser.to_string(),
            frame_count: 0,
            capture_times: vec![],
            popup_dismissals: vec![],
            warnings: vec![],
            blocked: None,
            error: Some(error.to_string()),
        },
    )
}

pub fn read_sidecar(dir: &Path) -> Result<CaptureSidecar, CaptureError> {
    let path = dir.join(CAPTURE_SIDECAR);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| CaptureError::Invalid(format!("{}: {e}", path.display())))
}

pub fn read_set(dir: &Path) -> Result<ScreenshotSet, CaptureError> {
    let sidecar = read_sidecar(dir)?;
    if let Some(err) = &sidecar.error {
        return Err(CaptureError::Invalid(format!("capture failed: {err}")));
    }
    let frames = (0..sidecar.frame_count)
        .map(|i| {
            let bytes = fs::read(dir.join(format!("{i}.png")))?;
            decode_png(&bytes)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let set = ScreenshotSet {
        url: sidecar.url,
        browser: sidecar.browser,
        frames,
        capture_times: sidecar.capture_times,
        popup_dismissals: sidecar.popup_dismissals,
        warnings: sidecar.warnings,
        blocked: sidecar.blocked,
    };
    set.validate()?;
    Ok(set)
}

fn write_sidecar(dir: &Path, sidecar: &CaptureSidecar) -> Result<(), CaptureError> {
    let json = serde_json::to_string_pretty(sidecar).map_err(std::io::Error::other)?;
    fs::write(dir.join(CAPTURE_SIDECAR), json)?;
    Ok(())
}

fn clear_frames(dir: &Path) -> Result<(), CaptureError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let is_frame = path.extension().is_some_and(|e| e == "png")
            && path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.chars().all(|c| c.is_ascii_digit()));
        if is_frame {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}
