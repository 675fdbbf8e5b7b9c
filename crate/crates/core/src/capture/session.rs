use image::RgbImage;
use serde_json::Value;

use super::{BrowserConfig, CaptureError};

/// Opaque handle to an element inside a live session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementRef(pub String);

/// A live browser session. One worker at a time.
pub trait BrowserSession {
    fn navigate(&mut self, url: &str) -> Result<(), CaptureError>;
    fn execute(&mut self, script: &str, args: Vec<Value>) -> Result<Value, CaptureError>;
    /// `Ok(None)` when nothing matches the CSS selector.
    fn find_element(&mut self, css: &str) -> Result<Option<ElementRef>, CaptureError>;
    fn click(&mut self, element: &ElementRef) -> Result<(), CaptureError>;
    /// `Ok(None)` when the driver has no full-page capture command.
    fn full_page_screenshot(&mut self) -> Result<Option<RgbImage>, CaptureError>;
    fn viewport_screenshot(&mut self) -> Result<RgbImage, CaptureError>;
    fn set_window_size(&mut self, width: u32, height: u32) -> Result<(), CaptureError>;
    /// Monotonic seconds on the session's clock.
    fn now(&self) -> f64;
    fn pause(&mut self, seconds: f64);
}

/// Opens sessions for capture workers.
pub trait SessionFactory: Sync {
    fn open(&self, cfg: &BrowserConfig) -> Result<Box<dyn BrowserSession + Send>, CaptureError>;
}
