//! Cross-browser inconsistency detection: capture, overlay, VLM staging,
//! reporting and evaluation.

pub mod capture;
pub mod composite;
pub mod detector;
pub mod evaluate;
pub mod fixtures;
pub mod ingest;
pub mod report;

pub use capture::{BrowserConfig, CaptureOptions, PopupFilter, ScreenshotSet};
pub use composite::OverlayImage;
pub use detector::{ImpactScore, SiteAnalysis, XbiFinding};
pub use evaluate::{ConfusionMatrix, EvalReport, GroundTruth};
pub use ingest::{BugReport, FilterPolicy};
pub use report::RunReport;
