use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde_json::json;
use xbiscope_core::capture::store::{browser_dir, read_manifest, read_set, read_sidecar, RunManifest, RUN_MANIFEST};
use xbiscope_core::detector::{
    Detector, HttpBackend, MockBackend, MockMapping, PromptSet, RateLimiter, SiteAnalysis, SiteOutcome, VlmBackend,
};
use xbiscope_core::report::{build_report, emit_json, render_html, RunMeta, SkipReason, SkippedSite};

use crate::config::{BackendKind, RunConfig};
use crate::{Outcome, UsageError};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_HTML: &str = "report.html";
pub const SITE_ANALYSIS: &str = "analysis.json";
pub const DEFAULT_MOCK_MAPPING: &str = "mock.json";

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeFlags {
    /// Skip the advertisement stage.
    #[arg(long)]
    pub no_ads: bool,
    /// Skip the dynamic-content stage.
    #[arg(long)]
    pub no_dynamics: bool,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Mock backend mapping; defaults to detector.mock_mapping, then `{run}/mock.json`.
    #[arg(long)]
    pub mock_map: Option<PathBuf>,
}

impl AnalyzeFlags {
    /// Fold the flags into the configuration so the digest reflects them.
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.no_ads {
            cfg.detector.ads = false;
        }
        if self.no_dynamics {
            cfg.detector.dynamics = false;
        }
        if let Some(b) = self.backend {
            cfg.detector.backend = b;
        }
        if let Some(m) = &self.mock_map {
            cfg.detector.mock_mapping = Some(m.clone());
        }
    }
}

enum SiteResult {
    Analyzed(Box<SiteAnalysis>),
    Skipped(SkippedSite),
}

fn skip(site_id: &str, reason: SkipReason, detail: impl Into<String>) -> SiteResult {
    SiteResult::Skipped(SkippedSite {
        site_id: site_id.to_string(),
        reason,
        detail: detail.into(),
    })
}

fn backend(cfg: &RunConfig, run_dir: &Path) -> Result<(Arc<dyn VlmBackend>, String), UsageError> {
    let d = &cfg.detector;
    match d.backend {
        BackendKind::Mock => {
            let path = d
                .mock_mapping
                .clone()
                .unwrap_or_else(|| run_dir.join(DEFAULT_MOCK_MAPPING));
            let mapping = MockMapping::load(&path).map_err(|e| {
                UsageError(format!(
                    "mock backend needs a mapping file; {} could not be read ({e}). \
                     Pass --mock-map or create one with `xbiscope fixtures mockmap`.",
                    path.display()
                ))
            })?;
            Ok((Arc::new(MockBackend::new(mapping)), "mock".into()))
        }
        BackendKind::Http => {
            let timeout = Duration::from_secs_f64(d.request_timeout);
            let b = HttpBackend::from_env(d.endpoint.clone(), d.model.clone(), &d.api_key_env, timeout);
            Ok((Arc::new(b), format!("http:{}", d.model)))
        }
    }
}

fn analyze_site(detector: &Detector, run_dir: &Path, manifest: &RunManifest, site_id: &str) -> SiteResult {
    let mut sets = Vec::with_capacity(2);
    for label in &manifest.browsers {
        let dir = browser_dir(run_dir, site_id, label);
        let sidecar = match read_sidecar(&dir) {
            Ok(s) => s,
            Err(e) => return skip(site_id, SkipReason::CaptureFailed, format!("{label}: no capture ({e})")),
        };
        if let Some(err) = sidecar.error {
            return skip(site_id, SkipReason::CaptureFailed, format!("{label}: {err}"));
        }
        if let Some(v) = sidecar.blocked {
            return skip(
                site_id,
                SkipReason::BlockedPrecapture,
                format!("{label}: page text matched {:?}", v.matched_keyword),
            );
        }
        match read_set(&dir) {
            Ok(set) => sets.push(set),
            Err(e) => return skip(site_id, SkipReason::CaptureFailed, format!("{label}: {e}")),
        }
    }
    match detector.analyze_site(site_id, [&sets[0], &sets[1]]) {
        Ok(outcome) => match write_outcome(run_dir, manifest, &outcome) {
            Ok(()) => SiteResult::Analyzed(Box::new(outcome.analysis)),
            Err(e) => skip(site_id, SkipReason::StageFailed, format!("writing artifacts: {e:#}")),
        },
        Err(f) => skip(site_id, SkipReason::StageFailed, format!("{}: {}", f.stage, f.message)),
    }
}

fn write_outcome(run_dir: &Path, manifest: &RunManifest, outcome: &SiteOutcome) -> anyhow::Result<()> {
    let site = &outcome.analysis.site_id;
    for (label, overlay) in manifest.browsers.iter().zip(&outcome.overlays) {
        let dir = browser_dir(run_dir, site, label);
        overlay
            .pixels
            .save_with_format(dir.join("overlay.png"), image::ImageFormat::Png)
            .with_context(|| format!("saving overlay for {site}/{label}"))?;
        fs::write(
            dir.join("overlay.json"),
            serde_json::to_string_pretty(&overlay.sidecar())?,
        )?;
    }
    let prompts: Vec<_> = outcome
        .prompts
        .iter()
        .map(|(stage, prompt)| json!({ "stage": stage, "prompt": prompt }))
        .collect();
    let doc = json!({ "analysis": outcome.analysis, "prompts": prompts });
    fs::write(
        run_dir.join(site).join(SITE_ANALYSIS),
        serde_json::to_string_pretty(&doc)? + "\n",
    )?;
    Ok(())
}

fn write_skip(run_dir: &Path, s: &SkippedSite) -> anyhow::Result<()> {
    let dir = run_dir.join(&s.site_id);
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join(SITE_ANALYSIS),
        serde_json::to_string_pretty(&json!({ "skipped": s }))? + "\n",
    )?;
    Ok(())
}

/// Analyze an existing screenshot tree; `cfg` already carries any flag overrides.
pub fn analyze_run(cfg: &RunConfig, run_dir: &Path, workers: usize) -> anyhow::Result<Outcome> {
    if !run_dir.join(RUN_MANIFEST).is_file() {
        return Err(UsageError(format!(
            "no screenshot tree at {}: {RUN_MANIFEST} is missing (run `xbiscope capture` first)",
            run_dir.display()
        ))
        .into());
    }
    let manifest = read_manifest(run_dir).map_err(|e| UsageError(e.to_string()))?;
    let (backend, backend_label) = backend(cfg, run_dir)?;
    let prompts = match &cfg.paths.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| UsageError(format!("prompts {}: {e}", dir.display())))?,
        None => PromptSet::default(),
    };
    let mut detector = Detector::new(backend, prompts, cfg.detector_config());
    if cfg.detector.rate_limit_per_minute > 0 {
        detector = detector.with_limiter(Arc::new(RateLimiter::per_minute(cfg.detector.rate_limit_per_minute)));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")?;
    let results: Vec<SiteResult> = pool.install(|| {
        manifest
            .sites
            .par_iter()
            .map(|s| analyze_site(&detector, run_dir, &manifest, &s.site_id))
            .collect()
    });

    let mut analyses = Vec::new();
    let mut skips = Vec::new();
    for r in results {
        match r {
            SiteResult::Analyzed(a) => analyses.push(*a),
            SiteResult::Skipped(s) => {
                write_skip(run_dir, &s)?;
                skips.push(s);
            }
        }
    }
    let failures = skips
        .iter()
        .filter(|s| s.reason != SkipReason::BlockedPrecapture)
        .count();

    let meta = RunMeta {
        run_id: manifest.run_id.clone(),
        mode: manifest.mode,
        created_at: manifest.created_at.clone(),
        config_digest: cfg.digest(),
        browsers: manifest.browsers.clone(),
        backend: backend_label,
    };
    let report = build_report(meta, analyses, skips).context("building report")?;
    fs::write(run_dir.join(REPORT_JSON), emit_json(&report))?;
    fs::write(run_dir.join(REPORT_HTML), render_html(&report, run_dir))?;
    println!(
        "analyzed {} site(s), skipped {} ({failures} failed); wrote {}",
        report.sites.len(),
        report.skipped.len(),
        run_dir.join(REPORT_JSON).display()
    );
    Ok(if failures == 0 {
        Outcome::Success
    } else {
        Outcome::SiteFailures
    })
}
