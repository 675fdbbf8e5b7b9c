use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use xbiscope_core::capture::store::{
    browser_dir, write_failure, write_manifest, write_set, RunManifest, RunMode, SiteEntry,
};
use xbiscope_core::capture::{capture_burst, BrowserConfig, CaptureError, SessionFactory, WebDriverFactory};
use xbiscope_core::fixtures::browser::OfflineFactory;
use xbiscope_core::fixtures::CorpusTree;
use xbiscope_core::ingest::read_jsonl;

use crate::config::RunConfig;
use crate::{Outcome, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SessionKind {
    /// Real browsers through their WebDriver endpoints.
    Webdriver,
    /// Built-in renderer over a local corpus tree; needs `--corpus`.
    Offline,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// Text file: one `site_id url` (or bare `url`) per line.
    #[arg(long, conflicts_with_all = ["dataset", "corpus"])]
    pub urls: Option<PathBuf>,
    /// JSONL written by `ingest`.
    #[arg(long, conflicts_with = "corpus")]
    pub dataset: Option<PathBuf>,
    /// Fixture corpus tree; every site in its manifest is captured.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Where the corpus is served when capturing it through WebDriver.
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long, value_enum, default_value_t = SessionKind::Webdriver)]
    pub session: SessionKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub site_id: String,
    /// May contain `{variant}`, replaced by `a` or `b` per browser slot.
    pub url: String,
}

const OFFLINE_BASE: &str = "fixture://corpus";

fn sanitize_id(raw: &str) -> String {
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn load_targets(args: &TargetArgs) -> anyhow::Result<Vec<Target>> {
    let targets = if let Some(path) = &args.urls {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut out = Vec::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (id, url) = match parts.as_slice() {
                [url] => (format!("site-{:03}", out.len() + 1), url.to_string()),
                [id, url] => (sanitize_id(id), url.to_string()),
                _ => return Err(UsageError(format!("{}: cannot parse line {line:?}", path.display())).into()),
            };
            out.push(Target { site_id: id, url });
        }
        out
    } else if let Some(path) = &args.dataset {
        read_jsonl(path)
            .with_context(|| format!("reading {}", path.display()))?
            .into_iter()
            .filter_map(|r| {
                r.url.map(|url| Target {
                    site_id: sanitize_id(&r.bug_id),
                    url,
                })
            })
            .collect()
    } else if let Some(root) = &args.corpus {
        let tree = CorpusTree::open(root).map_err(|e| UsageError(format!("corpus {}: {e}", root.display())))?;
        let base = match (&args.base_url, args.session) {
            (Some(b), _) => b.clone(),
            (None, SessionKind::Offline) => OFFLINE_BASE.to_string(),
            (None, SessionKind::Webdriver) => {
                return Err(UsageError(
                    "--base-url is required to capture a corpus through WebDriver (start one with `xbiscope fixtures serve`)".into(),
                )
                .into())
            }
        };
        tree.url_list(&base)
            .into_iter()
            .map(|(site_id, url)| Target { site_id, url })
            .collect()
    } else {
        return Err(UsageError("give one of --urls, --dataset or --corpus".into()).into());
    };
    let mut seen = BTreeSet::new();
    for t in &targets {
        if !seen.insert(&t.site_id) {
            return Err(UsageError(format!("duplicate site id {}", t.site_id)).into());
        }
    }
    Ok(targets)
}

fn factory(args: &TargetArgs) -> anyhow::Result<Box<dyn SessionFactory + Send>> {
    Ok(match args.session {
        SessionKind::Webdriver => Box::new(WebDriverFactory),
        SessionKind::Offline => {
            let root = args
                .corpus
                .as_ref()
                .ok_or_else(|| UsageError("--session offline needs --corpus".into()))?;
            let tree = CorpusTree::open(root).map_err(|e| UsageError(format!("corpus {}: {e}", root.display())))?;
            Box::new(OfflineFactory::for_corpus(tree))
        }
    })
}

fn probe(factory: &dyn SessionFactory, browsers: &[BrowserConfig; 2]) -> Result<(), UsageError> {
    for (slot, b) in browsers.iter().enumerate() {
        if let Err(e) = factory.open(b) {
            return Err(UsageError(format!(
                "cannot start a session for browsers[{slot}] ({}) at {}: {e}. \
                 Start the driver (e.g. `geckodriver --port 4444`, `chromedriver --port=9515`, \
                 or `xbiscope fixtures webdriver`) or fix webdriver_endpoint in the config.",
                b.name, b.webdriver_endpoint
            )));
        }
    }
    Ok(())
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub(crate) fn default_run_id() -> String {
    chrono::Utc::now().format("run-%Y%m%dT%H%M%SZ").to_string()
}

/// Capture every target with both browsers into `run_dir`.
pub fn capture_run(
    cfg: &RunConfig,
    args: &TargetArgs,
    run_dir: &Path,
    run_id: &str,
    mode: RunMode,
    workers: usize,
) -> anyhow::Result<Outcome> {
    let targets = load_targets(args)?;
    let factory = factory(args)?;
    let browsers = cfg.browser_pair();
    probe(factory.as_ref(), &browsers)?;

    let opts = cfg.capture_options();
    let tasks: Vec<(&Target, usize)> = targets.iter().flat_map(|t| [(t, 0), (t, 1)]).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<(), CaptureError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(t, slot)| {
                let b = &browsers[slot];
                let url = t.url.replace("{variant}", ["a", "b"][slot]);
                let dir = browser_dir(run_dir, &t.site_id, &b.label());
                let outcome = factory.open(b).and_then(|mut s| {
                    capture_burst(s.as_mut(), &url, b, &opts, &cfg.popup_filter, &cfg.blocked_keywords)
                });
                match outcome {
                    Ok(set) => {
                        if let Some(v) = &set.blocked {
                            log::info!("{} [{}] blocked: {:?}", t.site_id, b.label(), v.matched_keyword);
                        }
                        write_set(&dir, &set)
                    }
                    Err(e) => {
                        log::warn!("{} [{}] capture failed: {e}", t.site_id, b.label());
                        write_failure(&dir, &url, &b.label(), &e.to_string())?;
                        Err(e)
                    }
                }
            })
            .collect()
    });

    let manifest = RunManifest {
        schema: 1,
        run_id: run_id.to_string(),
        mode,
        created_at: now_rfc3339(),
        browsers: cfg.labels(),
        sites: targets
            .iter()
            .map(|t| SiteEntry {
                site_id: t.site_id.clone(),
                url: t.url.clone(),
            })
            .collect(),
    };
    write_manifest(run_dir, &manifest).with_context(|| format!("writing {}", run_dir.display()))?;

    let failed = results.iter().filter(|r| r.is_err()).count();
    println!(
        "captured {} site(s) x 2 browsers into {} ({failed} failed)",
        targets.len(),
        run_dir.display()
    );
    if let Some(Err(e)) = results.iter().find(|r| matches!(r, Err(CaptureError::Config(_)))) {
        return Err(UsageError(e.to_string()).into());
    }
    Ok(if failed == 0 {
        Outcome::Success
    } else {
        Outcome::SiteFailures
    })
}
