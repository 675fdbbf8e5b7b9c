use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use xbiscope_core::capture::store::RunMode;
use xbiscope_core::evaluate::{read_truth_csv, render_summary, score_run};
use xbiscope_core::fixtures::mockmap::build_mock_mapping;
use xbiscope_core::fixtures::server::serve_corpus;
use xbiscope_core::fixtures::webdriver_stub::{spawn_webdriver_stub, FullPageSupport, StubOptions};
use xbiscope_core::fixtures::{generate_corpus, CorpusManifest, CorpusTree, FixtureError};
use xbiscope_core::ingest::{fetch_reports, filter_reports, write_jsonl, ReportSource, TrackerSource};
use xbiscope_core::report::parse_json;

use crate::analyze::{analyze_run, DEFAULT_MOCK_MAPPING, REPORT_JSON};
use crate::capture::{capture_run, default_run_id};
use crate::config::RunConfig;
use crate::{
    AnalyzeArgs, CaptureArgs, Cli, Command, EvaluateArgs, FixturesCommand, FullPageArg, IngestArgs, Outcome,
    RegressArgs, SourceKind, UsageError,
};

pub(crate) fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let workers = cli.workers.max(1);
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, &a),
        Command::Capture(a) => {
            let (run_id, dir) = run_location(&cfg, cli.run_id, &a);
            capture_run(&cfg, &a.targets, &dir, &run_id, cfg.mode, workers)
        }
        Command::Analyze(a) => analyze(cfg, &a, workers),
        Command::Evaluate(a) => evaluate(&a),
        Command::Regress(a) => regress(cfg, cli.run_id, &a, workers),
        Command::Fixtures { command } => fixtures(command),
    }
}

fn run_location(cfg: &RunConfig, run_id: Option<String>, a: &CaptureArgs) -> (String, PathBuf) {
    match (&a.out, run_id) {
        (Some(dir), Some(id)) => (id, dir.clone()),
        (Some(dir), None) => {
            let id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(default_run_id);
            (id, dir.clone())
        }
        (None, id) => {
            let id = id.unwrap_or_else(default_run_id);
            let dir = cfg.paths.output.join(&id);
            (id, dir)
        }
    }
}

fn ingest(cfg: &RunConfig, a: &IngestArgs) -> anyhow::Result<Outcome> {
    let base = a
        .source_url
        .clone()
        .or_else(|| cfg.ingest.base_url.clone())
        .ok_or_else(|| UsageError("no tracker URL: pass --source-url or set ingest.base_url".into()))?;
    let kind = match a.kind {
        Some(SourceKind::Bugzilla) => ReportSource::Bugzilla,
        Some(SourceKind::Webcompat) => ReportSource::Webcompat,
        Some(SourceKind::Manual) => ReportSource::Manual,
        None => cfg.ingest.source,
    };
    let mut policy = cfg.ingest.policy();
    if a.min_version.is_some() {
        policy.min_browser_version = a.min_version;
    }
    policy.validate().map_err(UsageError)?;
    let query = a.query.clone().unwrap_or_else(|| cfg.ingest.query.clone());

    let reports = fetch_reports(&TrackerSource::new(kind, base), &query)?;
    let (kept, rejected) = filter_reports(&reports, &policy);
    write_jsonl(&a.out, &kept)?;
    if let Some(path) = &a.rejected {
        let mut out = String::new();
        for (report, reason) in &rejected {
            out.push_str(&serde_json::to_string(
                &serde_json::json!({ "report": report, "reason": reason }),
            )?);
            out.push('\n');
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "fetched {} report(s): kept {}, rejected {}; wrote {}",
        reports.len(),
        kept.len(),
        rejected.len(),
        a.out.display()
    );
    Ok(Outcome::Success)
}

fn analyze(mut cfg: RunConfig, a: &AnalyzeArgs, workers: usize) -> anyhow::Result<Outcome> {
    a.flags.apply(&mut cfg);
    analyze_run(&cfg, &a.run, workers)
}

fn evaluate(a: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let report_path = if a.report.is_dir() {
        a.report.join(REPORT_JSON)
    } else {
        a.report.clone()
    };
    let text = fs::read_to_string(&report_path)
        .map_err(|e| UsageError(format!("cannot read report {}: {e}", report_path.display())))?;
    let report = parse_json(&text).map_err(|e| UsageError(format!("{}: {e}", report_path.display())))?;
    let truth = read_truth_csv(&a.truth).map_err(|e| UsageError(format!("{}: {e}", a.truth.display())))?;
    let eval = score_run(&report, &truth)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| report_path.parent().unwrap_or(Path::new(".")).join("eval.json"));
    fs::write(&out, serde_json::to_string_pretty(&eval)? + "\n")
        .with_context(|| format!("writing {}", out.display()))?;
    print!("{}", render_summary(&eval));
    if !eval.unscored.is_empty() {
        println!("unscored (no truth row): {}", eval.unscored.join(", "));
    }
    println!("wrote {}", out.display());
    Ok(Outcome::Success)
}

/// Slot labels for regression runs when the config gives none.
pub const REGRESSION_LABELS: [&str; 2] = ["versionA", "versionB"];

/// Force a version label on both slots so the two runs of one browser land
/// in distinct directories and are named in the report header.
pub fn regression_config(mut cfg: RunConfig) -> Result<RunConfig, UsageError> {
    let [a, b] = [&cfg.browsers[0], &cfg.browsers[1]];
    if !a.name.eq_ignore_ascii_case(&b.name) {
        return Err(UsageError(format!(
            "regress compares two versions of one browser, but the config names {} and {}",
            a.name, b.name
        )));
    }
    for (b, label) in cfg.browsers.iter_mut().zip(REGRESSION_LABELS) {
        if b.version_label.is_none() {
            b.version_label = Some(label.to_string());
        }
    }
    cfg.mode = RunMode::Regression;
    cfg.validate()?;
    Ok(cfg)
}

fn regress(cfg: RunConfig, run_id: Option<String>, a: &RegressArgs, workers: usize) -> anyhow::Result<Outcome> {
    let mut cfg = regression_config(cfg)?;
    a.flags.apply(&mut cfg);
    let (run_id, dir) = run_location(&cfg, run_id, &a.capture);
    let captured = capture_run(&cfg, &a.capture.targets, &dir, &run_id, RunMode::Regression, workers)?;
    let analyzed = analyze_run(&cfg, &dir, workers)?;
    Ok(if captured == Outcome::Success && analyzed == Outcome::Success {
        Outcome::Success
    } else {
        Outcome::SiteFailures
    })
}

fn fixture_usage(e: FixtureError) -> anyhow::Error {
    match e {
        FixtureError::Io(_) => anyhow::Error::new(e),
        other => UsageError(other.to_string()).into(),
    }
}

fn fixtures(cmd: FixturesCommand) -> anyhow::Result<Outcome> {
    match cmd {
        FixturesCommand::Gen {
            out,
            manifest,
            seed,
            standard,
        } => {
            let m = match manifest {
                Some(path) => CorpusManifest::load(&path).map_err(fixture_usage)?,
                None => match standard {
                    12 => CorpusManifest::standard_12(seed),
                    20 => CorpusManifest::standard_20(seed),
                    n => return Err(UsageError(format!("--standard must be 12 or 20, got {n}")).into()),
                },
            };
            let tree = generate_corpus(&m, &out).map_err(fixture_usage)?;
            println!("wrote {} site(s) to {}", tree.manifest.specs.len(), out.display());
            Ok(Outcome::Success)
        }
        FixturesCommand::Serve { tree, bind } => {
            let handle = serve_corpus(&tree, &bind).map_err(fixture_usage)?;
            println!("serving {} at {}", tree.display(), handle.base_url());
            handle.wait();
            Ok(Outcome::Success)
        }
        FixturesCommand::Mockmap {
            tree,
            run,
            adversarial,
            out,
        } => {
            let corpus = CorpusTree::open(&tree).map_err(fixture_usage)?;
            let mapping = build_mock_mapping(&corpus, &run, adversarial).map_err(fixture_usage)?;
            let out = out.unwrap_or_else(|| run.join(DEFAULT_MOCK_MAPPING));
            mapping
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "mapped {} image hash(es) over {} site(s) into {}",
                mapping.images.len(),
                mapping.sites.len(),
                out.display()
            );
            Ok(Outcome::Success)
        }
        FixturesCommand::Webdriver { bind, full_page } => {
            let opts = StubOptions {
                full_page: match full_page {
                    FullPageArg::Always => FullPageSupport::Always,
                    FullPageArg::HeadlessOnly => FullPageSupport::HeadlessOnly,
                    FullPageArg::Never => FullPageSupport::Never,
                },
                stall_on: Vec::new(),
            };
            let handle = spawn_webdriver_stub(&bind, opts).map_err(fixture_usage)?;
            println!("emulated WebDriver at {}", handle.base_url());
            handle.wait();
            Ok(Outcome::Success)
        }
    }
}
