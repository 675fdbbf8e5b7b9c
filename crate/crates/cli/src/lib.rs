//! `xbiscope` command-line driver. The binary is a thin wrapper around
//! [`run_with_args`] so integration tests can drive commands in-process.

mod analyze;
mod capture;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use analyze::{analyze_run, AnalyzeFlags};
pub use capture::{capture_run, load_targets, SessionKind, Target, TargetArgs};
pub use commands::{regression_config, REGRESSION_LABELS};
pub use config::RunConfig;

/// Configuration or usage problem: exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// How a command finished when it did not hit a fatal error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    SiteFailures,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_SITE_FAILURES: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "xbiscope",
    version,
    about = "Detect cross-browser inconsistencies from screenshot bursts"
)]
pub struct Cli {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on concurrent browser sessions and backend requests.
    #[arg(long, global = true, default_value_t = 4)]
    pub workers: usize,
    /// Run identifier; defaults to a timestamp.
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch bug reports from a tracker and keep the usable ones.
    Ingest(IngestArgs),
    /// Capture screenshot bursts for both configured browsers.
    Capture(CaptureArgs),
    /// Composite, run the detector stages and write report.json/report.html.
    Analyze(AnalyzeArgs),
    /// Score a report against a ground-truth CSV.
    Evaluate(EvaluateArgs),
    /// Capture and analyze two versions of one browser.
    Regress(RegressArgs),
    /// Synthetic corpus tools.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Tracker search endpoint; overrides ingest.base_url.
    #[arg(long)]
    pub source_url: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<SourceKind>,
    /// Query string appended to every page request.
    #[arg(long)]
    pub query: Option<String>,
    /// Drop reports for browser versions below this.
    #[arg(long)]
    pub min_version: Option<u32>,
    /// Output JSONL of kept reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSONL of rejected reports with reasons.
    #[arg(long)]
    pub rejected: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceKind {
    Bugzilla,
    Webcompat,
    Manual,
}

#[derive(Debug, Args)]
pub struct CaptureArgs {
    #[command(flatten)]
    pub targets: TargetArgs,
    /// Run directory; defaults to `{paths.output}/{run_id}`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Screenshot tree written by `capture`.
    pub run: PathBuf,
    #[command(flatten)]
    pub flags: AnalyzeFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// report.json, or the run directory containing it.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Defaults to eval.json next to the report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub capture: CaptureArgs,
    #[command(flatten)]
    pub flags: AnalyzeFlags,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Write a corpus tree.
    Gen {
        #[arg(long)]
        out: PathBuf,
        /// Corpus manifest JSON; overrides --standard and --seed.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Built-in corpus size: 12 (one site per injection) or 20.
        #[arg(long, default_value_t = 12)]
        standard: u32,
    },
    /// Serve a corpus tree over HTTP until killed.
    Serve {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
    /// Build the mock-backend mapping for a captured run of a corpus.
    Mockmap {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        run: PathBuf,
        /// Answers that misreport ads and animations when no exclusion list is given.
        #[arg(long)]
        adversarial: bool,
        /// Defaults to `{run}/mock.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the emulated WebDriver endpoint until killed.
    Webdriver {
        #[arg(long, default_value = "127.0.0.1:4444")]
        bind: String,
        #[arg(long, value_enum, default_value_t = FullPageArg::Always)]
        full_page: FullPageArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FullPageArg {
    Always,
    HeadlessOnly,
    Never,
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    commands::dispatch(cli)
}

/// Map a command result to the process exit status, printing errors.
pub fn exit_code(result: &anyhow::Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::SiteFailures) => EXIT_SITE_FAILURES,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_SITE_FAILURES
            }
        }
    }
}

/// Parse `args` (including the program name) and run. Returns the exit status.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    exit_code(&run(cli))
}
