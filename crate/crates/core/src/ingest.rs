//! Bug-report ingestion from issue trackers and the analyzable-subset filter.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::detector::ImpactScore;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("transport error fetching {url}: {message}")]
    Transport { url: String, message: String },
    #[error("tracker returned HTTP {status} for {url}")]
    Source { url: String, status: u16 },
    #[error("malformed payload on page {page}, record {index}: {reason}")]
    Parse { page: u32, index: usize, reason: String },
    #[error("dataset line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    /// Network failures and server-side errors may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            IngestError::Transport { .. } => true,
            IngestError::Source { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportSource {
    Bugzilla,
    Webcompat,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub bug_id: String,
    pub source: ReportSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub browser: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub browser_version: Option<u32>,
    #[serde(default)]
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_impact: Option<ImpactScore>,
}

/// Where to fetch reports from: an HTTP+JSON tracker endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackerSource {
    pub kind: ReportSource,
    pub base_url: String,
    pub timeout: Duration,
}

impl TrackerSource {
    pub fn new(kind: ReportSource, base_url: impl Into<String>) -> Self {
        TrackerSource {
            kind,
            base_url: base_url.into(),
            timeout: Duration::from_secs(30),
        }
    }

    fn page_url(&self, query: &str, page: u32) -> String {
        let mut url = self.base_url.clone();
        url.push(if url.contains('?') { '&' } else { '?' });
        let query = query.trim_start_matches(['?', '&']);
        if !query.is_empty() {
            url.push_str(query);
            url.push('&');
        }
        url.push_str(&format!("page={page}"));
        url
    }
}

/// Fetch every page (`page=1,2,...`) until the tracker returns an empty array.
pub fn fetch_reports(source: &TrackerSource, query: &str) -> Result<Vec<BugReport>, IngestError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(source.timeout))
        .build()
        .into();
    let mut out = Vec::new();
    for page in 1.. {
        let url = source.page_url(query, page);
        let mut resp = agent.get(&url).call().map_err(|e| IngestError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status >= 400 {
            return Err(IngestError::Source { url, status });
        }
        let body = resp.body_mut().read_to_string().map_err(|e| IngestError::Transport {
            url: url.clone(),
            message: e.to_string(),
        })?;
        let records = parse_page(&body, page, source.kind)?;
        if records.is_empty() {
            break;
        }
        out.extend(records);
    }
    Ok(out)
}

/// Parse one page of the tracker wire format: a JSON array of
/// `{id, url, browser, version, summary, impact}` objects.
pub fn parse_page(body: &str, page: u32, kind: ReportSource) -> Result<Vec<BugReport>, IngestError> {
    let whole = |reason: String| IngestError::Parse { page, index: 0, reason };
    let value: Value = serde_json::from_str(body).map_err(|e| whole(e.to_string()))?;
    let items = value
        .as_array()
        .ok_or_else(|| whole("payload is not a JSON array".into()))?;
    items
        .iter()
        .enumerate()
        .map(|(index, item)| parse_record(item, kind).map_err(|reason| IngestError::Parse { page, index, reason }))
        .collect()
}

fn parse_record(item: &Value, kind: ReportSource) -> Result<BugReport, String> {
    let obj = item.as_object().ok_or("record is not an object")?;
    let field = |name: &str| obj.get(name).filter(|v| !v.is_null());

    let bug_id = match field("id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err("id must be a non-empty string or number".into()),
        None => return Err("missing id".into()),
    };
    let url = match field("url") {
        None => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => {
            let s = s.trim();
            if !is_http_url(s) {
                return Err(format!("url {s:?} is not an absolute http(s) URL"));
            }
            Some(s.to_string())
        }
        Some(_) => return Err("url must be a string".into()),
    };
    let browser = match field("browser") {
        None => String::new(),
        Some(Value::String(s)) => s.trim().to_string(),
        Some(_) => return Err("browser must be a string".into()),
    };
    let browser_version = match field("version") {
        None => None,
        Some(Value::Number(n)) => Some(
            n.as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| format!("version {n} is not a positive integer"))?,
        ),
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(major_version(s).ok_or_else(|| format!("unparseable version {s:?}"))?),
        Some(_) => return Err("version must be a number or string".into()),
    };
    let summary = match field("summary") {
        None => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("summary must be a string".into()),
    };
    let ground_truth_impact = match field("impact") {
        None => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.parse::<ImpactScore>().map_err(|e| e.to_string())?),
        Some(_) => return Err("impact must be a string".into()),
    };
    Ok(BugReport {
        bug_id,
        source: kind,
        url,
        browser,
        browser_version,
        summary,
        ground_truth_impact,
    })
}

/// "120.0.1" -> 120
fn major_version(s: &str) -> Option<u32> {
    let digits: String = s.trim().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

pub(crate) fn is_http_url(s: &str) -> bool {
    let rest = s.strip_prefix("http://").or_else(|| s.strip_prefix("https://"));
    matches!(rest, Some(r) if !r.is_empty() && !r.starts_with('/') && !r.contains(char::is_whitespace))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub require_url: bool,
    pub exclude_mobile: bool,
    /// Empty means any browser is allowed.
    pub allowed_browsers: BTreeSet<String>,
    pub min_browser_version: Option<u32>,
}

impl FilterPolicy {
    /// No checks at all.
    pub fn permissive() -> Self {
        FilterPolicy {
            require_url: false,
            exclude_mobile: false,
            allowed_browsers: BTreeSet::new(),
            min_browser_version: None,
        }
    }

    /// URL required, desktop Firefox 100 or newer.
    pub fn desktop_firefox() -> Self {
        FilterPolicy {
            require_url: true,
            exclude_mobile: true,
            allowed_browsers: BTreeSet::from(["firefox".to_string()]),
            min_browser_version: Some(100),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.min_browser_version {
            Some(0) => Err("min_browser_version must be >= 1".into()),
            _ => Ok(()),
        }
    }

    /// First failing rule, in order url, mobile, browser, version.
    pub fn rejection_reason(&self, report: &BugReport) -> Option<String> {
        if self.require_url && report.url.is_none() {
            return Some("no URL".into());
        }
        if self.exclude_mobile && is_mobile(&report.browser) {
            return Some(format!("mobile browser ({})", report.browser));
        }
        if !self.allowed_browsers.is_empty()
            && !self
                .allowed_browsers
                .iter()
                .any(|b| b.eq_ignore_ascii_case(report.browser.trim()))
        {
            return Some(format!("browser {:?} not allowed", report.browser));
        }
        if let (Some(min), Some(v)) = (self.min_browser_version, report.browser_version) {
            if v < min {
                return Some(format!("browser version {v} older than {min}"));
            }
        }
        None
    }
}

fn is_mobile(browser: &str) -> bool {
    let b = browser.to_ascii_lowercase();
    ["mobile", "android", "ios"].iter().any(|k| b.contains(k))
}

pub type Rejected = (BugReport, String);

/// Split reports into kept and rejected, preserving input order in each part.
pub fn filter_reports(reports: &[BugReport], policy: &FilterPolicy) -> (Vec<BugReport>, Vec<Rejected>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for r in reports {
        match policy.rejection_reason(r) {
            None => kept.push(r.clone()),
            Some(reason) => rejected.push((r.clone(), reason)),
        }
    }
    (kept, rejected)
}

pub fn write_jsonl(path: &Path, reports: &[BugReport]) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in reports {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSONL dataset; blank lines are skipped and bug ids must be unique.
pub fn read_jsonl(path: &Path) -> Result<Vec<BugReport>, IngestError> {
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: BugReport = serde_json::from_str(&line).map_err(|e| IngestError::Dataset {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if report.bug_id.is_empty() || !seen.insert(report.bug_id.clone()) {
            return Err(IngestError::Dataset {
                line: i + 1,
                reason: format!("empty or duplicate bug id {:?}", report.bug_id),
            });
        }
        out.push(report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str, url: Option<&str>, browser: &str, version: Option<u32>) -> BugReport {
        BugReport {
            bug_id: id.into(),
            source: ReportSource::Webcompat,
            url: url.map(String::from),
            browser: browser.into(),
            browser_version: version,
            summary: String::new(),
            ground_truth_impact: None,
        }
    }

    #[test]
    fn missing_url_rejected_first() {
        let (kept, rejected) = filter_reports(
            &[report("1", None, "chrome mobile", Some(3))],
            &FilterPolicy::desktop_firefox(),
        );
        assert!(kept.is_empty());
        assert_eq!(rejected[0].1, "no URL");
    }

    #[test]
    fn old_firefox_rejected_new_kept() {
        let policy = FilterPolicy::desktop_firefox();
        let (kept, rejected) = filter_reports(
            &[
                report("old", Some("https://a.example"), "firefox", Some(99)),
                report("new", Some("https://b.example"), "Firefox", Some(120)),
                report("unknown", Some("https://c.example"), "firefox", None),
            ],
            &policy,
        );
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].0.bug_id, "old");
        assert!(rejected[0].1.contains("older than 100"));
        let ids: Vec<_> = kept.iter().map(|r| r.bug_id.as_str()).collect();
        assert_eq!(ids, ["new", "unknown"]);
    }

    #[test]
    fn mobile_and_browser_rules() {
        let policy = FilterPolicy::desktop_firefox();
        for b in ["Firefox Mobile", "firefox android", "Firefox iOS"] {
            let reason = policy
                .rejection_reason(&report("m", Some("https://x.example"), b, Some(120)))
                .unwrap();
            assert!(reason.starts_with("mobile"), "{b}: {reason}");
        }
        let reason = policy
            .rejection_reason(&report("c", Some("https://x.example"), "chrome", Some(120)))
            .unwrap();
        assert!(reason.contains("not allowed"));
    }

    #[test]
    fn zero_min_version_invalid() {
        let mut p = FilterPolicy::permissive();
        assert!(p.validate().is_ok());
        p.min_browser_version = Some(0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn parse_page_fields() {
        let body = r#"[
            {"id": "b1", "url": "https://shop.example/", "browser": "firefox", "version": "121.0.1", "summary": "menu broken", "impact": "minor-visual"},
            {"id": 7, "browser": "firefox", "version": 130, "summary": "no url"}
        ]"#;
        let got = parse_page(body, 1, ReportSource::Bugzilla).unwrap();
        assert_eq!(got[0].browser_version, Some(121));
        assert_eq!(got[0].ground_truth_impact, Some(ImpactScore::MinorVisual));
        assert_eq!(got[1].bug_id, "7");
        assert_eq!(got[1].url, None);
        assert_eq!(got[1].ground_truth_impact, None);
    }

    #[test]
    fn parse_page_names_bad_record() {
        let body = r#"[{"id": "ok", "browser": "firefox"}, {"id": "bad", "url": "not a url"}]"#;
        match parse_page(body, 3, ReportSource::Webcompat).unwrap_err() {
            IngestError::Parse { page, index, .. } => assert_eq!((page, index), (3, 1)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_page("{}", 1, ReportSource::Webcompat),
            Err(IngestError::Parse { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let reports = vec![
            report("a", Some("https://a.example"), "firefox", Some(110)),
            report("b", None, "firefox", None),
        ];
        write_jsonl(&path, &reports).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), reports);

        write_jsonl(&path, &[reports[0].clone(), reports[0].clone()]).unwrap();
        assert!(matches!(read_jsonl(&path), Err(IngestError::Dataset { line: 2, .. })));
    }

    #[test]
    fn page_url_building() {
        let s = TrackerSource::new(ReportSource::Webcompat, "http://h/issues");
        assert_eq!(s.page_url("", 2), "http://h/issues?page=2");
        assert_eq!(s.page_url("label=compat", 1), "http://h/issues?label=compat&page=1");
    }
}
