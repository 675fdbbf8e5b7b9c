//! Run reports: canonical JSON and a static HTML page.

mod html;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::store::RunMode;
use crate::detector::{ImpactScore, SiteAnalysis, XbiFinding};

pub use html::{escape_html, render_html};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// JSON Schema describing `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("duplicate site_id {0}")]
    DuplicateSite(String),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    BlockedPrecapture,
    CaptureFailed,
    StageFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSite {
    pub site_id: String,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopupRow {
    pub site_id: String,
    pub finding: XbiFinding,
}

/// Run-level metadata carried into the report unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub mode: RunMode,
    pub created_at: String,
    pub config_digest: String,
    pub browsers: [String; 2],
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub run_id: String,
    pub mode: RunMode,
    pub created_at: String,
    pub config_digest: String,
    pub browsers: [String; 2],
    pub backend: String,
    pub summary_counts: BTreeMap<ImpactScore, u64>,
    pub sites: Vec<SiteAnalysis>,
    pub popup_table: Vec<PopupRow>,
    pub skipped: Vec<SkippedSite>,
}

/// Partition pop-up findings out of the main table, count impacts and order
/// sites by severity (descending) then id.
pub fn build_report(
    meta: RunMeta,
    analyses: Vec<SiteAnalysis>,
    skips: Vec<SkippedSite>,
) -> Result<RunReport, ReportError> {
    let mut seen = HashSet::new();
    for id in analyses
        .iter()
        .map(|a| &a.site_id)
        .chain(skips.iter().map(|s| &s.site_id))
    {
        if !seen.insert(id.clone()) {
            return Err(ReportError::DuplicateSite(id.clone()));
        }
    }

    let mut sites = analyses;
    sites.sort_by(|a, b| b.xbi.impact.cmp(&a.xbi.impact).then_with(|| a.site_id.cmp(&b.site_id)));

    let mut popup_table = Vec::new();
    for site in &mut sites {
        let (popups, main): (Vec<_>, Vec<_>) = std::mem::take(&mut site.xbi.findings)
            .into_iter()
            .partition(|f| f.involves_popup);
        site.xbi.findings = main;
        popup_table.extend(popups.into_iter().map(|finding| PopupRow {
            site_id: site.site_id.clone(),
            finding,
        }));
    }

    let mut summary_counts: BTreeMap<ImpactScore, u64> = ImpactScore::ALL.iter().map(|&i| (i, 0)).collect();
    for site in &sites {
        *summary_counts.entry(site.xbi.impact).or_default() += 1;
    }

    let mut skipped = skips;
    skipped.sort_by(|a, b| a.site_id.cmp(&b.site_id));

    Ok(RunReport {
        schema: REPORT_SCHEMA_VERSION,
        run_id: meta.run_id,
        mode: meta.mode,
        created_at: meta.created_at,
        config_digest: meta.config_digest,
        browsers: meta.browsers,
        backend: meta.backend,
        summary_counts,
        sites,
        popup_table,
        skipped,
    })
}

/// Canonical encoding: fixed key order, two-space indent, trailing newline.
pub fn emit_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<RunReport, ReportError> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{PostFilter, StageFlags, XbiResult};

    pub(crate) fn site(id: &str, impact: ImpactScore, findings: &[(&str, bool)]) -> SiteAnalysis {
        SiteAnalysis {
            site_id: id.into(),
            browsers: ["firefox".into(), "chrome".into()],
            ads: None,
            dynamics: None,
            xbi: XbiResult {
                impact,
                findings: findings
                    .iter()
                    .map(|(d, p)| XbiFinding {
                        description: d.to_string(),
                        involves_popup: *p,
                    })
                    .collect(),
                raw_response: String::new(),
                post_filter: PostFilter::Kept,
                original: None,
                warnings: vec![],
            },
            stage_flags: StageFlags {
                ads_enabled: false,
                dynamics_enabled: false,
            },
            change_fraction: [0.0, 0.25],
        }
    }

    pub(crate) fn meta() -> RunMeta {
        RunMeta {
            run_id: "r1".into(),
            mode: RunMode::Xbi,
            created_at: "2026-01-01T00:00:00Z".into(),
            config_digest: "abc".into(),
            browsers: ["firefox".into(), "chrome".into()],
            backend: "mock".into(),
        }
    }

    #[test]
    fn counts_one_per_site() {
        let r = build_report(
            meta(),
            vec![
                site("a", ImpactScore::NoXbi, &[]),
                site("b", ImpactScore::MinorVisual, &[("font", false)]),
                site("c", ImpactScore::SignificantVisual, &[("blank", false)]),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(r.summary_counts[&ImpactScore::NoXbi], 1);
        assert_eq!(r.summary_counts[&ImpactScore::MinorVisual], 1);
        assert_eq!(r.summary_counts[&ImpactScore::SignificantVisual], 1);
        assert_eq!(r.summary_counts[&ImpactScore::BlockedUnsupported], 0);
        let order: Vec<_> = r.sites.iter().map(|s| s.site_id.as_str()).collect();
        assert_eq!(order, ["c", "b", "a"]);
    }

    #[test]
    fn popup_findings_move_to_their_own_table() {
        let r = build_report(
            meta(),
            vec![site(
                "p",
                ImpactScore::SignificantVisual,
                &[("newsletter modal covers page", true), ("menu shifted", false)],
            )],
            vec![],
        )
        .unwrap();
        assert_eq!(r.popup_table.len(), 1);
        assert_eq!(r.popup_table[0].site_id, "p");
        assert_eq!(r.sites[0].xbi.findings.len(), 1);
        assert_eq!(r.sites[0].xbi.findings[0].description, "menu shifted");
    }

    #[test]
    fn empty_report() {
        let r = build_report(meta(), vec![], vec![]).unwrap();
        assert!(r.summary_counts.values().all(|&c| c == 0));
        assert_eq!(r.summary_counts.len(), 4);
        let json = emit_json(&r);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["schema"], 1);
    }

    #[test]
    fn duplicates_rejected() {
        let err = build_report(
            meta(),
            vec![site("a", ImpactScore::NoXbi, &[])],
            vec![SkippedSite {
                site_id: "a".into(),
                reason: SkipReason::CaptureFailed,
                detail: String::new(),
            }],
        )
        .unwrap_err();
        assert!(matches!(err, ReportError::DuplicateSite(id) if id == "a"));
    }

    #[test]
    fn emit_parse_emit_is_stable() {
        let r = build_report(
            meta(),
            vec![site(
                "x",
                ImpactScore::BlockedUnsupported,
                &[("unsupported \"browser\" banner", false)],
            )],
            vec![SkippedSite {
                site_id: "blk".into(),
                reason: SkipReason::BlockedPrecapture,
                detail: "403 forbidden".into(),
            }],
        )
        .unwrap();
        let once = emit_json(&r);
        let back = parse_json(&once).unwrap();
        assert_eq!(back, r);
        assert_eq!(emit_json(&back), once);
    }
}
