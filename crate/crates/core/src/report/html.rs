use std::fmt::Write as _;
use std::path::Path;

use super::{RunReport, SkipReason};
use crate::capture::store::RunMode;
use crate::detector::{ImpactScore, PostFilter};

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn badge_color(impact: ImpactScore) -> &'static str {
    match impact {
        ImpactScore::NoXbi => "#4caf50",
        ImpactScore::MinorVisual => "#ff9800",
        ImpactScore::SignificantVisual => "#f44336",
        ImpactScore::BlockedUnsupported => "#7b1fa2",
    }
}

fn badge(impact: ImpactScore) -> String {
    format!(
        r#"<span style="background:{};color:#fff;padding:2px 8px;border-radius:10px;font-size:12px">{}</span>"#,
        badge_color(impact),
        impact.label()
    )
}

fn skip_label(reason: SkipReason) -> &'static str {
    match reason {
        SkipReason::BlockedPrecapture => "blocked before capture",
        SkipReason::CaptureFailed => "capture failed",
        SkipReason::StageFailed => "analysis stage failed",
    }
}

/// Relative path of a site's overlay for one browser.
pub fn overlay_rel_path(site_id: &str, browser: &str) -> String {
    format!("{site_id}/{browser}/overlay.png")
}

const CELL: &str = "border:1px solid #ddd;padding:6px;vertical-align:top";

/// Self-contained page; image links are relative to `image_root`, which is
/// only used to check that they exist.
pub fn render_html(report: &RunReport, image_root: &Path) -> String {
    let mut warnings = Vec::new();
    let mut rows = String::new();
    for site in &report.sites {
        let mut images = String::new();
        for browser in &site.browsers {
            let rel = overlay_rel_path(&site.site_id, browser);
            if image_root.join(&rel).is_file() {
                let _ = write!(
                    images,
                    r#"<td style="{CELL}"><a href="{0}"><img src="{0}" alt="{1}" style="max-width:320px;max-height:480px"></a></td>"#,
                    escape_html(&rel),
                    escape_html(browser)
                );
            } else {
                warnings.push(format!("missing image {rel}"));
                let _ = write!(
                    images,
                    r#"<td style="{CELL};color:#999" class="missing">image missing: {}</td>"#,
                    escape_html(&rel)
                );
            }
        }
        let findings = if site.xbi.findings.is_empty() {
            "<em>none</em>".to_string()
        } else {
            let items: String = site
                .xbi
                .findings
                .iter()
                .map(|f| format!("<li>{}</li>", escape_html(&f.description)))
                .collect();
            format!("<ul>{items}</ul>")
        };
        let filtered = match (&site.xbi.post_filter, &site.xbi.original) {
            (PostFilter::DroppedBlocked, Some(o)) => format!(
                r#"<div style="color:#666;font-size:12px">filtered as blocked page (was {})</div>"#,
                o.impact.label()
            ),
            _ => String::new(),
        };
        let _ = writeln!(
            rows,
            r#"<tr class="site-row"><td style="{CELL}">{}</td><td style="{CELL}">{}{}</td><td style="{CELL}">{}</td>{}</tr>"#,
            escape_html(&site.site_id),
            badge(site.xbi.impact),
            filtered,
            findings,
            images
        );
    }

    let mut popup_rows = String::new();
    for row in &report.popup_table {
        let _ = writeln!(
            popup_rows,
            r#"<tr><td style="{CELL}">{}</td><td style="{CELL}">{}</td></tr>"#,
            escape_html(&row.site_id),
            escape_html(&row.finding.description)
        );
    }

    let mut skipped_rows = String::new();
    for s in &report.skipped {
        let _ = writeln!(
            skipped_rows,
            r#"<tr><td style="{CELL}">{}</td><td style="{CELL}">{}</td><td style="{CELL}">{}</td></tr>"#,
            escape_html(&s.site_id),
            skip_label(s.reason),
            escape_html(&s.detail)
        );
    }

    let counts: String = report
        .summary_counts
        .iter()
        .rev()
        .map(|(impact, n)| {
            format!(
                r#"<span style="margin-right:16px">{} <b>{n}</b></span>"#,
                badge(*impact)
            )
        })
        .collect();

    let warning_block = if warnings.is_empty() {
        String::new()
    } else {
        let items: String = warnings
            .iter()
            .map(|w| format!("<li>{}</li>", escape_html(w)))
            .collect();
        format!(
            r#"<div class="warnings" style="background:#fff3cd;padding:8px;margin:8px 0"><b>Warnings</b><ul>{items}</ul></div>"#
        )
    };

    let mode = match report.mode {
        RunMode::Xbi => "cross-browser",
        RunMode::Regression => "regression",
    };
    let [a, b] = &report.browsers;
    let heads: String = report
        .browsers
        .iter()
        .map(|b| format!(r#"<th style="{CELL}">{}</th>"#, escape_html(b)))
        .collect();

    format!(
        r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>XBI report {run_id}</title>
</head>
<body style="font-family:sans-serif;margin:24px;color:#222">
<h1>Cross-browser inconsistency report</h1>
<p>Run <code>{run_id}</code> ({mode}: {a} vs {b}), captured {created}, backend {backend}, config <code>{digest}</code></p>
<div class="summary" style="margin:12px 0">{counts}</div>
{warning_block}
<h2>Findings</h2>
<table id="main-table" style="border-collapse:collapse">
<thead><tr><th style="{CELL}">Site</th><th style="{CELL}">Impact</th><th style="{CELL}">Findings</th>{heads}</tr></thead>
<tbody>
{rows}</tbody>
</table>
<h2>Pop-up related findings</h2>
<table id="popup-table" title="Pop-up related findings" style="border-collapse:collapse">
<thead><tr><th style="{CELL}">Site</th><th style="{CELL}">Finding</th></tr></thead>
<tbody>
{popup_rows}</tbody>
</table>
<h2>Skipped sites</h2>
<table id="skipped-table" style="border-collapse:collapse">
<thead><tr><th style="{CELL}">Site</th><th style="{CELL}">Reason</th><th style="{CELL}">Detail</th></tr></thead>
<tbody>
{skipped_rows}</tbody>
</table>
</body>
</html>
"#,
        run_id = escape_html(&report.run_id),
        a = escape_html(a),
        b = escape_html(b),
        created = escape_html(&report.created_at),
        backend = escape_html(&report.backend),
        digest = escape_html(&report.config_digest),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::tests::{meta, site};
    use crate::report::{build_report, SkippedSite};

    fn write_overlays(root: &Path, site_id: &str) {
        for b in ["firefox", "chrome"] {
            let p = root.join(overlay_rel_path(site_id, b));
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            image::RgbImage::new(2, 2).save(&p).unwrap();
        }
    }

    #[test]
    fn one_site_one_row_two_images() {
        let dir = tempfile::tempdir().unwrap();
        write_overlays(dir.path(), "s1");
        let r = build_report(
            meta(),
            vec![site("s1", ImpactScore::SignificantVisual, &[("blank page", false)])],
            vec![],
        )
        .unwrap();
        let html = render_html(&r, dir.path());
        assert_eq!(html.matches(r#"class="site-row""#).count(), 1);
        assert_eq!(html.matches("<img ").count(), 2);
        assert!(html.contains(r#"href="s1/firefox/overlay.png""#));
        assert!(!html.contains("Warnings"));
    }

    #[test]
    fn popup_table_present() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_report(
            meta(),
            vec![site(
                "p",
                ImpactScore::SignificantVisual,
                &[("cookie consent banner", true)],
            )],
            vec![],
        )
        .unwrap();
        let html = render_html(&r, dir.path());
        assert_eq!(html.matches("<table").count(), 3);
        assert!(html.contains(r#"<table id="popup-table" title="Pop-up related findings""#));
        let popup_section = html.split(r#"id="popup-table""#).nth(1).unwrap();
        assert!(popup_section.contains("cookie consent banner"));
    }

    #[test]
    fn model_text_is_escaped() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_report(
            meta(),
            vec![site(
                "<b>x</b>",
                ImpactScore::MinorVisual,
                &[("<script>alert(1)</script>", false)],
            )],
            vec![SkippedSite {
                site_id: "s&k".into(),
                reason: super::SkipReason::StageFailed,
                detail: "\"quoted\" <tag>".into(),
            }],
        )
        .unwrap();
        let html = render_html(&r, dir.path());
        assert!(!html.contains("<script>"));
        assert!(html.contains("&lt;script&gt;alert(1)&lt;/script&gt;"));
        assert!(!html.contains("<b>x</b>"));
        assert!(html.contains("s&amp;k"));
    }

    #[test]
    fn missing_images_become_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_report(meta(), vec![site("gone", ImpactScore::NoXbi, &[])], vec![]).unwrap();
        let html = render_html(&r, dir.path());
        assert_eq!(html.matches(r#"class="missing""#).count(), 2);
        assert!(html.contains("Warnings"));
        assert!(!html.contains("<img "));
    }
}
