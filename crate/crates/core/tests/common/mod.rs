#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use xbiscope_core::capture::store::RunMode;
use xbiscope_core::detector::{
    AdFinding, DynElement, DynFinding, DynKind, FilteredVerdict, ImpactScore, PostFilter, SiteAnalysis, StageFlags,
    XbiFinding, XbiResult,
};
use xbiscope_core::report::RunMeta;

pub fn meta() -> RunMeta {
    RunMeta {
        run_id: "run-1".into(),
        mode: RunMode::Xbi,
        created_at: "2026-03-01T10:00:00Z".into(),
        config_digest: "0f".repeat(32),
        browsers: ["firefox".into(), "chrome".into()],
        backend: "mock".into(),
    }
}

pub fn finding(description: &str, involves_popup: bool) -> XbiFinding {
    XbiFinding {
        description: description.into(),
        involves_popup,
    }
}

pub fn site(id: &str, impact: ImpactScore, findings: Vec<XbiFinding>) -> SiteAnalysis {
    SiteAnalysis {
        site_id: id.into(),
        browsers: ["firefox".into(), "chrome".into()],
        ads: None,
        dynamics: None,
        xbi: XbiResult {
            impact,
            findings,
            raw_response: format!("Impact: {}", impact.label()),
            post_filter: PostFilter::Kept,
            original: None,
            warnings: vec![],
        },
        stage_flags: StageFlags {
            ads_enabled: false,
            dynamics_enabled: false,
        },
        change_fraction: [0.0, 0.0],
    }
}

/// A site exercising every optional field.
pub fn rich_site(id: &str) -> SiteAnalysis {
    let ad = |present: bool| AdFinding {
        present,
        regions: if present {
            vec!["right column box".into()]
        } else {
            vec![]
        },
        raw_response: if present {
            "Yes\n- right column box".into()
        } else {
            "No.".into()
        },
    };
    let dynf = |present: bool| DynFinding {
        present,
        elements: if present {
            vec![DynElement {
                kind: DynKind::Carousel,
                description: "hero slider".into(),
            }]
        } else {
            vec![]
        },
        raw_response: if present {
            "Yes\n- carousel".into()
        } else {
            "No.".into()
        },
    };
    let mut s = site(id, ImpactScore::NoXbi, vec![]);
    s.ads = Some([ad(true), ad(false)]);
    s.dynamics = Some([dynf(false), dynf(true)]);
    s.stage_flags = StageFlags {
        ads_enabled: true,
        dynamics_enabled: true,
    };
    s.change_fraction = [0.0, 0.125];
    s.xbi.post_filter = PostFilter::DroppedBlocked;
    s.xbi.original = Some(FilteredVerdict {
        impact: ImpactScore::SignificantVisual,
        findings: vec![finding("page did not load", false)],
        check_response: "Yes, a bot check.".into(),
    });
    s.xbi.warnings = vec!["stage 3 answer re-asked once".into()];
    s
}

/// Validate JSON files against a schema with Python's `jsonschema`.
/// `None` when the validator is not installed; otherwise one result per file.
pub fn python_validate(schema: &Path, instances: &[&Path]) -> Option<Vec<Result<(), String>>> {
    const SCRIPT: &str = r#"
import json, sys
try:
    import jsonschema
except ImportError:
    print("MISSING")
    sys.exit(0)
schema = json.load(open(sys.argv[1]))
jsonschema.Draft202012Validator.check_schema(schema)
v = jsonschema.Draft202012Validator(schema)
for p in sys.argv[2:]:
    errs = sorted(v.iter_errors(json.load(open(p))), key=lambda e: list(e.path))
    print("OK" if not errs else "ERR " + errs[0].message.replace("\n", " "))
"#;
    let out = Command::new("python3")
        .arg("-c")
        .arg(SCRIPT)
        .arg(schema)
        .args(instances)
        .output()
        .ok()?;
    assert!(
        out.status.success(),
        "validator crashed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    if text.trim() == "MISSING" {
        return None;
    }
    Some(
        text.lines()
            .map(|l| if l == "OK" { Ok(()) } else { Err(l.to_string()) })
            .collect(),
    )
}
