//! Prompt templates. Defaults are compiled in; a directory holding any of
//! `ads.txt`, `dynamics.txt`, `xbi.txt`, `blocked_check.txt` or
//! `impact_definitions.txt` overrides the matching template.

use std::path::Path;

use super::{AdFinding, DynFinding};

/// First line of the ad exclusion section in the stage-3 prompt.
pub const ADS_EXCLUSION_HEADER: &str = "Advertisements to ignore:";
/// First line of the dynamic-element exclusion section in the stage-3 prompt.
pub const DYNAMIC_EXCLUSION_HEADER: &str = "Dynamic elements to ignore:";

/// Bumped whenever a bundled template changes.
pub const TEMPLATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub ads: String,
    pub dynamics: String,
    pub xbi: String,
    pub blocked_check: String,
    pub impact_definitions: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            ads: include_str!("../../prompts/ads.txt").into(),
            dynamics: include_str!("../../prompts/dynamics.txt").into(),
            xbi: include_str!("../../prompts/xbi.txt").into(),
            blocked_check: include_str!("../../prompts/blocked_check.txt").into(),
            impact_definitions: include_str!("../../prompts/impact_definitions.txt").into(),
        }
    }
}

impl PromptSet {
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = PromptSet::default();
        let slots: [(&str, &mut String); 5] = [
            ("ads.txt", &mut set.ads),
            ("dynamics.txt", &mut set.dynamics),
            ("xbi.txt", &mut set.xbi),
            ("blocked_check.txt", &mut set.blocked_check),
            ("impact_definitions.txt", &mut set.impact_definitions),
        ];
        for (file, slot) in slots {
            let path = dir.join(file);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }

    pub fn render_ads(&self) -> String {
        self.ads.clone()
    }

    pub fn render_dynamics(&self) -> String {
        self.dynamics.clone()
    }

    /// Stage-3 prompt. An exclusion section is present exactly when the
    /// corresponding stage ran (`Some`), even if it found nothing.
    pub fn render_xbi(
        &self,
        browsers: &[String; 2],
        ads: Option<&[AdFinding; 2]>,
        dynamics: Option<&[DynFinding; 2]>,
    ) -> String {
        let ads_section = ads
            .map(|pair| {
                let items = pair
                    .iter()
                    .zip(browsers)
                    .flat_map(|(f, b)| f.regions.iter().map(move |r| format!("- [{b}] {r}")));
                section(ADS_EXCLUSION_HEADER, items)
            })
            .unwrap_or_default();
        let dyn_section = dynamics
            .map(|pair| {
                let items = pair.iter().zip(browsers).flat_map(|(f, b)| {
                    f.elements
                        .iter()
                        .map(move |e| format!("- [{b}] {}: {}", e.kind.name(), e.description))
                });
                section(DYNAMIC_EXCLUSION_HEADER, items)
            })
            .unwrap_or_default();
        self.xbi
            .replace("{exclusions_ads}", &ads_section)
            .replace("{exclusions_dynamic}", &dyn_section)
            .replace("{impact_definitions}", self.impact_definitions.trim_end())
    }

    pub fn render_blocked_check(&self, findings: &[String]) -> String {
        let list = if findings.is_empty() {
            "- (no individual findings listed)".to_string()
        } else {
            findings.iter().map(|f| format!("- {f}")).collect::<Vec<_>>().join("\n")
        };
        self.blocked_check.replace("{findings}", &list)
    }
}

fn section(header: &str, items: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    let mut any = false;
    for item in items {
        out.push_str(&item);
        out.push('\n');
        any = true;
    }
    if !any {
        out.push_str("- none found\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{DynElement, DynKind};

    fn browsers() -> [String; 2] {
        ["firefox".into(), "chrome".into()]
    }

    #[test]
    fn sections_follow_stage_flags() {
        let p = PromptSet::default();
        let ads = [
            AdFinding {
                present: true,
                regions: vec!["top banner".into()],
                raw_response: String::new(),
            },
            AdFinding {
                present: false,
                regions: vec![],
                raw_response: String::new(),
            },
        ];
        let dyns = [
            DynFinding {
                present: true,
                elements: vec![DynElement {
                    kind: DynKind::Carousel,
                    description: "hero".into(),
                }],
                raw_response: String::new(),
            },
            DynFinding {
                present: false,
                elements: vec![],
                raw_response: String::new(),
            },
        ];
        let full = p.render_xbi(&browsers(), Some(&ads), Some(&dyns));
        assert!(full.contains(ADS_EXCLUSION_HEADER));
        assert!(full.contains("- [firefox] top banner"));
        assert!(full.contains("- [firefox] carousel: hero"));
        assert!(!full.contains("{impact_definitions}"));
        assert!(full.contains("blocked-unsupported:"));

        let no_ads = p.render_xbi(&browsers(), None, Some(&dyns));
        assert!(!no_ads.contains(ADS_EXCLUSION_HEADER));
        assert!(no_ads.contains(DYNAMIC_EXCLUSION_HEADER));

        let neither = p.render_xbi(&browsers(), None, None);
        assert!(!neither.contains(DYNAMIC_EXCLUSION_HEADER));
        assert!(!neither.contains('{'));
    }

    #[test]
    fn empty_stage_still_renders_section() {
        let p = PromptSet::default();
        let none = AdFinding {
            present: false,
            regions: vec![],
            raw_response: String::new(),
        };
        let out = p.render_xbi(&browsers(), Some(&[none.clone(), none]), None);
        assert!(out.contains("Advertisements to ignore:\n- none found"));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ads.txt"), "custom ads prompt").unwrap();
        let p = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(p.ads, "custom ads prompt");
        assert_eq!(p.xbi, PromptSet::default().xbi);
    }
}
