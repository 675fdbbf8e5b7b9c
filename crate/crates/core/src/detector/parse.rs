//! Turning model completions into findings.

use thiserror::Error;

use super::{AdFinding, DynElement, DynFinding, DynKind, ImpactScore, XbiFinding};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no impact label found")]
    NoImpactLabel,
    #[error("ambiguous impact: found {}", .0.iter().map(|i| i.label()).collect::<Vec<_>>().join(", "))]
    AmbiguousImpact(Vec<ImpactScore>),
    #[error("no standalone yes/no answer found")]
    NoYesNo,
}

/// Words whose presence marks a finding as pop-up related.
pub const POPUP_KEYWORDS: [&str; 5] = ["pop-up", "popup", "modal", "dialog", "consent"];

/// Exactly one distinct label, matched case-insensitively and ignoring
/// `-`, `_` and spaces.
pub fn parse_impact(completion: &str) -> Result<ImpactScore, ParseError> {
    let squashed: String = completion
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .flat_map(char::to_lowercase)
        .collect();
    let found: Vec<ImpactScore> = ImpactScore::ALL
        .into_iter()
        .filter(|i| squashed.contains(i.squashed()))
        .collect();
    match found.len() {
        0 => Err(ParseError::NoImpactLabel),
        1 => Ok(found[0]),
        _ => Err(ParseError::AmbiguousImpact(found)),
    }
}

/// The first standalone "yes" or "no" token decides.
pub fn parse_yes_no(completion: &str) -> Result<bool, ParseError> {
    completion
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|tok| {
            if tok.eq_ignore_ascii_case("yes") {
                Some(true)
            } else if tok.eq_ignore_ascii_case("no") {
                Some(false)
            } else {
                None
            }
        })
        .ok_or(ParseError::NoYesNo)
}

pub fn involves_popup(description: &str) -> bool {
    let lower = description.to_lowercase();
    POPUP_KEYWORDS.iter().any(|k| lower.contains(k))
}

/// Lines that start with a list marker, marker stripped.
fn bullets(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter_map(|line| {
        let t = line.trim_start();
        let rest = t
            .strip_prefix("- ")
            .or_else(|| t.strip_prefix("* "))
            .or_else(|| t.strip_prefix("• "))?;
        let rest = rest.trim();
        (!rest.is_empty()).then_some(rest)
    })
}

pub fn parse_ad_finding(completion: &str) -> Result<AdFinding, ParseError> {
    let present = parse_yes_no(completion)?;
    let regions = if present {
        bullets(completion).map(str::to_string).collect()
    } else {
        Vec::new()
    };
    Ok(AdFinding {
        present,
        regions,
        raw_response: completion.to_string(),
    })
}

pub fn parse_dyn_finding(completion: &str) -> Result<DynFinding, ParseError> {
    let present = parse_yes_no(completion)?;
    let elements = if present {
        bullets(completion)
            .map(|b| match b.split_once(':') {
                Some((kind, desc)) => DynElement {
                    kind: DynKind::from_text(kind),
                    description: desc.trim().to_string(),
                },
                None => DynElement {
                    kind: DynKind::from_text(b),
                    description: b.to_string(),
                },
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(DynFinding {
        present,
        elements,
        raw_response: completion.to_string(),
    })
}

/// Impact plus findings from a stage-3 completion. The label is read from an
/// `Impact:` line when there is one, otherwise from the whole text.
pub fn parse_xbi(completion: &str) -> Result<(ImpactScore, Vec<XbiFinding>), ParseError> {
    let impact_line = completion.lines().find_map(|l| {
        let t = l.trim().trim_start_matches(['*', '#', ' ']);
        let lower = t.to_ascii_lowercase();
        lower.starts_with("impact").then(|| t.to_string())
    });
    let impact = match impact_line.as_deref().map(parse_impact) {
        Some(Ok(i)) => i,
        _ => parse_impact(completion)?,
    };
    if impact == ImpactScore::NoXbi {
        return Ok((impact, Vec::new()));
    }
    let mut descriptions: Vec<String> = bullets(completion).map(str::to_string).collect();
    if descriptions.is_empty() {
        let rest: Vec<&str> = completion
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .filter(|l| !l.to_ascii_lowercase().starts_with("impact"))
            .filter(|l| !l.eq_ignore_ascii_case("findings:"))
            .collect();
        if !rest.is_empty() {
            descriptions.push(rest.join(" "));
        }
    }
    let findings = descriptions
        .into_iter()
        .map(|description| XbiFinding {
            involves_popup: involves_popup(&description),
            description,
        })
        .collect();
    Ok((impact, findings))
}

impl DynKind {
    /// Map a free-text kind onto the fixed vocabulary; unknown text is `Other`.
    pub fn from_text(text: &str) -> DynKind {
        let t = text.to_lowercase();
        let has = |k: &str| t.contains(k);
        if has("slider") {
            DynKind::Slider
        } else if has("carousel") {
            DynKind::Carousel
        } else if has("progress") {
            DynKind::ProgressBar
        } else if has("video") {
            DynKind::Video
        } else if has("chart") || has("graph") {
            DynKind::DynamicChart
        } else if has("location") {
            DynKind::LocationRecommendation
        } else if has("personali") || has("recommend") {
            DynKind::PersonalizedRecommendation
        } else if has("real-time") || has("real time") || has("realtime") || has("live") {
            DynKind::RealTimeContent
        } else {
            DynKind::Other
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impact_examples() {
        assert_eq!(
            parse_impact("Impact: significant-visual. The carousel...").unwrap(),
            ImpactScore::SignificantVisual
        );
        assert_eq!(parse_impact("no-XBI").unwrap(), ImpactScore::NoXbi);
        assert_eq!(
            parse_impact("it is minor-visual or maybe significant-visual").unwrap_err(),
            ParseError::AmbiguousImpact(vec![ImpactScore::MinorVisual, ImpactScore::SignificantVisual])
        );
        assert_eq!(parse_impact("looks fine").unwrap_err(), ParseError::NoImpactLabel);
    }

    #[test]
    fn yes_no_examples() {
        assert!(parse_yes_no("Yes, there is a banner ad at the top.").unwrap());
        assert!(!parse_yes_no("No.").unwrap());
        assert!(!parse_yes_no("The answer is:\nno").unwrap());
        assert!(!parse_yes_no("Nope, none. No ads.").unwrap());
        assert_eq!(parse_yes_no("Maybe"), Err(ParseError::NoYesNo));
    }

    #[test]
    fn ad_finding_regions_only_when_present() {
        let f = parse_ad_finding("Yes\n- top leaderboard\n- sidebar tile").unwrap();
        assert!(f.present);
        assert_eq!(f.regions, ["top leaderboard", "sidebar tile"]);
        let f = parse_ad_finding("No\n- stray bullet").unwrap();
        assert!(!f.present);
        assert!(f.regions.is_empty());
    }

    #[test]
    fn dyn_kinds_map_to_vocabulary() {
        let f = parse_dyn_finding(
            "Yes\n- carousel: hero slides\n- video: player in the middle\n- Location-based recommendation: stores near you\n- ticker: something\n- live scores",
        )
        .unwrap();
        let kinds: Vec<_> = f.elements.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [
                DynKind::Carousel,
                DynKind::Video,
                DynKind::LocationRecommendation,
                DynKind::Other,
                DynKind::RealTimeContent
            ]
        );
        assert_eq!(f.elements[0].description, "hero slides");
    }

    #[test]
    fn xbi_parsing() {
        let (i, f) = parse_xbi(
            "Impact: significant-visual\nFindings:\n- hero image missing in B\n- cookie consent pop-up only in A",
        )
        .unwrap();
        assert_eq!(i, ImpactScore::SignificantVisual);
        assert_eq!(f.len(), 2);
        assert!(!f[0].involves_popup);
        assert!(f[1].involves_popup);

        // the label line wins over label words inside findings
        let (i, _) = parse_xbi("Impact: minor-visual\nFindings:\n- not a significant visual change").unwrap();
        assert_eq!(i, ImpactScore::MinorVisual);

        let (i, f) = parse_xbi("Impact: no-XBI\nFindings:\n- nothing").unwrap();
        assert_eq!(i, ImpactScore::NoXbi);
        assert!(f.is_empty());

        let (_, f) = parse_xbi("significant-visual: the page in B is blank").unwrap();
        assert_eq!(f.len(), 1);

        assert!(parse_xbi("Findings:\n- stuff").is_err());
    }
}
