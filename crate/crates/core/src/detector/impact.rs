use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Severity of a cross-browser inconsistency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactScore {
    NoXbi,
    MinorVisual,
    SignificantVisual,
    BlockedUnsupported,
}

impl ImpactScore {
    /// Fixed label order used by confusion matrices.
    pub const ALL: [ImpactScore; 4] = [
        ImpactScore::NoXbi,
        ImpactScore::MinorVisual,
        ImpactScore::SignificantVisual,
        ImpactScore::BlockedUnsupported,
    ];

    /// Hyphenated spelling used in prompts, completions and truth files.
    pub fn label(self) -> &'static str {
        match self {
            ImpactScore::NoXbi => "no-XBI",
            ImpactScore::MinorVisual => "minor-visual",
            ImpactScore::SignificantVisual => "significant-visual",
            ImpactScore::BlockedUnsupported => "blocked-unsupported",
        }
    }

    /// snake_case identifier, matching the JSON encoding.
    pub fn key(self) -> &'static str {
        match self {
            ImpactScore::NoXbi => "no_xbi",
            ImpactScore::MinorVisual => "minor_visual",
            ImpactScore::SignificantVisual => "significant_visual",
            ImpactScore::BlockedUnsupported => "blocked_unsupported",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ImpactScore::NoXbi => 0,
            ImpactScore::MinorVisual => 1,
            ImpactScore::SignificantVisual => 2,
            ImpactScore::BlockedUnsupported => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Coarse severity; significant-visual and blocked-unsupported share a rank.
    pub fn severity(self) -> u8 {
        match self {
            ImpactScore::NoXbi => 0,
            ImpactScore::MinorVisual => 1,
            ImpactScore::SignificantVisual | ImpactScore::BlockedUnsupported => 2,
        }
    }

    pub fn is_xbi(self) -> bool {
        self != ImpactScore::NoXbi
    }

    /// Letters only, lowercased: the form label matching is done in.
    pub(crate) fn squashed(self) -> &'static str {
        match self {
            ImpactScore::NoXbi => "noxbi",
            ImpactScore::MinorVisual => "minorvisual",
            ImpactScore::SignificantVisual => "significantvisual",
            ImpactScore::BlockedUnsupported => "blockedunsupported",
        }
    }
}

impl Ord for ImpactScore {
    fn cmp(&self, other: &Self) -> Ordering {
        self.severity()
            .cmp(&other.severity())
            .then_with(|| self.key().cmp(other.key()))
    }
}

impl PartialOrd for ImpactScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ImpactScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown impact label {0:?}")]
pub struct UnknownImpact(pub String);

impl FromStr for ImpactScore {
    type Err = UnknownImpact;

    /// Accepts any case and `-`, `_` or space as the separator.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        ImpactScore::ALL
            .into_iter()
            .find(|i| i.squashed() == squashed)
            .ok_or_else(|| UnknownImpact(s.to_string()))
    }
}
