//! Deterministic backend driven by a JSON mapping file.
//!
//! ```json
//! {
//!   "default": { "ads": "No.", "xbi": "Impact: no-XBI" },
//!   "images":  { "<sha256 of image>": "site-id" },
//!   "sites":   { "site-id": { "ads": "Yes\n- top banner", "xbi": "..." } }
//! }
//! ```
//!
//! The site is resolved from the first request image whose content hash is
//! listed. `xbi_without_ads` / `xbi_without_dynamics` replace `xbi` when the
//! rendered prompt lacks the corresponding exclusion section.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::backend::{image_hash, BackendError, Stage, VlmBackend, VlmRequest};
use super::prompts::{ADS_EXCLUSION_HEADER, DYNAMIC_EXCLUSION_HEADER};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CannedCompletions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ads: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbi_without_ads: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xbi_without_dynamics: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocked_check: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockMapping {
    #[serde(default)]
    pub default: CannedCompletions,
    #[serde(default)]
    pub images: BTreeMap<String, String>,
    #[serde(default)]
    pub sites: BTreeMap<String, CannedCompletions>,
}

impl MockMapping {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

const FALLBACK_NO: &str = "No.";
const FALLBACK_XBI: &str = "Impact: no-XBI\nFindings:";

#[derive(Debug, Clone, PartialEq)]
pub struct MockCall {
    pub stage: Stage,
    pub site: Option<String>,
    pub issued_at: Instant,
    pub prompt: String,
}

#[derive(Debug)]
pub struct MockBackend {
    identity: String,
    mapping: MockMapping,
    calls: Mutex<Vec<MockCall>>,
    transport_failures: AtomicUsize,
    failing_stage: Option<Stage>,
}

impl MockBackend {
    pub fn new(mapping: MockMapping) -> Self {
        MockBackend {
            identity: "mock".into(),
            mapping,
            calls: Mutex::new(Vec::new()),
            transport_failures: AtomicUsize::new(0),
            failing_stage: None,
        }
    }

    /// The next `n` calls fail with a transport error.
    pub fn with_transport_failures(self, n: usize) -> Self {
        self.transport_failures.store(n, Ordering::SeqCst);
        self
    }

    /// Every call for `stage` fails with a transport error.
    pub fn with_failing_stage(mut self, stage: Stage) -> Self {
        self.failing_stage = Some(stage);
        self
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().expect("mock log poisoned").clone()
    }

    pub fn mapping(&self) -> &MockMapping {
        &self.mapping
    }

    fn resolve_site(&self, request: &VlmRequest) -> Option<String> {
        request
            .images
            .iter()
            .find_map(|img| self.mapping.images.get(&image_hash(img)).cloned())
    }

    fn canned(&self, site: Option<&str>, pick: impl Fn(&CannedCompletions) -> Option<&String>) -> Option<String> {
        site.and_then(|s| self.mapping.sites.get(s))
            .and_then(&pick)
            .or_else(|| pick(&self.mapping.default))
            .cloned()
    }
}

impl VlmBackend for MockBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn complete(&self, request: &VlmRequest) -> Result<String, BackendError> {
        let site = self.resolve_site(request);
        self.calls.lock().expect("mock log poisoned").push(MockCall {
            stage: request.stage,
            site: site.clone(),
            issued_at: request.issued_at,
            prompt: request.prompt.clone(),
        });
        if self.failing_stage == Some(request.stage) {
            return Err(BackendError::Transport(format!(
                "injected failure for {}",
                request.stage.name()
            )));
        }
        if self
            .transport_failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(BackendError::Transport("injected transient failure".into()));
        }
        let site = site.as_deref();
        let text = match request.stage {
            Stage::Ads => self.canned(site, |c| c.ads.as_ref()),
            Stage::Dynamics => self.canned(site, |c| c.dynamics.as_ref()),
            Stage::BlockedCheck => self.canned(site, |c| c.blocked_check.as_ref()),
            Stage::Xbi => {
                let entry = site.and_then(|s| self.mapping.sites.get(s));
                let special = entry.and_then(|e| {
                    if !request.prompt.contains(ADS_EXCLUSION_HEADER) && e.xbi_without_ads.is_some() {
                        e.xbi_without_ads.clone()
                    } else if !request.prompt.contains(DYNAMIC_EXCLUSION_HEADER) {
                        e.xbi_without_dynamics.clone()
                    } else {
                        None
                    }
                });
                special.or_else(|| self.canned(site, |c| c.xbi.as_ref()))
            }
        };
        Ok(text.unwrap_or_else(|| {
            if request.stage == Stage::Xbi {
                FALLBACK_XBI
            } else {
                FALLBACK_NO
            }
            .to_string()
        }))
    }
}
