//! Synthetic paired-site corpus with labeled inconsistencies, plus the local
//! servers and sessions that exercise the pipeline without a real browser.
//!
//! Tree layout written by [`generate_corpus`]:
//! `manifest.json`, `truth.csv`, `{site_id}/a.html`, `{site_id}/b.html` and
//! per-site PNG assets.

pub mod browser;
pub mod dom;
pub mod mockmap;
pub mod pages;
pub mod render;
pub mod server;
pub mod tracker;
pub mod webdriver_stub;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detector::ImpactScore;
use crate::evaluate::{write_truth_csv, GroundTruth, TruthLabel};
pub use pages::Variant;

pub const CORPUS_MANIFEST: &str = "manifest.json";
pub const TRUTH_CSV: &str = "truth.csv";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("duplicate site_id {0}")]
    DuplicateSite(String),
    #[error("invalid site_id {0:?}: use letters, digits, '-' and '_'")]
    InvalidSiteId(String),
    #[error("truth for {site_id} does not match injection {injection:?}")]
    InconsistentTruth { site_id: String, injection: Injection },
    #[error("corpus manifest: {0}")]
    Manifest(String),
    #[error("could not start server on {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    None,
    LayoutShift,
    MissingImage,
    BlankPage,
    UnsupportedBanner,
    FontChange,
    PopupBanner,
    AdSlot,
    Carousel,
    VideoPlaceholder,
    Blocked403,
    BlockedBot,
}

impl Injection {
    pub const ALL: [Injection; 12] = [
        Injection::None,
        Injection::LayoutShift,
        Injection::MissingImage,
        Injection::BlankPage,
        Injection::UnsupportedBanner,
        Injection::FontChange,
        Injection::PopupBanner,
        Injection::AdSlot,
        Injection::Carousel,
        Injection::VideoPlaceholder,
        Injection::Blocked403,
        Injection::BlockedBot,
    ];

    /// Fixed truth mapping. Blocked pages and pop-ups that the filter or
    /// post filter should neutralise are labeled by what remains after them.
    pub fn truth(self) -> FixtureTruth {
        use Injection::*;
        let impact = match self {
            LayoutShift | MissingImage | BlankPage | PopupBanner => ImpactScore::SignificantVisual,
            UnsupportedBanner => ImpactScore::BlockedUnsupported,
            FontChange => ImpactScore::MinorVisual,
            None | AdSlot | Carousel | VideoPlaceholder | Blocked403 | BlockedBot => ImpactScore::NoXbi,
        };
        FixtureTruth {
            impact,
            ads_present: self == AdSlot,
            dynamics_present: matches!(self, Carousel | VideoPlaceholder),
        }
    }

    pub fn default_axis(self) -> VariantAxis {
        use Injection::*;
        match self {
            None | Blocked403 | Carousel | VideoPlaceholder => VariantAxis::Static,
            _ => VariantAxis::PerBrowser,
        }
    }

    pub fn short(self) -> &'static str {
        use Injection::*;
        match self {
            None => "ctl",
            LayoutShift => "ls",
            MissingImage => "mi",
            BlankPage => "bp",
            UnsupportedBanner => "ub",
            FontChange => "fc",
            PopupBanner => "pop",
            AdSlot => "ad",
            Carousel => "car",
            VideoPlaceholder => "vid",
            Blocked403 => "blk",
            BlockedBot => "bot",
        }
    }

    /// Animated pages change between frames of one burst.
    pub fn animated(self) -> bool {
        matches!(self, Injection::Carousel | Injection::VideoPlaceholder)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantAxis {
    /// Variants `a` and `b` differ.
    PerBrowser,
    /// Content changes on every request.
    PerReload,
    /// Same markup for both variants and every request.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub impact: ImpactScore,
    pub ads_present: bool,
    pub dynamics_present: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub site_id: String,
    pub injection: Injection,
    pub variant_axis: VariantAxis,
    pub truth: FixtureTruth,
}

impl FixtureSpec {
    pub fn new(site_id: impl Into<String>, injection: Injection) -> Self {
        FixtureSpec {
            site_id: site_id.into(),
            injection,
            variant_axis: injection.default_axis(),
            truth: injection.truth(),
        }
    }

    pub fn per_reload(mut self) -> Self {
        self.variant_axis = VariantAxis::PerReload;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub specs: Vec<FixtureSpec>,
    pub seed: u64,
}

fn valid_site_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl CorpusManifest {
    /// One site per injection kind.
    pub fn standard_12(seed: u64) -> Self {
        let specs = Injection::ALL
            .iter()
            .map(|&inj| FixtureSpec::new(format!("{}01", inj.short()), inj))
            .collect();
        CorpusManifest { specs, seed }
    }

    /// The 12 kinds plus repeats and a per-reload background site.
    pub fn standard_20(seed: u64) -> Self {
        let mut m = Self::standard_12(seed);
        for inj in [
            Injection::None,
            Injection::LayoutShift,
            Injection::MissingImage,
            Injection::FontChange,
            Injection::AdSlot,
            Injection::Carousel,
            Injection::UnsupportedBanner,
        ] {
            m.specs.push(FixtureSpec::new(format!("{}02", inj.short()), inj));
        }
        m.specs.push(FixtureSpec::new("bgr01", Injection::None).per_reload());
        m
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        let mut seen = HashSet::new();
        for s in &self.specs {
            if !valid_site_id(&s.site_id) {
                return Err(FixtureError::InvalidSiteId(s.site_id.clone()));
            }
            if !seen.insert(s.site_id.as_str()) {
                return Err(FixtureError::DuplicateSite(s.site_id.clone()));
            }
            if s.truth != s.injection.truth() {
                return Err(FixtureError::InconsistentTruth {
                    site_id: s.site_id.clone(),
                    injection: s.injection,
                });
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        self.specs
            .iter()
            .map(|s| {
                (
                    s.site_id.clone(),
                    TruthLabel {
                        impact: s.truth.impact,
                        ads_present: s.truth.ads_present,
                        dynamics_present: s.truth.dynamics_present,
                    },
                )
            })
            .collect()
    }

    pub fn spec(&self, site_id: &str) -> Option<&FixtureSpec> {
        self.specs.iter().find(|s| s.site_id == site_id)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = fs::read_to_string(path)?;
        let m: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| FixtureError::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }
}

fn site_rng(seed: u64, site_id: &str) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(site_id.as_bytes())
        .finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn hero_image(rng: &mut impl Rng) -> RgbImage {
    let base = [
        rng.random_range(40..200u8),
        rng.random_range(40..200u8),
        rng.random_range(40..200u8),
    ];
    let cell = rng.random_range(10..30u32);
    RgbImage::from_fn(280, 160, |x, y| {
        let on = ((x / cell) + (y / cell)) % 2 == 0;
        let shade = (y * 55 / 160) as u8;
        if on {
            Rgb([base[0].saturating_add(shade), base[1], base[2].saturating_sub(shade)])
        } else {
            Rgb([base[2], base[0].saturating_add(shade / 2), base[1]])
        }
    })
}

fn reload_background(i: u64) -> RgbImage {
    let palettes = [[200, 220, 255], [255, 225, 200], [210, 255, 210], [240, 210, 250]];
    let p = palettes[(i % 4) as usize];
    RgbImage::from_fn(64, 26, |x, _| {
        let v = if (x / 8) % 2 == 0 { 0 } else { 25 };
        Rgb([p[0] - v, p[1] - v, p[2] - v])
    })
}

fn save_png(img: &RgbImage, path: &Path) -> Result<(), FixtureError> {
    img.save(path)
        .map_err(|e| FixtureError::Image(format!("{}: {e}", path.display())))
}

/// Write the corpus tree under `out`. Identical manifests give identical trees.
pub fn generate_corpus(manifest: &CorpusManifest, out: &Path) -> Result<CorpusTree, FixtureError> {
    manifest.validate()?;
    fs::create_dir_all(out)?;
    for spec in &manifest.specs {
        let dir = out.join(&spec.site_id);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let mut rng = site_rng(manifest.seed, &spec.site_id);
        let theme = pages::Theme::new(&mut rng);
        let per_reload = spec.variant_axis == VariantAxis::PerReload;
        for v in [Variant::A, Variant::B] {
            let html = pages::page_html(&spec.site_id, spec.injection, per_reload, v, &theme);
            fs::write(dir.join(format!("{}.html", v.name())), html)?;
        }
        save_png(&hero_image(&mut rng), &dir.join(pages::HERO_ASSET))?;
        if per_reload {
            for i in 0..pages::RELOAD_BACKGROUNDS {
                save_png(&reload_background(i), &dir.join(format!("bg-{i}.png")))?;
            }
        }
    }
    let json = serde_json::to_string_pretty(manifest).map_err(|e| FixtureError::Manifest(e.to_string()))?;
    fs::write(out.join(CORPUS_MANIFEST), json + "\n")?;
    fs::write(out.join(TRUTH_CSV), write_truth_csv(&manifest.ground_truth()))?;
    Ok(CorpusTree {
        root: out.to_path_buf(),
        manifest: manifest.clone(),
    })
}

/// HTTP-ish response for a fixture page or asset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

/// A generated corpus on disk.
#[derive(Debug, Clone)]
pub struct CorpusTree {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

impl CorpusTree {
    pub fn open(root: &Path) -> Result<Self, FixtureError> {
        let manifest = CorpusManifest::load(&root.join(CORPUS_MANIFEST))?;
        Ok(CorpusTree {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn truth(&self) -> GroundTruth {
        self.manifest.ground_truth()
    }

    /// Response for `/{site_id}/{rest}`; `reload` is the per-site request count.
    pub fn respond(&self, site_id: &str, rest: &str, reload: u64) -> FixtureResponse {
        let not_found = || FixtureResponse {
            status: 404,
            content_type: "text/plain; charset=utf-8",
            body: b"404 Not Found".to_vec(),
        };
        let Some(spec) = self.manifest.spec(site_id) else {
            return not_found();
        };
        if let Some(v) = Variant::parse(rest) {
            let Ok(html) = fs::read_to_string(self.root.join(site_id).join(format!("{}.html", v.name()))) else {
                return not_found();
            };
            let html = if spec.variant_axis == VariantAxis::PerReload {
                pages::resolve_reload(&html, reload)
            } else {
                html
            };
            let status = if spec.injection == Injection::Blocked403 {
                403
            } else {
                200
            };
            return FixtureResponse {
                status,
                content_type: "text/html; charset=utf-8",
                body: html.into_bytes(),
            };
        }
        if valid_asset_name(rest) {
            if let Ok(bytes) = fs::read(self.root.join(site_id).join(rest)) {
                return FixtureResponse {
                    status: 200,
                    content_type: "image/png",
                    body: bytes,
                };
            }
        }
        not_found()
    }

    pub fn is_per_reload(&self, site_id: &str) -> bool {
        self.manifest
            .spec(site_id)
            .is_some_and(|s| s.variant_axis == VariantAxis::PerReload)
    }

    /// URLs for every site with a `{variant}` placeholder, keyed by site id.
    pub fn url_list(&self, base: &str) -> BTreeMap<String, String> {
        let base = base.trim_end_matches('/');
        self.manifest
            .specs
            .iter()
            .map(|s| (s.site_id.clone(), format!("{base}/{}/{{variant}}", s.site_id)))
            .collect()
    }
}

fn valid_asset_name(name: &str) -> bool {
    name.strip_suffix(".png").is_some_and(valid_site_id)
}

/// Split a URL path into `(site_id, rest)` where the path ends in
/// `/{site_id}/{rest}`.
pub fn split_fixture_path(url: &str) -> Option<(String, String)> {
    let path = match url.find("://") {
        Some(i) => {
            let after = &url[i + 3..];
            after.find('/').map(|j| &after[j..]).unwrap_or("/")
        }
        None => url,
    };
    let path = path.split(['?', '#']).next().unwrap_or_default();
    let mut parts = path.trim_matches('/').rsplitn(2, '/');
    let rest = parts.next()?.to_string();
    let site = parts.next()?.rsplit('/').next()?.to_string();
    (!site.is_empty() && !rest.is_empty()).then_some((site, rest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_mapping_examples() {
        assert_eq!(Injection::BlankPage.truth().impact, ImpactScore::SignificantVisual);
        assert_eq!(
            Injection::UnsupportedBanner.truth().impact,
            ImpactScore::BlockedUnsupported
        );
        assert_eq!(Injection::FontChange.truth().impact, ImpactScore::MinorVisual);
        for inj in [Injection::None, Injection::AdSlot, Injection::Carousel] {
            assert_eq!(inj.truth().impact, ImpactScore::NoXbi);
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = CorpusManifest::standard_12(1);
        m.specs.push(m.specs[0].clone());
        assert!(matches!(m.validate(), Err(FixtureError::DuplicateSite(_))));
    }

    #[test]
    fn standard_manifests() {
        assert_eq!(CorpusManifest::standard_12(0).specs.len(), 12);
        let m20 = CorpusManifest::standard_20(0);
        assert_eq!(m20.specs.len(), 20);
        m20.validate().unwrap();
    }

    #[test]
    fn path_splitting() {
        assert_eq!(
            split_fixture_path("http://127.0.0.1:80/ls01/a"),
            Some(("ls01".into(), "a".into()))
        );
        assert_eq!(split_fixture_path("fixture:///x/b?q=1"), Some(("x".into(), "b".into())));
        assert_eq!(
            split_fixture_path("http://h/pre/fix/s/hero.png"),
            Some(("s".into(), "hero.png".into()))
        );
        assert_eq!(split_fixture_path("http://h/"), None);
    }
}
