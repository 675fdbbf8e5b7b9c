//! Canned mock-backend answers for the fixture corpus, keyed by the content
//! hashes of the images the detector will actually send.

use std::path::Path;

use super::{CorpusTree, FixtureError, Injection};
use crate::capture::store::{browser_dir, read_manifest, read_set};
use crate::composite;
use crate::detector::{image_hash, CannedCompletions, MockMapping};

fn s(text: &str) -> Option<String> {
    Some(text.to_string())
}

/// What a well-behaved model would answer for each injection kind.
/// `adversarial` adds answers that report ads or animations as
/// inconsistencies whenever the prompt carries no exclusion list.
pub fn canned_for(injection: Injection, adversarial: bool) -> CannedCompletions {
    use Injection::*;
    let no_xbi = s("Impact: no-XBI\nFindings:");
    let mut c = CannedCompletions {
        ads: s("No."),
        dynamics: s("No."),
        blocked_check: s("No."),
        ..Default::default()
    };
    match injection {
        None | Blocked403 => c.xbi = no_xbi,
        LayoutShift => {
            c.xbi = s("Impact: significant-visual\nFindings:\n- The sidebar panel sits about 140 pixels lower in the second screenshot and overlaps the article text.")
        }
        MissingImage => {
            c.xbi = s("Impact: significant-visual\nFindings:\n- The large picture below the article is missing in the second screenshot; only an empty frame is shown.")
        }
        BlankPage => c.xbi = s("Impact: significant-visual\nFindings:\n- The second screenshot shows an entirely blank page."),
        UnsupportedBanner => {
            c.xbi = s("Impact: blocked-unsupported\nFindings:\n- The second browser gets a notice that it is not supported instead of the site content.")
        }
        FontChange => {
            c.xbi = s("Impact: minor-visual\nFindings:\n- Body text is set in a different typeface in the second screenshot; layout is otherwise unchanged.")
        }
        PopupBanner => {
            c.xbi = s("Impact: significant-visual\nFindings:\n- A newsletter pop-up modal covers the middle of the page in the second screenshot.")
        }
        AdSlot => {
            c.ads = s("Yes\n- sponsored box in the right column");
            c.xbi = no_xbi;
            if adversarial {
                c.xbi_without_ads =
                    s("Impact: significant-visual\nFindings:\n- The box in the right column shows different content and colors between the two browsers.");
            }
        }
        Carousel => {
            c.dynamics = s("Yes\n- carousel: the wide banner rotates between slides");
            c.xbi = no_xbi;
            if adversarial {
                c.xbi_without_dynamics =
                    s("Impact: significant-visual\nFindings:\n- The wide banner shows a different slide in each browser.");
            }
        }
        VideoPlaceholder => {
            c.dynamics = s("Yes\n- video: the player area shows a moving picture with a progress bar");
            c.xbi = no_xbi;
            if adversarial {
                c.xbi_without_dynamics =
                    s("Impact: minor-visual\nFindings:\n- The video area differs between the browsers.");
            }
        }
        BlockedBot => {
            c.xbi = s("Impact: significant-visual\nFindings:\n- The page did not load in the second browser; only a short notice in German is shown.");
            c.blocked_check = s("Yes, the second screenshot is a bot verification page rather than the site.");
        }
    }
    c
}

/// Build a mapping for a captured run of `tree`: for each captured site the
/// overlay hashes, the cropped stage-3 pair hashes and the cropped first
/// frames all resolve to that site's canned answers.
pub fn build_mock_mapping(tree: &CorpusTree, run_dir: &Path, adversarial: bool) -> Result<MockMapping, FixtureError> {
    let run = read_manifest(run_dir).map_err(|e| FixtureError::Manifest(e.to_string()))?;
    let mut mapping = MockMapping::default();
    for entry in &run.sites {
        let Some(spec) = tree.manifest.spec(&entry.site_id) else {
            log::warn!("{} is not part of the corpus; no canned answers", entry.site_id);
            continue;
        };
        mapping
            .sites
            .insert(spec.site_id.clone(), canned_for(spec.injection, adversarial));
        let mut sets = Vec::with_capacity(2);
        for b in &run.browsers {
            match read_set(&browser_dir(run_dir, &entry.site_id, b)) {
                Ok(set) if set.blocked.is_none() => sets.push(set),
                _ => break,
            }
        }
        if sets.len() != 2 {
            continue;
        }
        let mut images = Vec::new();
        let overlays = [composite::overlay(&sets[0]), composite::overlay(&sets[1])];
        if let [Ok(a), Ok(b)] = &overlays {
            images.push(a.pixels.clone());
            images.push(b.pixels.clone());
            if let Ok((ca, cb)) = composite::crop_to_common(&a.pixels, &b.pixels) {
                images.push(ca);
                images.push(cb);
            }
        }
        if let Ok((fa, fb)) = composite::crop_to_common(&sets[0].frames[0], &sets[1].frames[0]) {
            images.push(fa);
            images.push(fb);
        }
        for img in &images {
            mapping.images.insert(image_hash(img), spec.site_id.clone());
        }
    }
    Ok(mapping)
}
