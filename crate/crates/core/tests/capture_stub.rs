//! Capture against the emulated WebDriver endpoint and the offline session.

use xbiscope_core::capture::{
    capture_burst, BrowserConfig, CaptureError, CaptureOptions, PopupFilter, PopupRule, SessionFactory,
    WebDriverFactory, DEFAULT_BLOCKED_KEYWORDS,
};
use xbiscope_core::fixtures::browser::OfflineFactory;
use xbiscope_core::fixtures::server::{serve_corpus, ServerHandle};
use xbiscope_core::fixtures::webdriver_stub::{spawn_webdriver_stub, FullPageSupport, StubOptions};
use xbiscope_core::fixtures::{generate_corpus, CorpusManifest, CorpusTree, VariantAxis};
use xbiscope_core::ScreenshotSet;

struct Rig {
    _dir: tempfile::TempDir,
    pages: ServerHandle,
    driver: ServerHandle,
}

fn rig(opts: StubOptions) -> Rig {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&CorpusManifest::standard_12(21), dir.path()).unwrap();
    let pages = serve_corpus(dir.path(), "127.0.0.1:0").unwrap();
    let driver = spawn_webdriver_stub("127.0.0.1:0", opts).unwrap();
    Rig {
        _dir: dir,
        pages,
        driver,
    }
}

fn browser(endpoint: &str) -> BrowserConfig {
    let mut b = BrowserConfig::new("firefox", endpoint);
    b.viewport_width = 640;
    b.page_load_timeout = 5.0;
    b
}

fn fast(frames: usize, interval: f64) -> CaptureOptions {
    CaptureOptions {
        frames,
        interval,
        settle: 0.0,
    }
}

fn popups() -> PopupFilter {
    PopupFilter {
        rules: vec![PopupRule::click("#cookie-accept")],
    }
}

fn shoot(r: &Rig, cfg: &BrowserConfig, path: &str, opts: &CaptureOptions) -> Result<ScreenshotSet, CaptureError> {
    let mut s = WebDriverFactory.open(cfg)?;
    let url = format!("{}/{path}", r.pages.base_url());
    capture_burst(s.as_mut(), &url, cfg, opts, &popups(), &DEFAULT_BLOCKED_KEYWORDS)
}

#[test]
fn static_page_gives_identical_frames() {
    let r = rig(StubOptions::default());
    let cfg = browser(&r.driver.base_url());
    let set = shoot(&r, &cfg, "ctl01/a", &fast(5, 0.05)).unwrap();
    assert_eq!(set.frames.len(), 5);
    assert!(set.frames.iter().all(|f| f == &set.frames[0]));
    assert_eq!(set.frames[0].width(), 640);
    assert!(set.capture_times.windows(2).all(|w| w[1] - w[0] >= 0.05 - 1e-9));
    assert!(set.blocked.is_none());
}

#[test]
fn carousel_frames_change_over_the_burst() {
    let r = rig(StubOptions::default());
    let cfg = browser(&r.driver.base_url());
    let set = shoot(&r, &cfg, "car01/a", &fast(3, 0.6)).unwrap();
    assert_ne!(set.frames[0], set.frames[2]);
}

#[test]
fn forbidden_page_is_flagged_with_one_frame() {
    let r = rig(StubOptions::default());
    let cfg = browser(&r.driver.base_url());
    let set = shoot(&r, &cfg, "blk01/a", &fast(5, 0.05)).unwrap();
    let v = set.blocked.expect("blocked verdict");
    assert_eq!(v.matched_keyword, "403 forbidden");
    assert_eq!(set.frames.len(), 1);
}

#[test]
fn configured_popups_are_dismissed() {
    let r = rig(StubOptions::default());
    let cfg = browser(&r.driver.base_url());
    let set = shoot(&r, &cfg, "pop01/a", &fast(1, 0.0)).unwrap();
    assert_eq!(set.popup_dismissals.len(), 1, "{:?}", set.popup_dismissals);
    let plain = {
        let mut s = WebDriverFactory.open(&cfg).unwrap();
        let url = format!("{}/pop01/a", r.pages.base_url());
        capture_burst(
            s.as_mut(),
            &url,
            &cfg,
            &fast(1, 0.0),
            &PopupFilter::default(),
            &DEFAULT_BLOCKED_KEYWORDS,
        )
        .unwrap()
    };
    assert!(plain.popup_dismissals.is_empty());
    assert_ne!(plain.frames[0], set.frames[0], "banner pixels removed");

    // a rule that matches nothing only warns
    let mut s = WebDriverFactory.open(&cfg).unwrap();
    let url = format!("{}/ctl01/a", r.pages.base_url());
    let none = PopupFilter {
        rules: vec![PopupRule::click("#absent")],
    };
    let set = capture_burst(s.as_mut(), &url, &cfg, &fast(1, 0.0), &none, &DEFAULT_BLOCKED_KEYWORDS).unwrap();
    assert!(set.popup_dismissals.is_empty());
}

#[test]
fn full_page_only_in_headless_mode() {
    let r = rig(StubOptions {
        full_page: FullPageSupport::HeadlessOnly,
        ..Default::default()
    });
    let mut cfg = browser(&r.driver.base_url());
    cfg.headless = false;
    assert!(matches!(
        shoot(&r, &cfg, "ctl01/a", &fast(1, 0.0)),
        Err(CaptureError::Config(_))
    ));
    cfg.headless = true;
    assert!(shoot(&r, &cfg, "ctl01/a", &fast(1, 0.0)).is_ok());
}

#[test]
fn viewport_fallback_matches_full_page() {
    let full = rig(StubOptions::default());
    let never = rig(StubOptions {
        full_page: FullPageSupport::Never,
        ..Default::default()
    });
    let a = shoot(&full, &browser(&full.driver.base_url()), "ls01/b", &fast(1, 0.0)).unwrap();
    let b = shoot(&never, &browser(&never.driver.base_url()), "ls01/b", &fast(1, 0.0)).unwrap();
    assert_eq!(a.frames[0].dimensions(), b.frames[0].dimensions());
}

#[test]
fn stalled_load_times_out() {
    let r = rig(StubOptions {
        stall_on: vec!["ctl01".into()],
        ..Default::default()
    });
    let cfg = browser(&r.driver.base_url());
    assert!(matches!(
        shoot(&r, &cfg, "ctl01/a", &fast(1, 0.0)),
        Err(CaptureError::Timeout { .. })
    ));
}

#[test]
fn unreachable_endpoint_is_a_session_error() {
    let cfg = browser("http://127.0.0.1:9");
    assert!(matches!(WebDriverFactory.open(&cfg), Err(CaptureError::Session(_))));
}

fn offline_capture(factory: &OfflineFactory, path: &str) -> ScreenshotSet {
    let cfg = browser("offline");
    let mut s = factory.open(&cfg).unwrap();
    capture_burst(
        s.as_mut(),
        &format!("fixture://corpus/{path}"),
        &cfg,
        &fast(3, 1.0),
        &popups(),
        &DEFAULT_BLOCKED_KEYWORDS,
    )
    .unwrap()
}

#[test]
fn static_specs_capture_pixel_identically() {
    let dir = tempfile::tempdir().unwrap();
    let m = CorpusManifest::standard_20(8);
    generate_corpus(&m, dir.path()).unwrap();
    // one host for the whole loop so per-reload counters keep advancing
    let factory = OfflineFactory::for_corpus(CorpusTree::open(dir.path()).unwrap());
    for spec in &m.specs {
        let first = offline_capture(&factory, &format!("{}/a", spec.site_id));
        let again = offline_capture(&factory, &format!("{}/a", spec.site_id));
        let animated = spec.injection.animated();
        if spec.variant_axis == VariantAxis::Static && !animated {
            assert!(first.frames.iter().all(|f| f == &first.frames[0]), "{}", spec.site_id);
            let other = offline_capture(&factory, &format!("{}/b", spec.site_id));
            assert_eq!(first.frames, other.frames, "{}", spec.site_id);
        }
        if spec.variant_axis != VariantAxis::PerReload {
            assert_eq!(first.frames, again.frames, "{} repeats", spec.site_id);
        } else {
            assert_ne!(first.frames, again.frames, "{} reloads", spec.site_id);
        }
    }
}

#[test]
fn offline_stall_times_out_on_the_virtual_clock() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&CorpusManifest::standard_12(1), dir.path()).unwrap();
    let factory = OfflineFactory::for_corpus(CorpusTree::open(dir.path()).unwrap()).with_stalled("ls01");
    let cfg = browser("offline");
    let mut s = factory.open(&cfg).unwrap();
    let started = std::time::Instant::now();
    let r = capture_burst(
        s.as_mut(),
        "fixture://corpus/ls01/a",
        &cfg,
        &fast(1, 0.0),
        &popups(),
        &DEFAULT_BLOCKED_KEYWORDS,
    );
    assert!(matches!(r, Err(CaptureError::Timeout { .. })));
    assert!(started.elapsed().as_secs_f64() < 2.0);
}
