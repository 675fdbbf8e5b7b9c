//! HTML for each injection kind. Pages use only absolutely positioned boxes
//! so the toy renderer and a real browser lay them out the same way.

use std::fmt::Write as _;

use rand::Rng;

use super::Injection;

pub const PAGE_HEIGHT: u32 = 900;
pub const PAGE_WIDTH: u32 = 640;
/// Replaced per request with a per-site counter on per-reload sites.
pub const RELOAD_PLACEHOLDER: &str = "__BG__";
/// Number of distinct per-reload background assets.
pub const RELOAD_BACKGROUNDS: u64 = 4;

pub const HERO_ASSET: &str = "hero.png";
pub const MISSING_ASSET: &str = "hero-missing.png";
pub const COOKIE_BANNER_ID: &str = "cookie-banner";
pub const COOKIE_ACCEPT_ID: &str = "cookie-accept";

const CYCLE_SCRIPT: &str = "document.querySelectorAll('[data-cycle-ms]').forEach(function (c) { var s = c.children; var t0 = Date.now(); setInterval(function () { var k = Math.floor((Date.now() - t0) / Number(c.getAttribute('data-cycle-ms'))) % s.length; for (var i = 0; i !== s.length; i++) { s[i].style.display = i === k ? 'block' : 'none'; } }, 50); });";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    A,
    B,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::A => "a",
            Variant::B => "b",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "a" => Some(Variant::A),
            "b" => Some(Variant::B),
            _ => None,
        }
    }
}

/// Per-site look derived from the seed so sites are visually distinct.
#[derive(Debug, Clone)]
pub struct Theme {
    pub header: String,
    pub accent: String,
    pub sidebar_top: i64,
    pub words: Vec<&'static str>,
}

const WORDS: [&str; 24] = [
    "garden", "market", "travel", "recipe", "winter", "museum", "river", "studio", "coffee", "bicycle", "planet",
    "library", "harbor", "forest", "concert", "festival", "journal", "island", "kitchen", "mountain", "station",
    "theater", "village", "weather",
];

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

fn random_rgb(rng: &mut impl Rng, lo: u8, hi: u8) -> [u8; 3] {
    [
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    ]
}

impl Theme {
    pub fn new(rng: &mut impl Rng) -> Theme {
        let header = hex(random_rgb(rng, 20, 110));
        let accent = hex(random_rgb(rng, 170, 240));
        let sidebar_top = rng.random_range(90..140);
        let mut words = Vec::with_capacity(12);
        for _ in 0..12 {
            words.push(WORDS[rng.random_range(0..WORDS.len())]);
        }
        Theme {
            header,
            accent,
            sidebar_top,
            words,
        }
    }
}

fn abs(left: i64, top: i64, width: i64, height: i64) -> String {
    format!("position:absolute;left:{left}px;top:{top}px;width:{width}px;height:{height}px")
}

struct Page {
    title: String,
    body: String,
    script: bool,
}

impl Page {
    fn new(title: &str) -> Page {
        Page {
            title: title.to_string(),
            body: String::new(),
            script: false,
        }
    }

    fn push(&mut self, s: &str) {
        self.body.push_str("  ");
        self.body.push_str(s);
        self.body.push('\n');
    }

    fn finish(self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n  <meta charset=\"utf-8\"/>\n  <title>{}</title>\n</head>\n<body style=\"margin:0;position:relative;height:{PAGE_HEIGHT}px;background:#ffffff\">\n{}",
            self.title, self.body
        );
        if self.script {
            let _ = writeln!(out, "  <script>{CYCLE_SCRIPT}</script>");
        }
        out.push_str("</body>\n</html>\n");
        out
    }
}

fn text_block(theme: &Theme, from: usize, n: usize) -> String {
    let words: Vec<&str> = theme.words.iter().cycle().skip(from).take(n).copied().collect();
    let mut s = words.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

/// Regular content shared by most injections.
fn standard_content(page: &mut Page, site_id: &str, theme: &Theme, font: &str, sidebar_shift: i64, hero_src: &str) {
    page.push(&format!(
        r#"<div id="header" style="{};background:{}"><h1 style="{};color:#ffffff;font-size:22px;font-family:{font}">{site_id} {}</h1></div>"#,
        abs(0, 0, PAGE_WIDTH as i64, 64),
        theme.header,
        abs(16, 14, 420, 34),
        theme.words[0],
    ));
    page.push(&format!(
        r#"<div id="nav" style="{};background:#eeeeee"><span style="{};font-family:{font}">Home</span><span style="{};font-family:{font}">About</span><span style="{};font-family:{font}">Contact</span></div>"#,
        abs(0, 64, PAGE_WIDTH as i64, 28),
        abs(16, 4, 80, 20),
        abs(110, 4, 80, 20),
        abs(204, 4, 80, 20),
    ));
    for (i, top) in [110i64, 170, 230].into_iter().enumerate() {
        page.push(&format!(
            r#"<p id="para{i}" style="{};font-family:{font};font-size:14px">{}</p>"#,
            abs(20, top, 380, 52),
            text_block(theme, i * 3, 7)
        ));
    }
    page.push(&format!(
        r#"<img id="hero" src="{hero_src}" alt="hero" style="{}"/>"#,
        abs(20, 310, 280, 160)
    ));
    page.push(&format!(
        r#"<div id="sidebar" style="{};background:{}"><p style="{};font-family:{font}">{}</p></div>"#,
        abs(430, theme.sidebar_top + sidebar_shift, 190, 150),
        theme.accent,
        abs(8, 8, 174, 60),
        text_block(theme, 5, 4)
    ));
    page.push(&format!(
        r#"<div id="footer" style="{};background:#333333"><p style="{};color:#dddddd;font-family:{font};font-size:12px">Contact us at {site_id}.example</p></div>"#,
        abs(0, 820, PAGE_WIDTH as i64, 80),
        abs(16, 20, 400, 24)
    ));
}

fn forbidden_page() -> String {
    let mut page = Page::new("403 Forbidden");
    page.push(&format!(
        r#"<h1 style="{};font-size:28px">403 Forbidden</h1>"#,
        abs(20, 20, 600, 40)
    ));
    page.push(&format!(
        r#"<p style="{}">You do not have permission to access this resource on this server.</p>"#,
        abs(20, 80, 600, 40)
    ));
    page.finish()
}

fn bot_check_page() -> String {
    let mut page = Page::new("Sicherheitsüberprüfung");
    page.push(&format!(
        r#"<div id="check" style="{};background:#f3f3f3"><h1 style="{};font-size:22px">Einen Moment bitte</h1><p style="{}">Wir prüfen, ob die Verbindung sicher ist. Bitte bestätigen Sie, dass Sie kein Roboter sind.</p></div>"#,
        abs(120, 200, 400, 200),
        abs(20, 20, 360, 34),
        abs(20, 70, 360, 90)
    ));
    page.finish()
}

fn unsupported_page(site_id: &str, theme: &Theme) -> String {
    let mut page = Page::new(site_id);
    page.push(&format!(
        r#"<div id="header" style="{};background:{}"></div>"#,
        abs(0, 0, PAGE_WIDTH as i64, 64),
        theme.header
    ));
    page.push(&format!(
        r#"<div id="unsupported" style="{};background:#fff4d6"><h2 style="{};font-size:20px">Browser not supported</h2><p style="{}">This site does not support your browser. Please switch to a supported browser to continue.</p></div>"#,
        abs(60, 160, 520, 220),
        abs(20, 20, 480, 30),
        abs(20, 70, 480, 90)
    ));
    page.finish()
}

fn cookie_banner(page: &mut Page) {
    page.push(&format!(
        r#"<div id="{COOKIE_BANNER_ID}" style="{};background:#222222"><p style="{};color:#ffffff">We use cookies to improve this site.</p><button id="{COOKIE_ACCEPT_ID}" onclick="document.getElementById('{COOKIE_BANNER_ID}').remove()" style="{};background:#4caf50;color:#ffffff">Accept</button></div>"#,
        abs(0, 760, PAGE_WIDTH as i64, 60),
        abs(16, 18, 400, 24),
        abs(500, 14, 110, 32)
    ));
}

fn newsletter_modal(page: &mut Page) {
    page.push(&format!(
        r#"<div id="newsletter" data-popup="modal" role="dialog" style="{};background:#fafafa"><h2 style="{};font-size:20px">Join our newsletter</h2><p style="{}">Get weekly news straight to your inbox.</p><button id="newsletter-close" onclick="document.getElementById('newsletter').remove()" style="{};background:#888888;color:#ffffff">Close</button></div>"#,
        abs(120, 180, 400, 260),
        abs(20, 20, 360, 30),
        abs(20, 70, 360, 60),
        abs(270, 200, 110, 36)
    ));
}

fn ad_box(page: &mut Page, variant: Variant) {
    let (bg, text) = match variant {
        Variant::A => ("#ffcc00", "Fresh Soda now 20 percent off"),
        Variant::B => ("#00aaff", "New Phone order today"),
    };
    page.push(&format!(
        r#"<div id="ad-slot" class="ad" data-ad="sponsored" style="{};background:{bg}"><span style="{};font-size:10px">Sponsored</span><p style="{};font-size:16px">{text}</p></div>"#,
        abs(430, 560, 190, 180),
        abs(6, 4, 80, 14),
        abs(10, 40, 170, 80)
    ));
}

fn carousel(page: &mut Page, theme: &Theme) {
    let colors = ["#e57373", "#64b5f6", "#81c784"];
    let mut slides = String::new();
    for (i, c) in colors.iter().enumerate() {
        let _ = write!(
            slides,
            r#"<div class="slide" style="{};background:{c}"><h2 style="{};font-size:24px">Slide {} {}</h2></div>"#,
            abs(0, 0, 600, 140),
            abs(20, 50, 400, 34),
            i + 1,
            theme.words[i]
        );
    }
    page.push(&format!(
        r#"<div id="carousel" data-cycle-ms="1000" style="{}">{slides}</div>"#,
        abs(20, 500, 600, 140)
    ));
    page.script = true;
}

fn video(page: &mut Page) {
    let mut frames = String::new();
    for i in 0..4i64 {
        let _ = write!(
            frames,
            r#"<div class="frame" style="{};background:#111111"><div style="{};background:#{:02x}{:02x}60"></div><div style="{};background:#ff0000"></div></div>"#,
            abs(0, 0, 380, 200),
            abs(40 + 30 * i, 40, 120, 90),
            60 + 40 * i,
            200 - 30 * i,
            abs(0, 192, 95 * (i + 1), 8)
        );
    }
    page.push(&format!(
        r#"<div id="video" data-cycle-ms="700" style="{}">{frames}</div>"#,
        abs(20, 500, 380, 200)
    ));
    page.script = true;
}

/// Page markup for one variant. Per-reload pages keep the placeholder.
pub fn page_html(site_id: &str, injection: Injection, per_reload: bool, variant: Variant, theme: &Theme) -> String {
    use Injection::*;
    let b = variant == Variant::B;
    match injection {
        Blocked403 => return forbidden_page(),
        BlockedBot if b => return bot_check_page(),
        UnsupportedBanner if b => return unsupported_page(site_id, theme),
        BlankPage if b => return Page::new(site_id).finish(),
        _ => {}
    }
    let mut page = Page::new(site_id);
    let font = if injection == FontChange && b {
        "serif"
    } else {
        "sans-serif"
    };
    let shift = if injection == LayoutShift && b { 140 } else { 0 };
    let hero = if injection == MissingImage && b {
        MISSING_ASSET
    } else {
        HERO_ASSET
    };
    if per_reload {
        page.push(&format!(
            r#"<img id="backdrop" src="bg-{RELOAD_PLACEHOLDER}.png" alt="" style="{}"/>"#,
            abs(0, 480, PAGE_WIDTH as i64, 260)
        ));
    }
    standard_content(&mut page, site_id, theme, font, shift, hero);
    match injection {
        PopupBanner => {
            cookie_banner(&mut page);
            if b {
                newsletter_modal(&mut page);
            }
        }
        AdSlot => ad_box(&mut page, variant),
        Carousel => carousel(&mut page, theme),
        VideoPlaceholder => video(&mut page),
        _ => {}
    }
    page.finish()
}

/// Resolve the per-reload placeholder for request number `counter`.
pub fn resolve_reload(html: &str, counter: u64) -> String {
    html.replace(RELOAD_PLACEHOLDER, &(counter % RELOAD_BACKGROUNDS).to_string())
}
