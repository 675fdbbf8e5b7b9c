//! An emulated browser for fixture pages, and the offline session built on it.
//!
//! The offline session is the frame-import path: it renders the corpus tree
//! directly on a virtual clock, so a full capture of the corpus takes well
//! under a second and is bit-for-bit reproducible.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use image::RgbImage;
use serde_json::{json, Value};

use super::dom::{Document, Element, Selector};
use super::render::{document_height, render};
use super::{split_fixture_path, CorpusTree};
use crate::capture::{scripts, BrowserConfig, BrowserSession, CaptureError, ElementRef, SessionFactory};

/// Where an emulated browser gets pages and images from.
pub trait PageHost: Send + Sync {
    /// Status and markup for `url`.
    fn fetch_page(&self, url: &str) -> Result<(u16, String), String>;
    /// Decoded image for `src` relative to `page_url`; `None` when missing.
    fn fetch_image(&self, page_url: &str, src: &str) -> Option<RgbImage>;
}

/// A loaded page: DOM plus image cache.
pub struct EmulatedPage {
    pub url: String,
    pub status: u16,
    pub doc: Document,
    images: HashMap<String, Option<RgbImage>>,
}

/// Result of running one recognised script.
#[derive(Debug)]
pub enum ScriptError {
    Unsupported,
    BadArgs(String),
}

fn arg_str(args: &[Value]) -> Result<&str, ScriptError> {
    args.first()
        .and_then(Value::as_str)
        .ok_or_else(|| ScriptError::BadArgs("expected a string argument".into()))
}

/// Path of elements from the root down to `uid`, inclusive.
fn path_to<'a>(e: &'a Element, uid: usize, acc: &mut Vec<&'a Element>) -> bool {
    acc.push(e);
    if e.uid == uid || e.elements().any(|c| path_to(c, uid, acc)) {
        return true;
    }
    acc.pop();
    false
}

fn is_dialog(e: &Element) -> bool {
    e.attr("role") == Some("dialog") || e.attr("aria-modal").is_some() || e.attr("data-popup").is_some()
}

/// Parse `document.getElementById('X').remove()`.
fn onclick_removal(script: &str) -> Option<&str> {
    let rest = script.trim().strip_prefix("document.getElementById(")?;
    let quote = rest.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let rest = &rest[1..];
    let end = rest.find(quote)?;
    let tail = rest[end + 1..].trim().trim_end_matches(';');
    (tail == ").remove()").then(|| &rest[..end])
}

impl EmulatedPage {
    pub fn load(host: &dyn PageHost, url: &str) -> Result<EmulatedPage, String> {
        let (status, markup) = host.fetch_page(url)?;
        let doc = Document::parse(&markup).map_err(|e| e.to_string())?;
        Ok(EmulatedPage {
            url: url.to_string(),
            status,
            doc,
            images: HashMap::new(),
        })
    }

    pub fn text(&self) -> String {
        self.doc.text()
    }

    pub fn find(&self, css: &str) -> Result<Option<usize>, String> {
        let sel = Selector::parse(css).map_err(|e| e.to_string())?;
        Ok(self.doc.find(&|e| sel.matches(e)).map(|e| e.uid))
    }

    fn leaves_containing(&self, keyword: &str) -> Vec<usize> {
        let kw = keyword.to_lowercase();
        let Some(body) = self.doc.body() else { return Vec::new() };
        let mut hits = Vec::new();
        collect_leaves(body, &kw, &mut hits);
        hits
    }

    /// Emulates the element's click handler.
    pub fn click(&mut self, uid: usize) -> bool {
        let Some(el) = self.doc.by_uid(uid) else { return false };
        let target = el
            .attr("onclick")
            .and_then(onclick_removal)
            .and_then(|id| self.doc.by_id(id))
            .map(|t| t.uid);
        if let Some(t) = target {
            self.doc.remove(t);
        }
        true
    }

    pub fn execute(
        &mut self,
        script: &str,
        args: &[Value],
        width: u32,
        elapsed_ms: u64,
        ready: bool,
    ) -> Result<Value, ScriptError> {
        if script == scripts::READY_STATE {
            Ok(json!(if ready { "complete" } else { "loading" }))
        } else if script == scripts::PAGE_TEXT {
            Ok(json!(self.text()))
        } else if script == scripts::SCROLL_HEIGHT {
            Ok(json!(document_height(&self.doc, width, elapsed_ms)))
        } else if script == scripts::REMOVE_SELECTOR {
            let sel = Selector::parse(arg_str(args)?).map_err(|e| ScriptError::BadArgs(e.to_string()))?;
            let uids: Vec<usize> = self.doc.find_all(&|e| sel.matches(e)).iter().map(|e| e.uid).collect();
            let mut n = 0;
            for uid in uids {
                if self.doc.remove(uid) {
                    n += 1;
                }
            }
            Ok(json!(n))
        } else if script == scripts::CLICK_TEXT {
            let leaves = self.leaves_containing(arg_str(args)?);
            match leaves.first() {
                Some(&uid) => Ok(json!(self.click(uid))),
                None => Ok(json!(false)),
            }
        } else if script == scripts::REMOVE_TEXT {
            let leaves = self.leaves_containing(arg_str(args)?);
            let Some(&leaf) = leaves.first() else {
                return Ok(json!(0));
            };
            let mut path = Vec::new();
            path_to(&self.doc.root, leaf, &mut path);
            let target = path.iter().rev().find(|e| is_dialog(e)).map(|e| e.uid).unwrap_or(leaf);
            self.doc.remove(target);
            Ok(json!(1))
        } else {
            Err(ScriptError::Unsupported)
        }
    }

    fn load_images(&mut self, host: &dyn PageHost) {
        let srcs: Vec<String> = self
            .doc
            .find_all(&|e| e.tag == "img")
            .iter()
            .filter_map(|e| e.attr("src").map(str::to_string))
            .collect();
        for src in srcs {
            if !self.images.contains_key(&src) {
                let img = host.fetch_image(&self.url, &src);
                self.images.insert(src, img);
            }
        }
    }

    pub fn screenshot(&mut self, host: &dyn PageHost, width: u32, height: Option<u32>, elapsed_ms: u64) -> RgbImage {
        self.load_images(host);
        let images = &self.images;
        render(&self.doc, width, height, elapsed_ms, &|src| {
            images.get(src).cloned().flatten()
        })
    }
}

fn collect_leaves(e: &Element, kw: &str, out: &mut Vec<usize>) -> bool {
    if !e.text().to_lowercase().contains(kw) {
        return false;
    }
    let mut child_hit = false;
    for c in e.elements() {
        child_hit |= collect_leaves(c, kw, out);
    }
    if !child_hit {
        out.push(e.uid);
    }
    true
}

/// Serves pages straight from a corpus tree, counting requests per site.
pub struct CorpusHost {
    tree: CorpusTree,
    counters: Mutex<HashMap<String, Arc<AtomicU64>>>,
}

impl CorpusHost {
    pub fn new(tree: CorpusTree) -> Self {
        CorpusHost {
            tree,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn tree(&self) -> &CorpusTree {
        &self.tree
    }

    /// Next per-site request number.
    pub fn next_reload(&self, site_id: &str) -> u64 {
        let counter = self
            .counters
            .lock()
            .expect("counter map poisoned")
            .entry(site_id.to_string())
            .or_default()
            .clone();
        counter.fetch_add(1, Ordering::SeqCst)
    }
}

impl PageHost for CorpusHost {
    fn fetch_page(&self, url: &str) -> Result<(u16, String), String> {
        let (site, rest) = split_fixture_path(url).ok_or_else(|| format!("not a fixture URL: {url}"))?;
        let reload = if self.tree.is_per_reload(&site) {
            self.next_reload(&site)
        } else {
            0
        };
        let resp = self.tree.respond(&site, &rest, reload);
        Ok((resp.status, String::from_utf8_lossy(&resp.body).into_owned()))
    }

    fn fetch_image(&self, page_url: &str, src: &str) -> Option<RgbImage> {
        let (site, _) = split_fixture_path(page_url)?;
        let resp = self.tree.respond(&site, src, 0);
        (resp.status == 200)
            .then(|| image::load_from_memory(&resp.body).ok().map(|i| i.to_rgb8()))
            .flatten()
    }
}

/// Virtual-clock session over a [`PageHost`]; time only moves when the
/// capture code pauses or issues commands.
pub struct OfflineSession {
    host: Arc<dyn PageHost>,
    clock: f64,
    loaded_at: f64,
    window: (u32, u32),
    page: Option<EmulatedPage>,
    stalled: Vec<String>,
}

/// Virtual seconds a navigation takes.
const NAV_COST: f64 = 0.05;

impl OfflineSession {
    pub fn new(host: Arc<dyn PageHost>, viewport_width: u32) -> Self {
        OfflineSession {
            host,
            clock: 0.0,
            loaded_at: 0.0,
            window: (viewport_width, 1080),
            page: None,
            stalled: Vec::new(),
        }
    }

    fn elapsed_ms(&self) -> u64 {
        ((self.clock - self.loaded_at) * 1000.0).round().max(0.0) as u64
    }

    fn page(&mut self) -> Result<&mut EmulatedPage, CaptureError> {
        self.page
            .as_mut()
            .ok_or_else(|| CaptureError::Session("no page loaded".into()))
    }

    fn ready(&self) -> bool {
        self.page
            .as_ref()
            .is_some_and(|p| !self.stalled.iter().any(|s| p.url.contains(s.as_str())))
    }
}

impl BrowserSession for OfflineSession {
    fn navigate(&mut self, url: &str) -> Result<(), CaptureError> {
        let page = EmulatedPage::load(self.host.as_ref(), url).map_err(CaptureError::Session)?;
        self.clock += NAV_COST;
        self.loaded_at = self.clock;
        self.page = Some(page);
        Ok(())
    }

    fn execute(&mut self, script: &str, args: Vec<Value>) -> Result<Value, CaptureError> {
        let (width, elapsed, ready) = (self.window.0, self.elapsed_ms(), self.ready());
        self.page()?
            .execute(script, &args, width, elapsed, ready)
            .map_err(|e| CaptureError::Session(format!("javascript error: {e:?}")))
    }

    fn find_element(&mut self, css: &str) -> Result<Option<ElementRef>, CaptureError> {
        Ok(self
            .page()?
            .find(css)
            .map_err(CaptureError::Session)?
            .map(|uid| ElementRef(uid.to_string())))
    }

    fn click(&mut self, element: &ElementRef) -> Result<(), CaptureError> {
        let uid: usize = element
            .0
            .parse()
            .map_err(|_| CaptureError::Session(format!("stale element {}", element.0)))?;
        if self.page()?.click(uid) {
            Ok(())
        } else {
            Err(CaptureError::Session(format!("stale element {}", element.0)))
        }
    }

    fn full_page_screenshot(&mut self) -> Result<Option<RgbImage>, CaptureError> {
        let (width, elapsed) = (self.window.0, self.elapsed_ms());
        let host = self.host.clone();
        Ok(Some(self.page()?.screenshot(host.as_ref(), width, None, elapsed)))
    }

    fn viewport_screenshot(&mut self) -> Result<RgbImage, CaptureError> {
        let ((width, height), elapsed) = (self.window, self.elapsed_ms());
        let host = self.host.clone();
        Ok(self.page()?.screenshot(host.as_ref(), width, Some(height), elapsed))
    }

    fn set_window_size(&mut self, width: u32, height: u32) -> Result<(), CaptureError> {
        self.window = (width.max(1), height.max(1));
        Ok(())
    }

    fn now(&self) -> f64 {
        self.clock
    }

    fn pause(&mut self, seconds: f64) {
        if seconds > 0.0 {
            self.clock += seconds;
        }
    }
}

/// Opens [`OfflineSession`]s over one shared host.
#[derive(Clone)]
pub struct OfflineFactory {
    host: Arc<dyn PageHost>,
    stalled: Vec<String>,
}

impl OfflineFactory {
    pub fn new(host: Arc<dyn PageHost>) -> Self {
        OfflineFactory {
            host,
            stalled: Vec::new(),
        }
    }

    pub fn for_corpus(tree: CorpusTree) -> Self {
        Self::new(Arc::new(CorpusHost::new(tree)))
    }

    /// Pages whose URL contains `fragment` never finish loading.
    pub fn with_stalled(mut self, fragment: impl Into<String>) -> Self {
        self.stalled.push(fragment.into());
        self
    }
}

impl SessionFactory for OfflineFactory {
    fn open(&self, cfg: &BrowserConfig) -> Result<Box<dyn BrowserSession + Send>, CaptureError> {
        cfg.validate()?;
        let mut s = OfflineSession::new(self.host.clone(), cfg.viewport_width);
        s.stalled = self.stalled.clone();
        Ok(Box::new(s))
    }
}
