//! Deterministic rasterizer for fixture pages. Every element is an absolutely
//! positioned box; text is drawn as glyph bars whose shape depends on the
//! character and the font family.

use image::{imageops, Rgb, RgbImage};

use super::dom::{Child, Document, Element};

const DEFAULT_FONT_SIZE: u32 = 14;
const TEXT_PAD: i64 = 2;

pub type ImageLoader<'a> = &'a dyn Fn(&str) -> Option<RgbImage>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FontFamily {
    Sans,
    Serif,
    Mono,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Style {
    pub left: Option<i64>,
    pub top: Option<i64>,
    pub width: Option<i64>,
    pub height: Option<i64>,
    pub background: Option<Rgb<u8>>,
    pub color: Option<Rgb<u8>>,
    pub font_family: Option<FontFamily>,
    pub font_size: Option<u32>,
    pub hidden: bool,
}

pub fn parse_color(s: &str) -> Option<Rgb<u8>> {
    let s = s.trim().to_ascii_lowercase();
    if let Some(hex) = s.strip_prefix('#') {
        let digits: Vec<u8> = hex
            .chars()
            .map(|c| c.to_digit(16).map(|d| d as u8))
            .collect::<Option<_>>()?;
        return match digits.len() {
            3 => Some(Rgb([digits[0] * 17, digits[1] * 17, digits[2] * 17])),
            6 => Some(Rgb([
                digits[0] * 16 + digits[1],
                digits[2] * 16 + digits[3],
                digits[4] * 16 + digits[5],
            ])),
            _ => None,
        };
    }
    Some(match s.as_str() {
        "white" => Rgb([255, 255, 255]),
        "black" => Rgb([0, 0, 0]),
        "red" => Rgb([255, 0, 0]),
        "green" => Rgb([0, 128, 0]),
        "blue" => Rgb([0, 0, 255]),
        "gray" | "grey" => Rgb([128, 128, 128]),
        "yellow" => Rgb([255, 255, 0]),
        "orange" => Rgb([255, 165, 0]),
        _ => return None,
    })
}

fn parse_px(v: &str) -> Option<i64> {
    let v = v.trim().trim_end_matches("px").trim();
    v.parse::<f64>().ok().map(|f| f.round() as i64)
}

pub fn parse_style(css: &str) -> Style {
    let mut st = Style::default();
    for decl in css.split(';') {
        let Some((k, v)) = decl.split_once(':') else { continue };
        let v = v.trim();
        match k.trim().to_ascii_lowercase().as_str() {
            "left" => st.left = parse_px(v),
            "top" => st.top = parse_px(v),
            "width" => st.width = parse_px(v),
            "height" => st.height = parse_px(v),
            "background" | "background-color" => st.background = parse_color(v),
            "color" => st.color = parse_color(v),
            "font-size" => st.font_size = parse_px(v).map(|p| p.clamp(4, 200) as u32),
            "font-family" => {
                let v = v.to_ascii_lowercase();
                st.font_family = Some(if v.contains("mono") {
                    FontFamily::Mono
                } else if v.contains("sans") {
                    FontFamily::Sans
                } else if v.contains("serif") {
                    FontFamily::Serif
                } else {
                    FontFamily::Sans
                });
            }
            "display" => st.hidden = v.eq_ignore_ascii_case("none"),
            "visibility" => st.hidden |= v.eq_ignore_ascii_case("hidden"),
            _ => {}
        }
    }
    st
}

#[derive(Debug, Clone, Copy)]
struct Inherited {
    color: Rgb<u8>,
    family: FontFamily,
    size: u32,
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

/// Child elements that are visible at `elapsed_ms`. Elements with
/// `data-cycle-ms` show exactly one child at a time.
fn visible_children(e: &Element, elapsed_ms: u64) -> Vec<&Element> {
    let kids: Vec<&Element> = e.elements().collect();
    match e.attr("data-cycle-ms").and_then(|v| v.parse::<u64>().ok()) {
        Some(cycle) if cycle > 0 && !kids.is_empty() => {
            let k = ((elapsed_ms / cycle) % kids.len() as u64) as usize;
            vec![kids[k]]
        }
        _ => kids,
    }
}

fn own_text(e: &Element) -> String {
    let mut s = String::new();
    for c in &e.children {
        if let Child::Text(t) = c {
            s.push_str(t);
            s.push(' ');
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_drawable(tag: &str) -> bool {
    !matches!(tag, "script" | "style" | "head" | "title" | "meta")
}

struct Painter<'a> {
    canvas: RgbImage,
    images: ImageLoader<'a>,
    elapsed_ms: u64,
}

fn glyph_advance(family: FontFamily, size: u32, c: char) -> i64 {
    let s = size as f64;
    let f = match family {
        FontFamily::Mono => 0.62,
        FontFamily::Serif => {
            if "iljtf.,;:'!|".contains(c) {
                0.34
            } else if c.is_uppercase() || "mw".contains(c) {
                0.72
            } else {
                0.56
            }
        }
        FontFamily::Sans => {
            if "iljtf.,;:'!|".contains(c) {
                0.3
            } else if c.is_uppercase() || "mw".contains(c) {
                0.66
            } else {
                0.52
            }
        }
    };
    ((s * f).round() as i64).max(2)
}

impl Painter<'_> {
    fn fill(&mut self, r: Rect, color: Rgb<u8>) {
        let (cw, ch) = (self.canvas.width() as i64, self.canvas.height() as i64);
        let x0 = r.x.clamp(0, cw);
        let x1 = (r.x + r.w).clamp(0, cw);
        let y0 = r.y.clamp(0, ch);
        let y1 = (r.y + r.h).clamp(0, ch);
        for y in y0..y1 {
            for x in x0..x1 {
                self.canvas.put_pixel(x as u32, y as u32, color);
            }
        }
    }

    fn outline(&mut self, r: Rect, color: Rgb<u8>) {
        self.fill(Rect { h: 1, ..r }, color);
        self.fill(
            Rect {
                y: r.y + r.h - 1,
                h: 1,
                ..r
            },
            color,
        );
        self.fill(Rect { w: 1, ..r }, color);
        self.fill(
            Rect {
                x: r.x + r.w - 1,
                w: 1,
                ..r
            },
            color,
        );
    }

    fn glyph(&mut self, x: i64, baseline: i64, c: char, inh: Inherited) {
        let size = inh.size as i64;
        let adv = glyph_advance(inh.family, inh.size, c);
        let w = (adv - 1).max(1);
        let tall = c.is_uppercase() || c.is_ascii_digit() || "bdfhklt".contains(c);
        let h = if tall { size * 7 / 10 } else { size / 2 }.max(2);
        let top = baseline - h;
        let code = c as u32;
        let stem = (w / 4).max(1);
        for i in 0..3 {
            if (code >> i) & 1 == 1 {
                self.fill(
                    Rect {
                        x: x + i * (w - stem) / 2,
                        y: top,
                        w: stem,
                        h,
                    },
                    inh.color,
                );
            }
        }
        if (code >> 3) & 1 == 1 || code & 7 == 0 {
            self.fill(
                Rect {
                    x,
                    y: top + h / 2,
                    w,
                    h: 1,
                },
                inh.color,
            );
        }
        match inh.family {
            FontFamily::Serif => self.fill(
                Rect {
                    x: x - 1,
                    y: baseline - 1,
                    w: w + 2,
                    h: 1,
                },
                inh.color,
            ),
            FontFamily::Mono => self.fill(Rect { x, y: top, w, h: 1 }, inh.color),
            FontFamily::Sans => {}
        }
    }

    fn text(&mut self, text: &str, r: Rect, inh: Inherited) {
        let line_h = (inh.size as i64 * 14) / 10;
        let mut x = r.x + TEXT_PAD;
        let mut baseline = r.y + TEXT_PAD + inh.size as i64;
        let right = r.x + r.w - TEXT_PAD;
        for word in text.split(' ') {
            let ww: i64 = word.chars().map(|c| glyph_advance(inh.family, inh.size, c)).sum();
            if x + ww > right && x > r.x + TEXT_PAD {
                x = r.x + TEXT_PAD;
                baseline += line_h;
            }
            for c in word.chars() {
                self.glyph(x, baseline, c, inh);
                x += glyph_advance(inh.family, inh.size, c);
            }
            x += glyph_advance(inh.family, inh.size, ' ');
        }
    }

    fn element(&mut self, e: &Element, parent: Rect, inh: Inherited) {
        if !is_drawable(&e.tag) {
            return;
        }
        let st = e.attr("style").map(parse_style).unwrap_or_default();
        if st.hidden {
            return;
        }
        let r = layout(e, &st, parent);
        let inh = Inherited {
            color: st.color.unwrap_or(inh.color),
            family: st.font_family.unwrap_or(inh.family),
            size: st.font_size.unwrap_or(inh.size),
        };
        if let Some(bg) = st.background {
            self.fill(r, bg);
        }
        if e.tag == "img" {
            self.image(e, r);
        }
        let text = own_text(e);
        if !text.is_empty() {
            self.text(&text, r, inh);
        }
        for child in visible_children(e, self.elapsed_ms) {
            self.element(child, r, inh);
        }
    }

    fn image(&mut self, e: &Element, r: Rect) {
        let loaded = e.attr("src").and_then(|src| (self.images)(src));
        match loaded {
            Some(img) if r.w > 0 && r.h > 0 => {
                let scaled = if img.dimensions() == (r.w as u32, r.h as u32) {
                    img
                } else {
                    imageops::resize(&img, r.w as u32, r.h as u32, imageops::FilterType::Nearest)
                };
                imageops::replace(&mut self.canvas, &scaled, r.x, r.y);
            }
            Some(_) => {}
            // broken image: a thin frame where the picture should be
            None => self.outline(r, Rgb([190, 190, 190])),
        }
    }
}

fn layout(e: &Element, st: &Style, parent: Rect) -> Rect {
    let x = parent.x + st.left.unwrap_or(0);
    let y = parent.y + st.top.unwrap_or(0);
    let w = st.width.unwrap_or(parent.w - st.left.unwrap_or(0)).max(0);
    let h = st.height.unwrap_or_else(|| {
        let size = st.font_size.unwrap_or(DEFAULT_FONT_SIZE) as i64;
        if own_text(e).is_empty() {
            0
        } else {
            size * 14 / 10 + 2 * TEXT_PAD
        }
    });
    Rect { x, y, w, h: h.max(0) }
}

fn max_bottom(e: &Element, parent: Rect, elapsed_ms: u64) -> i64 {
    if !is_drawable(&e.tag) {
        return 0;
    }
    let st = e.attr("style").map(parse_style).unwrap_or_default();
    if st.hidden {
        return 0;
    }
    let r = layout(e, &st, parent);
    visible_children(e, elapsed_ms)
        .into_iter()
        .map(|c| max_bottom(c, r, elapsed_ms))
        .fold(r.y + r.h, i64::max)
}

fn body_rect(width: u32) -> Rect {
    Rect {
        x: 0,
        y: 0,
        w: width as i64,
        h: 0,
    }
}

/// Full document height at `width`, never less than 1.
pub fn document_height(doc: &Document, width: u32, elapsed_ms: u64) -> u32 {
    let Some(body) = doc.body() else { return 1 };
    max_bottom(body, body_rect(width), elapsed_ms).clamp(1, 32_000) as u32
}

/// Render the top `height` rows (the whole document when `None`).
pub fn render(doc: &Document, width: u32, height: Option<u32>, elapsed_ms: u64, images: ImageLoader<'_>) -> RgbImage {
    let height = height.unwrap_or_else(|| document_height(doc, width, elapsed_ms)).max(1);
    let mut painter = Painter {
        canvas: RgbImage::from_pixel(width.max(1), height, Rgb([255, 255, 255])),
        images,
        elapsed_ms,
    };
    if let Some(body) = doc.body() {
        let inh = Inherited {
            color: Rgb([0, 0, 0]),
            family: FontFamily::Sans,
            size: DEFAULT_FONT_SIZE,
        };
        painter.element(body, body_rect(width), inh);
    }
    painter.canvas
}
