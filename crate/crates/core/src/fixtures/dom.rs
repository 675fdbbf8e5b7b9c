//! Tiny DOM over the restricted, well-formed markup the fixture pages use.

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};

#[derive(Debug, Clone, PartialEq)]
pub enum Child {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    /// Stable id within one parsed document; used as the element reference.
    pub uid: usize,
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Child>,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    pub fn id(&self) -> Option<&str> {
        self.attr("id")
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.attr("class")
            .is_some_and(|c| c.split_whitespace().any(|x| x == class))
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            Child::Element(e) => Some(e),
            Child::Text(_) => None,
        })
    }

    /// Text content, ignoring `script` and `style`.
    pub fn text(&self) -> String {
        let mut out = String::new();
        collect_text(self, &mut out);
        out
    }
}

fn collect_text(e: &Element, out: &mut String) {
    if matches!(e.tag.as_str(), "script" | "style" | "head") {
        return;
    }
    for c in &e.children {
        match c {
            Child::Text(t) => out.push_str(t),
            Child::Element(child) => collect_text(child, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub root: Element,
}

#[derive(Debug, thiserror::Error)]
#[error("fixture markup: {0}")]
pub struct DomError(pub String);

fn start_element(e: &BytesStart<'_>, uid: usize) -> Result<Element, DomError> {
    let tag = e.name().as_ref().to_ascii_lowercase();
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| DomError(err.to_string()))?;
        let key = a.key.as_ref().to_string();
        let value = a
            .normalized_value(XmlVersion::Implicit1_0)
            .map_err(|err| DomError(err.to_string()))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        uid,
        tag,
        attrs,
        children: Vec::new(),
    })
}

fn entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        _ => return None,
    })
}

impl Document {
    pub fn parse(markup: &str) -> Result<Document, DomError> {
        let mut reader = Reader::from_str(markup);
        reader.config_mut().trim_text(false);
        let mut stack: Vec<Element> = vec![Element {
            uid: 0,
            tag: "#document".into(),
            attrs: Vec::new(),
            children: Vec::new(),
        }];
        let mut next_uid = 1;
        let push_text = |stack: &mut Vec<Element>, text: &str| {
            let top = stack.last_mut().expect("stack never empty");
            if let Some(Child::Text(prev)) = top.children.last_mut() {
                prev.push_str(text);
            } else {
                top.children.push(Child::Text(text.to_string()));
            }
        };
        loop {
            let ev = reader
                .read_event()
                .map_err(|e| DomError(format!("at byte {}: {e}", reader.buffer_position())))?;
            match ev {
                Event::Start(e) => {
                    stack.push(start_element(&e, next_uid)?);
                    next_uid += 1;
                }
                Event::Empty(e) => {
                    let el = start_element(&e, next_uid)?;
                    next_uid += 1;
                    stack.last_mut().expect("stack").children.push(Child::Element(el));
                }
                Event::End(e) => {
                    let name = e.name().as_ref().to_ascii_lowercase();
                    if stack.len() < 2 {
                        return Err(DomError(format!("unexpected </{name}>")));
                    }
                    let el = stack.pop().expect("checked");
                    if el.tag != name {
                        return Err(DomError(format!("</{name}> closes <{}>", el.tag)));
                    }
                    stack.last_mut().expect("stack").children.push(Child::Element(el));
                }
                Event::Text(t) => push_text(&mut stack, &t.html_content()),
                Event::CData(t) => push_text(&mut stack, &t.html_content()),
                Event::GeneralRef(r) => {
                    let c = if r.is_char_ref() {
                        r.resolve_char_ref().map_err(|e| DomError(e.to_string()))?
                    } else {
                        entity(&r.html_content())
                    };
                    let c = c.ok_or_else(|| DomError(format!("unknown entity &{};", r.html_content())))?;
                    push_text(&mut stack, c.encode_utf8(&mut [0; 4]));
                }
                Event::Eof => break,
                Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            }
        }
        if stack.len() != 1 {
            return Err(DomError(format!("unclosed <{}>", stack.last().expect("stack").tag)));
        }
        Ok(Document {
            root: stack.pop().expect("document node"),
        })
    }

    pub fn body(&self) -> Option<&Element> {
        find_first(&self.root, &|e| e.tag == "body")
    }

    pub fn find(&self, pred: &dyn Fn(&Element) -> bool) -> Option<&Element> {
        find_first(&self.root, pred)
    }

    pub fn find_all(&self, pred: &dyn Fn(&Element) -> bool) -> Vec<&Element> {
        let mut out = Vec::new();
        walk(&self.root, &mut |e| {
            if pred(e) {
                out.push(e);
            }
        });
        out
    }

    pub fn by_uid(&self, uid: usize) -> Option<&Element> {
        find_first(&self.root, &|e| e.uid == uid)
    }

    pub fn by_id(&self, id: &str) -> Option<&Element> {
        find_first(&self.root, &|e| e.id() == Some(id))
    }

    /// Remove the element with `uid` and its subtree. Returns whether it existed.
    pub fn remove(&mut self, uid: usize) -> bool {
        remove_in(&mut self.root, uid)
    }

    pub fn text(&self) -> String {
        self.body().map(Element::text).unwrap_or_default()
    }
}

fn walk<'a>(e: &'a Element, f: &mut dyn FnMut(&'a Element)) {
    f(e);
    for c in e.elements() {
        walk(c, f);
    }
}

fn find_first<'a>(e: &'a Element, pred: &dyn Fn(&Element) -> bool) -> Option<&'a Element> {
    if pred(e) {
        return Some(e);
    }
    e.elements().find_map(|c| find_first(c, pred))
}

fn remove_in(e: &mut Element, uid: usize) -> bool {
    let before = e.children.len();
    e.children.retain(|c| !matches!(c, Child::Element(x) if x.uid == uid));
    if e.children.len() != before {
        return true;
    }
    e.children.iter_mut().any(|c| match c {
        Child::Element(x) => remove_in(x, uid),
        Child::Text(_) => false,
    })
}

/// One compound selector: `tag`, `#id`, `.class`, `[attr]`, `[attr=value]`
/// in any combination without combinators. Comma lists are alternatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    alternatives: Vec<Compound>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Compound {
    tag: Option<String>,
    id: Option<String>,
    classes: Vec<String>,
    attrs: Vec<(String, Option<String>)>,
}

impl Selector {
    pub fn parse(css: &str) -> Result<Selector, DomError> {
        let mut alternatives = Vec::new();
        for part in css.split(',') {
            let part = part.trim();
            if part.is_empty() || part.contains(char::is_whitespace) || part.contains('>') {
                return Err(DomError(format!("unsupported selector {css:?}")));
            }
            alternatives.push(parse_compound(part).ok_or_else(|| DomError(format!("bad selector {css:?}")))?);
        }
        Ok(Selector { alternatives })
    }

    pub fn matches(&self, e: &Element) -> bool {
        self.alternatives.iter().any(|c| {
            c.tag.as_ref().is_none_or(|t| *t == e.tag)
                && c.id.as_ref().is_none_or(|i| e.id() == Some(i.as_str()))
                && c.classes.iter().all(|cl| e.has_class(cl))
                && c.attrs.iter().all(|(k, v)| match (e.attr(k), v) {
                    (Some(actual), Some(want)) => actual == want,
                    (Some(_), None) => true,
                    (None, _) => false,
                })
        })
    }
}

fn ident_end(s: &str) -> usize {
    s.find(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .unwrap_or(s.len())
}

fn parse_compound(mut s: &str) -> Option<Compound> {
    let mut c = Compound::default();
    let end = ident_end(s);
    if end > 0 {
        c.tag = Some(s[..end].to_ascii_lowercase());
        s = &s[end..];
    } else if let Some(rest) = s.strip_prefix('*') {
        s = rest;
    }
    while !s.is_empty() {
        if let Some(rest) = s.strip_prefix('#') {
            let end = ident_end(rest);
            c.id = Some(rest[..end].to_string());
            s = &rest[end..];
        } else if let Some(rest) = s.strip_prefix('.') {
            let end = ident_end(rest);
            c.classes.push(rest[..end].to_string());
            s = &rest[end..];
        } else {
            let rest = s.strip_prefix('[')?;
            let close = rest.find(']')?;
            let inner = &rest[..close];
            let (k, v) = match inner.split_once('=') {
                Some((k, v)) => (
                    k.trim(),
                    Some(v.trim().trim_matches(|q| q == '"' || q == '\'').to_string()),
                ),
                None => (inner.trim(), None),
            };
            c.attrs.push((k.to_string(), v));
            s = &rest[close + 1..];
        }
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAGE: &str = r#"<!DOCTYPE html>
<html><head><title>t</title></head>
<body><div id="a" class="box big"><p>Hello &amp; bye</p></div>
<div data-popup="modal" role="dialog" id="m"><button id="x">Close</button></div></body></html>"#;

    #[test]
    fn parse_and_query() {
        let doc = Document::parse(PAGE).unwrap();
        assert!(doc.text().contains("Hello & bye"));
        let sel = Selector::parse("div.box").unwrap();
        assert_eq!(doc.find(&|e| sel.matches(e)).unwrap().id(), Some("a"));
        let sel = Selector::parse("[data-popup=modal]").unwrap();
        assert_eq!(doc.find(&|e| sel.matches(e)).unwrap().id(), Some("m"));
        assert!(Selector::parse("div p").is_err());
    }

    #[test]
    fn remove_subtree() {
        let mut doc = Document::parse(PAGE).unwrap();
        let uid = doc.by_id("m").unwrap().uid;
        assert!(doc.remove(uid));
        assert!(doc.by_id("x").is_none());
        assert!(!doc.remove(uid));
    }

    #[test]
    fn malformed_rejected() {
        assert!(Document::parse("<body><div></body>").is_err());
    }
}
