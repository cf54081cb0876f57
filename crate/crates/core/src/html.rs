//! A small, strict HTML/XHTML tree parser for converter output.
//!
//! LaTeXML emits well-formed markup, so the parser rejects input that ends
//! with unclosed elements or carries mismatched end tags (a truncated file
//! is a parse error, not a partial tree). Only elements whose end tag HTML
//! makes optional (`p`, `li`, `td`, ...) are closed implicitly.

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 512;

const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source",
    "track", "wbr",
];

const OPTIONAL_END: &[&str] = &[
    "p", "li", "dt", "dd", "tr", "td", "th", "option", "thead", "tbody", "tfoot", "colgroup",
    "html", "head", "body",
];

const RAW_TEXT: &[&str] = &["script", "style"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Element(Element),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Element {
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub classes: Vec<String>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(tag: impl Into<String>) -> Self {
        Element {
            tag: tag.into(),
            ..Default::default()
        }
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    pub fn has_class_prefix(&self, prefix: &str) -> Option<&str> {
        self.classes
            .iter()
            .find_map(|c| c.strip_prefix(prefix).filter(|rest| !rest.is_empty()))
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    /// Concatenated text of all descendants.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        self.collect_text(&mut out);
        out
    }

    fn collect_text(&self, out: &mut String) {
        for child in &self.children {
            match child {
                Node::Text(t) => out.push_str(t),
                Node::Element(e) => e.collect_text(out),
            }
        }
    }

    /// Pre-order traversal of descendant elements (excluding `self`).
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants {
            stack: self.child_elements().collect::<Vec<_>>().into_iter().rev().collect(),
        }
    }

    /// First descendant element (pre-order) matching `pred`.
    pub fn find(&self, pred: impl Fn(&Element) -> bool) -> Option<&Element> {
        self.descendants().find(|e| pred(e))
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a Element>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a Element;

    fn next(&mut self) -> Option<&'a Element> {
        let next = self.stack.pop()?;
        let before = self.stack.len();
        self.stack.extend(next.child_elements());
        self.stack[before..].reverse();
        Some(next)
    }
}

/// Parses `input` into a synthetic `#document` root element.
pub fn parse(input: &str) -> Result<Element> {
    Parser {
        src: input,
        pos: 0,
        stack: vec![Element::new("#document")],
    }
    .run()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    stack: Vec<Element>,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Html {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn run(mut self) -> Result<Element> {
        while self.pos < self.src.len() {
            let rest = self.rest();
            if rest.starts_with("<!--") {
                let end = rest[4..]
                    .find("-->")
                    .ok_or_else(|| self.error("unterminated comment"))?;
                self.pos += 4 + end + 3;
            } else if rest.starts_with("<![CDATA[") {
                let end = rest[9..]
                    .find("]]>")
                    .ok_or_else(|| self.error("unterminated CDATA section"))?;
                let text = rest[9..9 + end].to_string();
                self.push_text(text);
                self.pos += 9 + end + 3;
            } else if rest.starts_with("<!") || rest.starts_with("<?") {
                let end = rest
                    .find('>')
                    .ok_or_else(|| self.error("unterminated declaration"))?;
                self.pos += end + 1;
            } else if rest.starts_with("</") {
                self.end_tag()?;
            } else if rest.starts_with('<')
                && rest[1..].starts_with(|c: char| c.is_ascii_alphabetic())
            {
                self.start_tag()?;
            } else {
                let skip = rest.chars().next().map_or(1, char::len_utf8);
                let end = rest[skip..]
                    .find('<')
                    .map(|i| i + skip)
                    .unwrap_or(rest.len());
                let text = decode_entities(&rest[..end]);
                self.push_text(text);
                self.pos += end;
            }
        }
        while self.stack.len() > 1 {
            let top = self.stack.last().expect("non-empty stack");
            if !OPTIONAL_END.contains(&top.tag.as_str()) {
                return Err(self.error(format!("unexpected end of input inside <{}>", top.tag)));
            }
            self.close_top();
        }
        Ok(self.stack.pop().expect("document root"))
    }

    fn push_text(&mut self, text: String) {
        if text.is_empty() {
            return;
        }
        let top = self.stack.last_mut().expect("non-empty stack");
        if let Some(Node::Text(prev)) = top.children.last_mut() {
            prev.push_str(&text);
        } else {
            top.children.push(Node::Text(text));
        }
    }

    fn close_top(&mut self) {
        let done = self.stack.pop().expect("element to close");
        self.stack
            .last_mut()
            .expect("parent element")
            .children
            .push(Node::Element(done));
    }

    fn read_name(&mut self) -> String {
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '-' | ':' | '_' | '.')))
            .unwrap_or(rest.len());
        self.pos += len;
        rest[..len].to_ascii_lowercase()
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
    }

    fn end_tag(&mut self) -> Result<()> {
        self.pos += 2;
        let name = self.read_name();
        self.skip_ws();
        if !self.rest().starts_with('>') {
            return Err(self.error(format!("malformed end tag </{name}")));
        }
        self.pos += 1;
        let Some(depth) = self.stack.iter().rposition(|e| e.tag == name) else {
            return Err(self.error(format!("stray end tag </{name}>")));
        };
        if depth == 0 {
            return Err(self.error(format!("stray end tag </{name}>")));
        }
        for open in &self.stack[depth + 1..] {
            if !OPTIONAL_END.contains(&open.tag.as_str()) {
                return Err(self.error(format!(
                    "end tag </{name}> does not match open <{}>",
                    open.tag
                )));
            }
        }
        while self.stack.len() > depth {
            self.close_top();
        }
        Ok(())
    }

    fn start_tag(&mut self) -> Result<()> {
        self.pos += 1;
        let tag = self.read_name();
        let mut el = Element::new(tag);
        let self_closing;
        loop {
            self.skip_ws();
            let rest = self.rest();
            if rest.is_empty() {
                return Err(self.error(format!("unterminated start tag <{}", el.tag)));
            }
            if rest.starts_with("/>") {
                self.pos += 2;
                self_closing = true;
                break;
            }
            if rest.starts_with('>') {
                self.pos += 1;
                self_closing = false;
                break;
            }
            let name = self.read_name();
            if name.is_empty() {
                // Skip a junk character inside the tag.
                let c = rest.chars().next().expect("non-empty rest");
                if c == '<' {
                    return Err(self.error(format!("unterminated start tag <{}", el.tag)));
                }
                self.pos += c.len_utf8();
                continue;
            }
            self.skip_ws();
            let value = if self.rest().starts_with('=') {
                self.pos += 1;
                self.skip_ws();
                self.attr_value()?
            } else {
                String::new()
            };
            if name == "class" {
                el.classes = value.split_whitespace().map(str::to_string).collect();
            }
            if !el.attrs.iter().any(|(k, _)| *k == name) {
                el.attrs.push((name, value));
            }
        }

        if self_closing || VOID_ELEMENTS.contains(&el.tag.as_str()) {
            self.stack
                .last_mut()
                .expect("non-empty stack")
                .children
                .push(Node::Element(el));
            return Ok(());
        }
        if self.stack.len() > MAX_DEPTH {
            return Err(self.error("element nesting too deep"));
        }
        if RAW_TEXT.contains(&el.tag.as_str()) {
            let close = format!("</{}", el.tag);
            let rest = self.rest();
            let end = find_ascii_ci(rest, &close)
                .ok_or_else(|| self.error(format!("unterminated <{}>", el.tag)))?;
            if end > 0 {
                el.children.push(Node::Text(rest[..end].to_string()));
            }
            self.pos += end;
            self.stack.push(el);
            return Ok(());
        }
        self.stack.push(el);
        Ok(())
    }

    fn attr_value(&mut self) -> Result<String> {
        let rest = self.rest();
        match rest.chars().next() {
            Some(q @ ('"' | '\'')) => {
                let end = rest[1..]
                    .find(q)
                    .ok_or_else(|| self.error("unterminated attribute value"))?;
                self.pos += end + 2;
                Ok(decode_entities(&rest[1..1 + end]))
            }
            Some(_) => {
                let len = rest
                    .find(|c: char| c.is_whitespace() || c == '>')
                    .unwrap_or(rest.len());
                let len = if rest[..len].ends_with('/') && rest[len..].starts_with('>') {
                    len - 1
                } else {
                    len
                };
                self.pos += len;
                Ok(decode_entities(&rest[..len]))
            }
            None => Err(self.error("missing attribute value")),
        }
    }
}

fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn named_entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "hellip" => '\u{2026}',
        "lsquo" => '\u{2018}',
        "rsquo" => '\u{2019}',
        "ldquo" => '\u{201c}',
        "rdquo" => '\u{201d}',
        "times" => '\u{d7}',
        "middot" => '\u{b7}',
        "minus" => '\u{2212}',
        "thinsp" => '\u{2009}',
        "ensp" => '\u{2002}',
        "emsp" => '\u{2003}',
        "copy" => '\u{a9}',
        "deg" => '\u{b0}',
        "InvisibleTimes" => '\u{2062}',
        "ApplyFunction" => '\u{2061}',
        _ => return None,
    })
}

/// Replaces character references; unknown references are kept verbatim.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest[1..].find(';').filter(|&i| i <= 32).and_then(|semi| {
            let body = &rest[1..1 + semi];
            let c = if let Some(num) = body.strip_prefix('#') {
                let code = match num.strip_prefix(['x', 'X']) {
                    Some(hex) => u32::from_str_radix(hex, 16).ok(),
                    None => num.parse::<u32>().ok(),
                };
                code.and_then(char::from_u32)
            } else {
                named_entity(body)
            };
            c.map(|c| (c, semi + 2))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}
