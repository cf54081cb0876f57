//! Statement discovery over LaTeXML-flavoured HTML.
//!
//! Class contract:
//!
//! * theorem-like environments carry `ltx_theorem` plus `ltx_theorem_<env>`;
//!   proofs are `ltx_proof`.
//! * sectional units (`ltx_section`, `ltx_abstract`, ...) are matched by the
//!   text of their `ltx_title` child, excluding `ltx_tag` numbering.
//! * paragraph containers are `ltx_para` (falling back to bare `ltx_p`, then
//!   to the unit's own loose text).
//! * display math is an `ltx_equation`/`ltx_equationgroup` block or a
//!   `<math display="block">`.
//! * conversion errors are marked with `ltx_ERROR`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::html::{self, Element, Node};
use crate::math::{self, MathNode};
use crate::taxonomy::{StatementLabel, Taxonomy};

const SECTIONAL: &[&str] = &[
    "ltx_chapter",
    "ltx_section",
    "ltx_subsection",
    "ltx_subsubsection",
    "ltx_paragraph",
    "ltx_subparagraph",
    "ltx_appendix",
    "ltx_abstract",
    "ltx_acknowledgements",
    "ltx_keywords",
];

const SKIPPED: &[&str] = &["ltx_title", "ltx_tag", "ltx_note", "ltx_bibliography"];

#[derive(Clone, Debug)]
pub struct ScholarlyDoc {
    pub doc_id: String,
    pub root: Element,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkipReason {
    ParseError,
    UnknownEnvironment,
    EmptyStatement,
    ErrorMarkup,
    LongWord,
    NonEnglish,
    EmptyAfterNormalization,
    Duplicate,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::ParseError => "parse-error",
            SkipReason::UnknownEnvironment => "unknown-env",
            SkipReason::EmptyStatement => "empty-statement",
            SkipReason::ErrorMarkup => "error-markup",
            SkipReason::LongWord => "long-word",
            SkipReason::NonEnglish => "non-english",
            SkipReason::EmptyAfterNormalization => "empty",
            SkipReason::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-reason skip counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipStats(pub BTreeMap<SkipReason, usize>);

impl SkipStats {
    pub fn bump(&mut self, reason: SkipReason) {
        *self.0.entry(reason).or_default() += 1;
    }

    pub fn get(&self, reason: SkipReason) -> usize {
        self.0.get(&reason).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &SkipStats) {
        for (&k, &v) in &other.0 {
            *self.0.entry(k).or_default() += v;
        }
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchSource {
    Environment,
    Heading,
}

#[derive(Clone, Debug)]
pub struct StatementMatch<'a> {
    pub element: &'a Element,
    pub label: StatementLabel,
    pub source: MatchSource,
    /// Number of enclosing matched statements.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Inline {
    Text(String),
    Math(MathNode),
    Citation,
    Reference,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Narrative(Vec<Inline>),
    Math(MathNode),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawStatement {
    pub label: StatementLabel,
    pub blocks: Vec<Block>,
    pub source_doc: String,
    pub depth: usize,
    /// The paragraph contains `ltx_ERROR` markup.
    pub error_markup: bool,
}

/// Parses a document; invalid UTF-8 is replaced rather than rejected.
pub fn parse_document(doc_id: impl Into<String>, bytes: &[u8]) -> Result<ScholarlyDoc> {
    let text = String::from_utf8_lossy(bytes);
    let root = html::parse(&text)?;
    if root.child_elements().next().is_none() {
        return Err(Error::Html {
            offset: 0,
            message: "no elements in document".into(),
        });
    }
    Ok(ScholarlyDoc {
        doc_id: doc_id.into(),
        root,
    })
}

fn is_statement_env(el: &Element) -> bool {
    el.has_class("ltx_proof") || (el.has_class("ltx_theorem") && env_name(el).is_some())
}

fn env_name(el: &Element) -> Option<&str> {
    if el.has_class("ltx_proof") {
        return Some("proof");
    }
    el.has_class_prefix("ltx_theorem_")
}

fn is_sectional(el: &Element) -> bool {
    SECTIONAL.iter().any(|c| el.has_class(c))
}

/// Heading text of a sectional unit: its direct `ltx_title` child with
/// numbering tags removed.
pub fn heading_text(el: &Element) -> Option<String> {
    let title = el.child_elements().find(|c| c.has_class("ltx_title"))?;
    let mut out = String::new();
    collect_visible_text(title, &mut out);
    Some(out)
}

fn collect_visible_text(el: &Element, out: &mut String) {
    for child in &el.children {
        match child {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) if e.has_class("ltx_tag") || e.has_class("ltx_note") => {}
            Node::Element(e) => collect_visible_text(e, out),
        }
    }
}

/// Folds a heading for closed-set matching: case-folded, trimmed, numbering
/// and punctuation removed from both ends.
pub fn fold_heading(text: &str) -> String {
    let junk = |c: char| {
        c.is_ascii_digit() || c.is_whitespace() || (c.is_ascii_punctuation() && c != '&')
    };
    let trimmed = text.trim_matches(junk);
    // Roman numeral numbering such as "IV." or "II "
    let trimmed = match trimmed.split_once(|c: char| c == '.' || c.is_whitespace()) {
        Some((head, tail))
            if !head.is_empty()
                && head.chars().all(|c| matches!(c, 'I' | 'V' | 'X'))
                && !tail.trim().is_empty() =>
        {
            tail.trim_matches(junk)
        }
        _ => trimmed,
    };
    trimmed
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Locates labelled statements in document order. Unknown environments and
/// unmatched headings are counted in `skips`.
pub fn find_statements<'a>(
    doc: &'a ScholarlyDoc,
    taxonomy: &Taxonomy,
    skips: &mut SkipStats,
) -> Vec<StatementMatch<'a>> {
    let mut out = Vec::new();
    walk(&doc.root, taxonomy, 0, skips, &mut out);
    out
}

fn walk<'a>(
    el: &'a Element,
    taxonomy: &Taxonomy,
    depth: usize,
    skips: &mut SkipStats,
    out: &mut Vec<StatementMatch<'a>>,
) {
    for child in el.child_elements() {
        let mut matched = None;
        if is_statement_env(child) {
            let env = env_name(child).unwrap_or_default();
            match taxonomy.canonicalize_env(env) {
                Some(label) => matched = Some((label.clone(), MatchSource::Environment)),
                None => skips.bump(SkipReason::UnknownEnvironment),
            }
        } else if is_sectional(child) {
            if let Some(title) = heading_text(child) {
                let folded = fold_heading(&title);
                if let Some(label) = taxonomy.canonicalize_env(&folded) {
                    if taxonomy.is_heading_label(label) {
                        matched = Some((label.clone(), MatchSource::Heading));
                    }
                }
            }
        }
        let next_depth = match matched {
            Some((label, source)) => {
                out.push(StatementMatch {
                    element: child,
                    label,
                    source,
                    depth,
                });
                depth + 1
            }
            None => depth,
        };
        walk(child, taxonomy, next_depth, skips, out);
    }
}

fn is_display_math(el: &Element) -> bool {
    el.has_class("ltx_equation")
        || el.has_class("ltx_equationgroup")
        || el.has_class("ltx_eqn_table")
        || el.has_class("ltx_displaymath")
        || (el.tag == "math" && el.attr("display") == Some("block"))
}

fn is_nested_unit(el: &Element) -> bool {
    is_statement_env(el) || is_sectional(el)
}

fn is_skipped(el: &Element) -> bool {
    SKIPPED.iter().any(|c| el.has_class(c))
}

/// Walks to the first paragraph container inside `unit`, without entering
/// nested statements or sections. Returns the container and its parent.
fn first_container<'a>(
    unit: &'a Element,
    is_container: &dyn Fn(&Element) -> bool,
) -> Option<(&'a Element, &'a Element)> {
    for child in unit.child_elements() {
        if is_nested_unit(child) || is_skipped(child) {
            continue;
        }
        if is_container(child) {
            return Some((child, unit));
        }
        if let Some(found) = first_container(child, is_container) {
            return Some(found);
        }
    }
    None
}

struct Extraction {
    blocks: Vec<Block>,
    error_markup: bool,
}

impl Extraction {
    fn narrative(&mut self, el: &Element) {
        let mut inlines = Vec::new();
        self.inline_content(el, &mut inlines);
        self.push_narrative(inlines);
    }

    fn push_narrative(&mut self, inlines: Vec<Inline>) {
        let has_content = inlines.iter().any(|i| match i {
            Inline::Text(t) => !t.trim().is_empty(),
            _ => true,
        });
        if has_content {
            self.blocks.push(Block::Narrative(inlines));
        }
    }

    fn display_math(&mut self, el: &Element) {
        if el.has_class("ltx_ERROR") || el.find(|e| e.has_class("ltx_ERROR")).is_some() {
            self.error_markup = true;
        }
        let mut rows = Vec::new();
        if el.tag == "math" {
            rows.push(math::from_mathml(el));
        } else {
            collect_math(el, &mut rows);
        }
        if !rows.is_empty() {
            let node = if rows.len() == 1 {
                rows.pop().expect("one row")
            } else {
                MathNode::row(rows)
            };
            self.blocks.push(Block::Math(node));
        }
    }

    fn container(&mut self, container: &Element) {
        let mut loose = Vec::new();
        for child in &container.children {
            match child {
                Node::Text(t) => loose.push(Inline::Text(t.clone())),
                Node::Element(e) if is_skipped(e) || is_nested_unit(e) => {}
                Node::Element(e) if is_display_math(e) => {
                    self.push_narrative(std::mem::take(&mut loose));
                    self.display_math(e);
                }
                Node::Element(e) if e.has_class("ltx_p") || is_block_tag(&e.tag) => {
                    self.push_narrative(std::mem::take(&mut loose));
                    if e.find(is_display_math).is_some() {
                        self.container(e);
                    } else {
                        self.narrative(e);
                    }
                }
                Node::Element(e) => self.inline_element(e, &mut loose),
            }
        }
        self.push_narrative(loose);
    }

    fn inline_content(&mut self, el: &Element, out: &mut Vec<Inline>) {
        for child in &el.children {
            match child {
                Node::Text(t) => push_text(out, t),
                Node::Element(e) => self.inline_element(e, out),
            }
        }
    }

    fn inline_element(&mut self, e: &Element, out: &mut Vec<Inline>) {
        if e.has_class("ltx_ERROR") {
            self.error_markup = true;
        }
        if is_skipped(e) || is_nested_unit(e) {
            return;
        }
        if e.tag == "math" || e.tag == "m:math" {
            if e.find(|x| x.has_class("ltx_ERROR") || x.tag == "merror").is_some() {
                self.error_markup = true;
            }
            out.push(Inline::Math(math::from_mathml(e)));
            return;
        }
        if e.tag == "cite" || e.has_class("ltx_cite") {
            out.push(Inline::Citation);
            return;
        }
        if e.has_class("ltx_ref") {
            out.push(Inline::Reference);
            return;
        }
        if matches!(e.tag.as_str(), "script" | "style" | "img" | "svg") {
            return;
        }
        let block = is_block_tag(&e.tag) || e.tag == "br";
        if block {
            push_text(out, " ");
        }
        self.inline_content(e, out);
        if block {
            push_text(out, " ");
        }
    }
}

fn is_block_tag(tag: &str) -> bool {
    matches!(
        tag,
        "p" | "div" | "ul" | "ol" | "li" | "dl" | "dt" | "dd" | "table" | "tr" | "td" | "th"
            | "blockquote" | "figure" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6"
    )
}

fn push_text(out: &mut Vec<Inline>, t: &str) {
    if let Some(Inline::Text(prev)) = out.last_mut() {
        prev.push_str(t);
    } else {
        out.push(Inline::Text(t.to_string()));
    }
}

fn collect_math(el: &Element, rows: &mut Vec<MathNode>) {
    for child in el.child_elements() {
        if child.has_class("ltx_tag") || child.has_class("ltx_eqn_eqno") {
            continue;
        }
        if child.tag == "math" || child.tag == "m:math" {
            rows.push(math::from_mathml(child));
        } else {
            collect_math(child, rows);
        }
    }
}

/// Extracts the first logical paragraph of a matched statement: the first
/// paragraph container plus any display math following it before the next
/// container. Titles and numbering are excluded.
pub fn first_logical_paragraph(m: &StatementMatch<'_>, doc_id: &str) -> Result<RawStatement> {
    let unit = m.element;
    let mut ex = Extraction {
        blocks: Vec::new(),
        error_markup: false,
    };
    let para = |e: &Element| e.has_class("ltx_para");
    let p = |e: &Element| e.has_class("ltx_p");
    if let Some((container, parent)) =
        first_container(unit, &para).or_else(|| first_container(unit, &p))
    {
        ex.container(container);
        let mut after = false;
        for sibling in parent.child_elements() {
            if std::ptr::eq(sibling, container) {
                after = true;
                continue;
            }
            if !after {
                continue;
            }
            if sibling.has_class("ltx_para") || sibling.has_class("ltx_p") || is_nested_unit(sibling) {
                break;
            }
            if is_display_math(sibling) {
                ex.display_math(sibling);
            }
        }
    } else {
        // Units such as keywords keep their text directly.
        let mut loose = Vec::new();
        for child in &unit.children {
            match child {
                Node::Text(t) => push_text(&mut loose, t),
                Node::Element(e) => ex.inline_element(e, &mut loose),
            }
        }
        ex.push_narrative(loose);
    }
    if ex.blocks.is_empty() {
        return Err(Error::EmptyStatement {
            doc: doc_id.to_string(),
        });
    }
    Ok(RawStatement {
        label: m.label.clone(),
        blocks: ex.blocks,
        source_doc: doc_id.to_string(),
        depth: m.depth,
        error_markup: ex.error_markup,
    })
}

/// Runs discovery and extraction over one document.
pub fn extract_statements(
    doc: &ScholarlyDoc,
    taxonomy: &Taxonomy,
    skips: &mut SkipStats,
) -> Vec<RawStatement> {
    find_statements(doc, taxonomy, skips)
        .iter()
        .filter_map(|m| match first_logical_paragraph(m, &doc.doc_id) {
            Ok(s) => Some(s),
            Err(_) => {
                skips.bump(SkipReason::EmptyStatement);
                None
            }
        })
        .collect()
}

/// All narrative text of the document body outside of math, used for the
/// document-level language guess.
pub fn document_text(doc: &ScholarlyDoc) -> String {
    let mut out = String::new();
    body_text(&doc.root, &mut out);
    out
}

fn body_text(el: &Element, out: &mut String) {
    for child in &el.children {
        match child {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) => {
                if e.tag == "math"
                    || matches!(e.tag.as_str(), "script" | "style" | "head")
                    || e.has_class("ltx_bibliography")
                {
                    continue;
                }
                out.push(' ');
                body_text(e, out);
                out.push(' ');
            }
        }
    }
}
