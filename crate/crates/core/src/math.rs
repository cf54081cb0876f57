//! Font-aware lexeme serialization of presentation math.
//!
//! Leaves become `<font>_<glyph>` tokens (`italic_N`, `blackboard_N`),
//! script structure is bracketed by `NAME_start` / `NAME_end` markers, and
//! operators are spelled out so that every lexeme stays within
//! `[A-Za-z0-9_]+`. Case is preserved throughout.

use std::cell::Cell;

use crate::html::{self, Element};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Style {
    #[default]
    Normal,
    Italic,
    Caligraphic,
    Blackboard,
    Fraktur,
    SansSerif,
    Typewriter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Weight {
    #[default]
    Normal,
    Bold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Font {
    pub style: Style,
    pub weight: Weight,
}

impl Font {
    pub const NORMAL: Font = Font {
        style: Style::Normal,
        weight: Weight::Normal,
    };
    pub const ITALIC: Font = Font {
        style: Style::Italic,
        weight: Weight::Normal,
    };

    pub fn new(style: Style, weight: Weight) -> Self {
        Font { style, weight }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Kind {
    Symbol,
    Operator,
    Number,
    /// `mtext` content inside a formula.
    Text,
    Row,
    Subscript,
    Superscript,
    SubSuperscript,
    Fraction,
    Sqrt,
    Root,
    Under,
    Over,
    UnderOver,
    /// Any structure without a dedicated serialization (tables, enclosures, ...).
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MathNode {
    pub kind: Kind,
    pub glyph: String,
    pub font: Font,
    pub children: Vec<MathNode>,
}

impl MathNode {
    pub fn leaf(kind: Kind, glyph: impl Into<String>, font: Font) -> Self {
        MathNode {
            kind,
            glyph: glyph.into(),
            font,
            children: Vec::new(),
        }
    }

    pub fn symbol(glyph: impl Into<String>, font: Font) -> Self {
        Self::leaf(Kind::Symbol, glyph, font)
    }

    pub fn operator(glyph: impl Into<String>) -> Self {
        Self::leaf(Kind::Operator, glyph, Font::NORMAL)
    }

    pub fn number(glyph: impl Into<String>) -> Self {
        Self::leaf(Kind::Number, glyph, Font::NORMAL)
    }

    pub fn node(kind: Kind, children: Vec<MathNode>) -> Self {
        MathNode {
            kind,
            glyph: String::new(),
            font: Font::NORMAL,
            children,
        }
    }

    pub fn row(children: Vec<MathNode>) -> Self {
        Self::node(Kind::Row, children)
    }

    fn arity(&self) -> Option<usize> {
        match self.kind {
            Kind::Subscript | Kind::Superscript | Kind::Fraction | Kind::Root => Some(2),
            Kind::Under | Kind::Over => Some(2),
            Kind::SubSuperscript | Kind::UnderOver => Some(3),
            Kind::Sqrt => Some(1),
            _ => None,
        }
    }
}

/// Serializer with a counter of structures emitted without a wrapper.
#[derive(Debug, Default)]
pub struct Lexer {
    warnings: Cell<usize>,
}

impl Lexer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warnings(&self) -> usize {
        self.warnings.get()
    }

    pub fn lexemize(&self, root: &MathNode) -> Vec<String> {
        let mut out = Vec::new();
        self.emit(root, &mut out);
        out
    }

    fn wrapped(&self, name: &str, node: &MathNode, out: &mut Vec<String>) {
        out.push(format!("{name}_start"));
        self.emit(node, out);
        out.push(format!("{name}_end"));
    }

    fn emit(&self, node: &MathNode, out: &mut Vec<String>) {
        if let Some(n) = node.arity() {
            if node.children.len() != n {
                self.warnings.set(self.warnings.get() + 1);
                for c in &node.children {
                    self.emit(c, out);
                }
                return;
            }
        }
        let c = &node.children;
        match &node.kind {
            Kind::Symbol => out.extend(symbol_lexeme(node.font, &node.glyph)),
            Kind::Operator => out.extend(operator_lexemes(&node.glyph)),
            Kind::Number => out.extend(number_lexeme(&node.glyph)),
            Kind::Text => {
                for word in node.glyph.split(|ch: char| !ch.is_alphanumeric()) {
                    out.extend(symbol_lexeme(node.font, word));
                }
            }
            Kind::Row => {
                for child in c {
                    self.emit(child, out);
                }
            }
            Kind::Subscript => {
                self.emit(&c[0], out);
                self.wrapped("POSTSUBSCRIPT", &c[1], out);
            }
            Kind::Superscript => {
                self.emit(&c[0], out);
                self.wrapped("POSTSUPERSCRIPT", &c[1], out);
            }
            Kind::SubSuperscript => {
                self.emit(&c[0], out);
                self.wrapped("POSTSUBSCRIPT", &c[1], out);
                self.wrapped("POSTSUPERSCRIPT", &c[2], out);
            }
            Kind::Fraction => {
                out.push("FRACTION_start".into());
                self.emit(&c[0], out);
                out.push("FRACTION_over".into());
                self.emit(&c[1], out);
                out.push("FRACTION_end".into());
            }
            Kind::Sqrt => self.wrapped("SQRT", &c[0], out),
            Kind::Root => {
                out.push("ROOT_start".into());
                self.emit(&c[0], out);
                out.push("ROOT_index".into());
                self.emit(&c[1], out);
                out.push("ROOT_end".into());
            }
            Kind::Under => {
                self.emit(&c[0], out);
                self.wrapped("UNDERSCRIPT", &c[1], out);
            }
            Kind::Over => {
                self.emit(&c[0], out);
                self.wrapped("OVERSCRIPT", &c[1], out);
            }
            Kind::UnderOver => {
                self.emit(&c[0], out);
                self.wrapped("UNDERSCRIPT", &c[1], out);
                self.wrapped("OVERSCRIPT", &c[2], out);
            }
            Kind::Other(_) => {
                self.warnings.set(self.warnings.get() + 1);
                for child in c {
                    self.emit(child, out);
                }
            }
        }
    }
}

/// Serializes a formula tree into lexemes.
pub fn lexemize(root: &MathNode) -> Vec<String> {
    Lexer::new().lexemize(root)
}

/// The font component of a symbol lexeme.
pub fn font_prefix(font: Font) -> &'static str {
    match (font.weight, font.style) {
        (Weight::Normal, Style::Normal) => "normal",
        (Weight::Normal, Style::Italic) => "italic",
        (Weight::Normal, Style::Caligraphic) => "caligraphic",
        (Weight::Normal, Style::Blackboard) => "blackboard",
        (Weight::Normal, Style::Fraktur) => "fraktur",
        (Weight::Normal, Style::SansSerif) => "sansserif",
        (Weight::Normal, Style::Typewriter) => "typewriter",
        (Weight::Bold, Style::Normal) => "bold",
        (Weight::Bold, Style::Italic) => "bold_italic",
        (Weight::Bold, Style::Caligraphic) => "bold_caligraphic",
        (Weight::Bold, Style::Blackboard) => "bold_blackboard",
        (Weight::Bold, Style::Fraktur) => "bold_fraktur",
        (Weight::Bold, Style::SansSerif) => "bold_sansserif",
        (Weight::Bold, Style::Typewriter) => "bold_typewriter",
    }
}

/// Lexeme for an identifier leaf: `<font>_<name>`. Digits carry no prefix.
/// Returns `None` when nothing nameable remains (e.g. a lone prime).
pub fn symbol_lexeme(font: Font, glyph: &str) -> Option<String> {
    let name = glyph_name(glyph);
    if name.is_empty() {
        return None;
    }
    if name.bytes().all(|b| b.is_ascii_digit()) {
        return Some(name);
    }
    Some(format!("{}_{}", font_prefix(font), name))
}

fn number_lexeme(glyph: &str) -> Option<String> {
    let mut out = String::new();
    for ch in glyph.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch);
        } else if let Some((_, base)) = math_alphanumeric(ch) {
            out.push(base);
        } else if !out.is_empty() && !out.ends_with('_') && !ch.is_whitespace() {
            out.push('_');
        }
    }
    let out = out.trim_end_matches('_').to_string();
    (!out.is_empty()).then_some(out)
}

fn operator_lexemes(glyph: &str) -> Vec<String> {
    let trimmed = glyph.trim();
    if trimmed.chars().count() > 1 && trimmed.chars().all(|c| c.is_ascii_alphabetic()) {
        // Named operators such as `sin`, `lim`, `max`.
        return vec![trimmed.to_string()];
    }
    trimmed
        .chars()
        .filter_map(|c| {
            if let Some(name) = operator_name(c) {
                return (!name.is_empty()).then(|| name.to_string());
            }
            if c.is_whitespace() {
                return None;
            }
            if c.is_ascii_alphanumeric() {
                return Some(c.to_string());
            }
            let name = glyph_name(&c.to_string());
            if name.is_empty() {
                Some(format!("u{:04x}", c as u32))
            } else {
                Some(name)
            }
        })
        .collect()
}

fn operator_name(c: char) -> Option<&'static str> {
    Some(match c {
        // Invisible operators inserted by converters carry no lexeme.
        '\u{2061}' | '\u{2062}' | '\u{2063}' | '\u{2064}' => "",
        '+' => "plus",
        '-' | '\u{2212}' => "minus",
        '=' => "equals",
        '<' => "less",
        '>' => "greater",
        '\u{2264}' | '\u{2266}' | '\u{2a7d}' => "leq",
        '\u{2265}' | '\u{2267}' | '\u{2a7e}' => "geq",
        '\u{2260}' => "neq",
        '\u{2208}' => "element_of",
        '\u{2209}' => "not_element_of",
        '\u{220b}' => "contains",
        '\u{2282}' => "subset",
        '\u{2283}' => "supset",
        '\u{2286}' => "subseteq",
        '\u{2287}' => "supseteq",
        '\u{222a}' => "union",
        '\u{2229}' => "intersection",
        '\u{2216}' => "setminus",
        '\u{d7}' => "times",
        '\u{b7}' | '\u{22c5}' => "cdot",
        '*' | '\u{2217}' => "ast",
        '/' | '\u{2215}' => "slash",
        '\\' => "backslash",
        '(' => "lparen",
        ')' => "rparen",
        '[' => "lbracket",
        ']' => "rbracket",
        '{' => "lbrace",
        '}' => "rbrace",
        '\u{27e8}' | '\u{2329}' => "langle",
        '\u{27e9}' | '\u{232a}' => "rangle",
        '|' | '\u{2223}' => "vert",
        '\u{2016}' | '\u{2225}' => "double_vert",
        ',' => "comma",
        '.' => "period",
        ';' => "semicolon",
        ':' | '\u{2236}' => "colon",
        '!' => "factorial",
        '\'' | '\u{2032}' => "prime",
        '\u{2033}' => "double_prime",
        '\u{2192}' => "rightarrow",
        '\u{2190}' => "leftarrow",
        '\u{2194}' => "leftrightarrow",
        '\u{21a6}' => "mapsto",
        '\u{21d2}' => "implies",
        '\u{21d0}' => "impliedby",
        '\u{21d4}' => "iff",
        '\u{2200}' => "forall",
        '\u{2203}' => "exists",
        '\u{00ac}' => "neg",
        '\u{2227}' => "wedge",
        '\u{2228}' => "vee",
        '\u{2211}' => "sum",
        '\u{220f}' => "prod",
        '\u{2210}' => "coprod",
        '\u{222b}' => "int",
        '\u{222c}' => "iint",
        '\u{222e}' => "oint",
        '\u{221a}' => "sqrt",
        '\u{b1}' => "pm",
        '\u{2213}' => "mp",
        '\u{2218}' => "circ",
        '\u{2297}' => "otimes",
        '\u{2295}' => "oplus",
        '\u{2299}' => "odot",
        '\u{223c}' | '~' => "sim",
        '\u{2248}' => "approx",
        '\u{2243}' => "simeq",
        '\u{2261}' => "equiv",
        '\u{2245}' => "cong",
        '\u{221d}' => "propto",
        '\u{226a}' => "ll",
        '\u{226b}' => "gg",
        '\u{2026}' => "ldots",
        '\u{22ef}' => "cdots",
        '\u{22ee}' => "vdots",
        '\u{22f1}' => "ddots",
        '\u{22a5}' => "perp",
        '\u{2020}' => "dagger",
        '\u{22a2}' => "vdash",
        '\u{22a8}' => "models",
        '^' => "hat",
        '_' => "underscore",
        '&' => "ampersand",
        '%' => "percent",
        '#' => "hash",
        '@' => "at",
        '$' => "dollar",
        '"' => "quote",
        '?' => "question",
        _ => return None,
    })
}

fn greek_name(c: char) -> Option<&'static str> {
    Some(match c {
        'α' => "alpha",
        'β' => "beta",
        'γ' => "gamma",
        'δ' => "delta",
        'ε' | 'ϵ' => "epsilon",
        'ζ' => "zeta",
        'η' => "eta",
        'θ' | 'ϑ' => "theta",
        'ι' => "iota",
        'κ' | 'ϰ' => "kappa",
        'λ' => "lambda",
        'μ' | 'µ' => "mu",
        'ν' => "nu",
        'ξ' => "xi",
        'ο' => "omicron",
        'π' | 'ϖ' => "pi",
        'ρ' | 'ϱ' => "rho",
        'σ' | 'ς' => "sigma",
        'τ' => "tau",
        'υ' => "upsilon",
        'φ' | 'ϕ' => "phi",
        'χ' => "chi",
        'ψ' => "psi",
        'ω' => "omega",
        'Α' => "Alpha",
        'Β' => "Beta",
        'Γ' => "Gamma",
        'Δ' => "Delta",
        'Ε' => "Epsilon",
        'Ζ' => "Zeta",
        'Η' => "Eta",
        'Θ' | 'ϴ' => "Theta",
        'Ι' => "Iota",
        'Κ' => "Kappa",
        'Λ' => "Lambda",
        'Μ' => "Mu",
        'Ν' => "Nu",
        'Ξ' => "Xi",
        'Ο' => "Omicron",
        'Π' => "Pi",
        'Ρ' => "Rho",
        'Σ' => "Sigma",
        'Τ' => "Tau",
        'Υ' | 'ϒ' => "Upsilon",
        'Φ' => "Phi",
        'Χ' => "Chi",
        'Ψ' => "Psi",
        'Ω' => "Omega",
        _ => return None,
    })
}

fn special_name(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{221e}' => "infty",
        '\u{2202}' => "partial",
        '\u{2207}' => "nabla",
        '\u{2113}' => "ell",
        '\u{2205}' | '\u{2300}' => "emptyset",
        '\u{210f}' => "hbar",
        '\u{2118}' => "wp",
        '\u{2135}' => "aleph",
        '\u{0131}' => "imath",
        '\u{0237}' => "jmath",
        '\u{2111}' => "Im",
        '\u{211c}' => "Re",
        '\u{2032}' | '\'' => "",
        _ => return None,
    })
}

/// Transliterates a glyph into identifier characters, preserving case.
pub fn glyph_name(glyph: &str) -> String {
    let mut out = String::new();
    for ch in glyph.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch);
        } else if let Some(name) = greek_name(ch).or_else(|| special_name(ch)) {
            out.push_str(name);
        } else if let Some((_, base)) = math_alphanumeric(ch) {
            out.push(base);
        } else if ch.is_alphanumeric() {
            out.push_str(&format!("u{:04x}", ch as u32));
        }
    }
    out
}

// Offsets of the 52-letter runs in the Mathematical Alphanumeric Symbols block.
const LETTER_RUNS: &[(u32, Style, Weight)] = &[
    (0x1D400, Style::Normal, Weight::Bold),
    (0x1D434, Style::Italic, Weight::Normal),
    (0x1D468, Style::Italic, Weight::Bold),
    (0x1D49C, Style::Caligraphic, Weight::Normal),
    (0x1D4D0, Style::Caligraphic, Weight::Bold),
    (0x1D504, Style::Fraktur, Weight::Normal),
    (0x1D538, Style::Blackboard, Weight::Normal),
    (0x1D56C, Style::Fraktur, Weight::Bold),
    (0x1D5A0, Style::SansSerif, Weight::Normal),
    (0x1D5D4, Style::SansSerif, Weight::Bold),
    (0x1D608, Style::SansSerif, Weight::Normal),
    (0x1D63C, Style::SansSerif, Weight::Bold),
    (0x1D670, Style::Typewriter, Weight::Normal),
];

const DIGIT_RUNS: &[(u32, Style, Weight)] = &[
    (0x1D7CE, Style::Normal, Weight::Bold),
    (0x1D7D8, Style::Blackboard, Weight::Normal),
    (0x1D7E2, Style::SansSerif, Weight::Normal),
    (0x1D7EC, Style::SansSerif, Weight::Bold),
    (0x1D7F6, Style::Typewriter, Weight::Normal),
];

/// Decodes a styled mathematical letter or digit into its font and base
/// character, including the Letterlike Symbols that fill holes in the
/// alphanumeric block (ℕ, ℛ, ℌ, ...).
pub fn math_alphanumeric(ch: char) -> Option<(Font, char)> {
    let letterlike = match ch {
        'ℂ' => Some((Style::Blackboard, 'C')),
        'ℍ' => Some((Style::Blackboard, 'H')),
        'ℕ' => Some((Style::Blackboard, 'N')),
        'ℙ' => Some((Style::Blackboard, 'P')),
        'ℚ' => Some((Style::Blackboard, 'Q')),
        'ℝ' => Some((Style::Blackboard, 'R')),
        'ℤ' => Some((Style::Blackboard, 'Z')),
        'ℬ' => Some((Style::Caligraphic, 'B')),
        'ℰ' => Some((Style::Caligraphic, 'E')),
        'ℱ' => Some((Style::Caligraphic, 'F')),
        'ℋ' => Some((Style::Caligraphic, 'H')),
        'ℐ' => Some((Style::Caligraphic, 'I')),
        'ℒ' => Some((Style::Caligraphic, 'L')),
        'ℳ' => Some((Style::Caligraphic, 'M')),
        'ℛ' => Some((Style::Caligraphic, 'R')),
        'ℯ' => Some((Style::Caligraphic, 'e')),
        'ℊ' => Some((Style::Caligraphic, 'g')),
        'ℴ' => Some((Style::Caligraphic, 'o')),
        'ℭ' => Some((Style::Fraktur, 'C')),
        'ℌ' => Some((Style::Fraktur, 'H')),
        'ℑ' => Some((Style::Fraktur, 'I')),
        'ℜ' => Some((Style::Fraktur, 'R')),
        'ℨ' => Some((Style::Fraktur, 'Z')),
        'ℎ' => Some((Style::Italic, 'h')),
        _ => None,
    };
    if let Some((style, base)) = letterlike {
        return Some((Font::new(style, Weight::Normal), base));
    }
    let cp = ch as u32;
    for &(start, style, weight) in LETTER_RUNS {
        if (start..start + 52).contains(&cp) {
            let off = (cp - start) as u8;
            let base = if off < 26 { b'A' + off } else { b'a' + off - 26 };
            return Some((Font::new(style, weight), base as char));
        }
    }
    for &(start, style, weight) in DIGIT_RUNS {
        if (start..start + 10).contains(&cp) {
            return Some((Font::new(style, weight), (b'0' + (cp - start) as u8) as char));
        }
    }
    None
}

fn variant_font(variant: &str) -> Option<Font> {
    let (style, weight) = match variant {
        "normal" => (Style::Normal, Weight::Normal),
        "bold" => (Style::Normal, Weight::Bold),
        "italic" => (Style::Italic, Weight::Normal),
        "bold-italic" => (Style::Italic, Weight::Bold),
        "double-struck" => (Style::Blackboard, Weight::Normal),
        "script" => (Style::Caligraphic, Weight::Normal),
        "bold-script" => (Style::Caligraphic, Weight::Bold),
        "fraktur" => (Style::Fraktur, Weight::Normal),
        "bold-fraktur" => (Style::Fraktur, Weight::Bold),
        "sans-serif" | "sans-serif-italic" => (Style::SansSerif, Weight::Normal),
        "bold-sans-serif" | "sans-serif-bold-italic" => (Style::SansSerif, Weight::Bold),
        "monospace" => (Style::Typewriter, Weight::Normal),
        _ => return None,
    };
    Some(Font::new(style, weight))
}

fn class_font(el: &Element, base: Option<Font>) -> Option<Font> {
    let mut font = base;
    for class in &el.classes {
        let style = match class.as_str() {
            "ltx_font_mathcaligraphic" | "ltx_font_mathscript" => Some(Style::Caligraphic),
            "ltx_font_typewriter" => Some(Style::Typewriter),
            "ltx_font_sansserif" => Some(Style::SansSerif),
            "ltx_font_italic" => Some(Style::Italic),
            "ltx_font_upright" => Some(Style::Normal),
            "ltx_font_bold" => {
                let f = font.get_or_insert(Font::NORMAL);
                f.weight = Weight::Bold;
                None
            }
            _ => None,
        };
        if let Some(style) = style {
            font.get_or_insert(Font::NORMAL).style = style;
        }
    }
    font
}

/// Converts a MathML element (usually `<math>`) into a [`MathNode`] tree.
/// Content-markup annotations are ignored.
pub fn from_mathml(el: &Element) -> MathNode {
    convert(el, None)
}

fn element_children(el: &Element, inherited: Option<Font>) -> Vec<MathNode> {
    el.child_elements()
        .filter(|c| !matches!(c.tag.as_str(), "annotation" | "annotation-xml" | "mspace" | "mglyph" | "none" | "mprescripts"))
        .map(|c| convert(c, inherited))
        .collect()
}

fn leaf_text(el: &Element) -> String {
    el.text_content().trim().to_string()
}

fn convert(el: &Element, inherited: Option<Font>) -> MathNode {
    let own = el.attr("mathvariant").and_then(variant_font);
    let explicit = class_font(el, own.or(inherited));
    let tag = el.tag.strip_prefix("m:").unwrap_or(&el.tag);
    match tag {
        "math" | "mrow" | "mstyle" | "mpadded" => {
            MathNode::row(element_children(el, explicit))
        }
        "semantics" => {
            let first = el
                .child_elements()
                .find(|c| !matches!(c.tag.as_str(), "annotation" | "annotation-xml"));
            match first {
                Some(c) => convert(c, explicit),
                None => MathNode::row(Vec::new()),
            }
        }
        "mfenced" => {
            let open = el.attr("open").unwrap_or("(");
            let close = el.attr("close").unwrap_or(")");
            let mut kids = vec![MathNode::operator(open)];
            kids.extend(element_children(el, explicit));
            kids.push(MathNode::operator(close));
            MathNode::row(kids)
        }
        "mphantom" => MathNode::row(Vec::new()),
        "mi" | "mn" | "mo" | "mtext" | "ms" => {
            let text = leaf_text(el);
            let mut chars = text.chars();
            let single = match (chars.next(), chars.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            };
            if let Some((font, base)) = single.and_then(math_alphanumeric) {
                let kind = if base.is_ascii_digit() {
                    Kind::Number
                } else {
                    Kind::Symbol
                };
                return MathNode::leaf(kind, base.to_string(), font);
            }
            match tag {
                "mi" => {
                    let default = if single.is_some() {
                        Font::ITALIC
                    } else {
                        Font::NORMAL
                    };
                    MathNode::symbol(text, explicit.unwrap_or(default))
                }
                "mn" => MathNode::number(text),
                "mo" => MathNode::operator(text),
                _ => MathNode::leaf(Kind::Text, text, explicit.unwrap_or(Font::NORMAL)),
            }
        }
        _ => {
            let kids = element_children(el, explicit);
            let kind = match tag {
                "msub" => Kind::Subscript,
                "msup" => Kind::Superscript,
                "msubsup" => Kind::SubSuperscript,
                "mfrac" => Kind::Fraction,
                "msqrt" => {
                    return MathNode::node(Kind::Sqrt, vec![MathNode::row(kids)]);
                }
                "mroot" => Kind::Root,
                "munder" => Kind::Under,
                "mover" => Kind::Over,
                "munderover" => Kind::UnderOver,
                other => Kind::Other(other.to_string()),
            };
            MathNode::node(kind, kids)
        }
    }
}

/// Parses one formula in the document's math markup (a `<math>` fragment)
/// and serializes it. Used by the line-oriented filter mode.
pub fn lexemize_markup(markup: &str) -> crate::Result<Vec<String>> {
    let root = html::parse(markup)?;
    let math = root
        .find(|e| e.tag == "math" || e.tag == "m:math")
        .cloned()
        .unwrap_or_else(|| {
            let mut row = Element::new("mrow");
            row.children = root.children.clone();
            row
        });
    Ok(lexemize(&from_mathml(&math)))
}

/// True if `token` has the shape of a math lexeme: a font-prefixed symbol,
/// or a structural marker.
pub fn is_lexeme_shaped(token: &str) -> bool {
    const PREFIXES: &[&str] = &[
        "normal_",
        "italic_",
        "caligraphic_",
        "blackboard_",
        "fraktur_",
        "sansserif_",
        "typewriter_",
        "bold_",
    ];
    if PREFIXES.iter().any(|p| token.len() > p.len() && token.starts_with(p)) {
        return true;
    }
    is_marker(token)
}

/// `NAME_start`, `NAME_end` and middle markers such as `FRACTION_over`.
pub fn is_marker(token: &str) -> bool {
    match token.split_once('_') {
        Some((name, part)) => {
            !name.is_empty()
                && name.bytes().all(|b| b.is_ascii_uppercase())
                && matches!(part, "start" | "end" | "over" | "index")
        }
        None => false,
    }
}

/// Checks that every `*_start` has a properly nested matching `*_end`.
pub fn markers_balanced(tokens: &[String]) -> bool {
    let mut stack: Vec<&str> = Vec::new();
    for t in tokens {
        if let Some(name) = t.strip_suffix("_start").filter(|_| is_marker(t)) {
            stack.push(name);
        } else if let Some(name) = t.strip_suffix("_end").filter(|_| is_marker(t)) {
            if stack.pop() != Some(name) {
                return false;
            }
        }
    }
    stack.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(base: MathNode, script: MathNode) -> MathNode {
        MathNode::node(Kind::Subscript, vec![base, script])
    }

    #[test]
    fn remark_subscript() {
        let tree = sub(
            MathNode::symbol("ε", Font::ITALIC),
            MathNode::symbol("j", Font::ITALIC),
        );
        assert_eq!(
            lexemize(&tree),
            ["italic_epsilon", "POSTSUBSCRIPT_start", "italic_j", "POSTSUBSCRIPT_end"]
        );
    }

    #[test]
    fn font_distinctions() {
        let n = |style| symbol_lexeme(Font::new(style, Weight::Normal), "N").unwrap();
        assert_eq!(n(Style::Italic), "italic_N");
        assert_eq!(n(Style::Caligraphic), "caligraphic_N");
        assert_eq!(n(Style::Blackboard), "blackboard_N");
        assert_eq!(
            symbol_lexeme(Font::new(Style::Italic, Weight::Bold), "x").unwrap(),
            "bold_italic_x"
        );
        assert_eq!(symbol_lexeme(Font::new(Style::Normal, Weight::Bold), "x").unwrap(), "bold_x");
        assert_eq!(symbol_lexeme(Font::NORMAL, "2").unwrap(), "2");
        assert_eq!(symbol_lexeme(Font::NORMAL, "Γ").unwrap(), "normal_Gamma");
    }

    #[test]
    fn empty_row() {
        assert!(lexemize(&MathNode::row(vec![])).is_empty());
    }

    #[test]
    fn unknown_structure_warns() {
        let lexer = Lexer::new();
        let tree = MathNode::node(
            Kind::Other("mtable".into()),
            vec![MathNode::symbol("x", Font::ITALIC)],
        );
        assert_eq!(lexer.lexemize(&tree), ["italic_x"]);
        assert_eq!(lexer.warnings(), 1);
        let bad_arity = MathNode::node(Kind::Subscript, vec![MathNode::symbol("x", Font::ITALIC)]);
        assert_eq!(lexer.lexemize(&bad_arity), ["italic_x"]);
        assert_eq!(lexer.warnings(), 2);
    }

    #[test]
    fn operators_are_spelled() {
        let row = MathNode::row(vec![
            MathNode::symbol("x", Font::ITALIC),
            MathNode::operator("∈"),
            MathNode::symbol("ℕ", Font::NORMAL),
            MathNode::operator("\u{2062}"),
            MathNode::operator("+"),
            MathNode::number("3.14"),
            MathNode::operator("sin"),
        ]);
        // The blackboard glyph given as a plain symbol keeps its declared font.
        assert_eq!(
            lexemize(&row),
            ["italic_x", "element_of", "normal_N", "plus", "3_14", "sin"]
        );
    }

    #[test]
    fn mathml_conversion() {
        let markup = r#"<math alttext="\epsilon_j" display="inline"><semantics><msub><mi>ϵ</mi><mi>j</mi></msub><annotation encoding="application/x-tex">\epsilon_{j}</annotation></semantics></math>"#;
        assert_eq!(
            lexemize_markup(markup).unwrap(),
            ["italic_epsilon", "POSTSUBSCRIPT_start", "italic_j", "POSTSUBSCRIPT_end"]
        );
        let markup = r#"<math><mrow><mi>ℕ</mi><mo>⊂</mo><mi class="ltx_font_mathcaligraphic">N</mi><mo>,</mo><mi mathvariant="normal">N</mi><mo>,</mo><mi>N</mi><mo>,</mo><mn>2</mn><mo>,</mo><mi>𝒩</mi></mrow></math>"#;
        assert_eq!(
            lexemize_markup(markup).unwrap(),
            [
                "blackboard_N",
                "subset",
                "caligraphic_N",
                "comma",
                "normal_N",
                "comma",
                "italic_N",
                "comma",
                "2",
                "comma",
                "caligraphic_N"
            ]
        );
    }

    #[test]
    fn structure_markers() {
        let markup = "<math><mfrac><mn>1</mn><msqrt><mi>x</mi></msqrt></mfrac><msubsup><mo>∑</mo><mi>i</mi><mi>n</mi></msubsup></math>";
        let lex = lexemize_markup(markup).unwrap();
        assert_eq!(
            lex,
            [
                "FRACTION_start",
                "1",
                "FRACTION_over",
                "SQRT_start",
                "italic_x",
                "SQRT_end",
                "FRACTION_end",
                "sum",
                "POSTSUBSCRIPT_start",
                "italic_i",
                "POSTSUBSCRIPT_end",
                "POSTSUPERSCRIPT_start",
                "italic_n",
                "POSTSUPERSCRIPT_end"
            ]
        );
        assert!(markers_balanced(&lex));
    }

    #[test]
    fn mstyle_variant_is_inherited() {
        let markup = r#"<math><mstyle mathvariant="bold"><mi>v</mi></mstyle></math>"#;
        assert_eq!(lexemize_markup(markup).unwrap(), ["bold_v"]);
    }

    #[test]
    fn math_alphanumeric_blocks() {
        assert_eq!(math_alphanumeric('𝐀'), Some((Font::new(Style::Normal, Weight::Bold), 'A')));
        assert_eq!(math_alphanumeric('𝔤'), Some((Font::new(Style::Fraktur, Weight::Normal), 'g')));
        assert_eq!(math_alphanumeric('𝟙'), Some((Font::new(Style::Blackboard, Weight::Normal), '1')));
        assert_eq!(math_alphanumeric('x'), None);
    }

    #[test]
    fn marker_balance_detects_errors() {
        let t = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(markers_balanced(&t(&["A_start", "B_start", "B_end", "A_end"])));
        assert!(!markers_balanced(&t(&["A_start", "B_start", "A_end", "B_end"])));
        assert!(!markers_balanced(&t(&["A_start"])));
        assert!(!markers_balanced(&t(&["A_end"])));
    }
}
