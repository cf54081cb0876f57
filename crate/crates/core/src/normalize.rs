//! Plain-text normalization of extracted statements.
//!
//! Narrative text is folded to lowercase ASCII words with punctuation
//! removed; math is replaced in place by its lexemes; citations, internal
//! references and numeric literals become placeholder words. Sentences are
//! kept as separate token lists and serialized one per line.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::ingest::{Block, Inline, RawStatement};
use crate::lang::{Detection, Language, LanguageDetector};
use crate::math::{self, Lexer, MathNode};

pub const CITATION: &str = "citationelement";
pub const REFERENCE: &str = "refelement";
pub const NUMBER: &str = "numliteral";

/// Narrative tokens longer than this many characters mark a paragraph as
/// conversion noise.
pub const MAX_WORD_CHARS: usize = 25;

const ABBREVIATIONS: &[&str] = &[
    "e", "g", "i", "eg", "ie", "cf", "viz", "vs", "al", "fig", "figs", "eq", "eqs", "ref", "refs",
    "sec", "secs", "ch", "chap", "app", "thm", "prop", "lem", "def", "cor", "no", "resp", "approx",
    "dr", "prof", "mr", "mrs", "ms", "st", "p", "pp", "vol",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Word,
    Math,
    Placeholder,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
}

impl Token {
    fn new(text: impl Into<String>, kind: TokenKind) -> Self {
        Token {
            text: text.into(),
            kind,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flags {
    pub had_math: bool,
    pub had_citation: bool,
    pub had_ref: bool,
    pub had_number: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NormalizedParagraph {
    pub sentences: Vec<Vec<Token>>,
    pub flags: Flags,
}

impl NormalizedParagraph {
    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.word_count() == 0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flatten()
    }

    pub fn narrative_words(&self) -> impl Iterator<Item = &str> {
        self.tokens()
            .filter(|t| t.kind == TokenKind::Word)
            .map(|t| t.text.as_str())
    }

    /// One sentence per line, tokens separated by single spaces.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            let line = sentence
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MathMode {
    #[default]
    Keep,
    /// Formula content is deleted outright (no placeholder).
    Omit,
}

impl MathMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MathMode::Keep => "with-math",
            MathMode::Omit => "no-math",
        }
    }
}

#[derive(Default)]
struct Builder {
    sentences: Vec<Vec<Token>>,
    current: Vec<Token>,
    /// A sentence-final mark was seen; `true` if it followed an abbreviation.
    pending: Option<bool>,
    flags: Flags,
    word: String,
    word_digits_only: bool,
    word_starts_lower: bool,
}

impl Builder {
    fn resolve_pending(&mut self, next_starts_lower: bool) {
        if let Some(abbrev) = self.pending.take() {
            if !abbrev && !next_starts_lower && !self.current.is_empty() {
                self.sentences.push(std::mem::take(&mut self.current));
            }
        }
    }

    fn push(&mut self, token: Token, starts_lower: bool) {
        self.resolve_pending(starts_lower);
        self.current.push(token);
    }

    fn flush_word(&mut self) {
        if self.word.is_empty() {
            return;
        }
        let word = std::mem::take(&mut self.word);
        if self.word_digits_only {
            self.flags.had_number = true;
            self.push(Token::new(NUMBER, TokenKind::Placeholder), false);
        } else {
            let lower = self.word_starts_lower;
            self.push(Token::new(word, TokenKind::Word), lower);
        }
    }

    fn last_word(&self) -> Option<&str> {
        self.current.last().map(|t| t.text.as_str())
    }

    fn text(&mut self, text: &str) {
        let folded: Vec<char> = text.nfkd().filter(|c| !is_combining_mark(*c)).collect();
        let mut i = 0;
        while i < folded.len() {
            let c = folded[i];
            if c.is_alphanumeric() {
                let mut piece = String::new();
                fold_char(c, &mut piece);
                if piece.is_empty() {
                    // Hard and soft signs vanish without breaking the word.
                    if !matches!(c, 'ъ' | 'ь' | 'Ъ' | 'Ь') {
                        self.flush_word();
                    }
                } else {
                    if self.word.is_empty() {
                        self.word_digits_only = true;
                        self.word_starts_lower = c.is_lowercase();
                    }
                    self.word_digits_only &= piece.bytes().all(|b| b.is_ascii_digit());
                    self.word.push_str(&piece);
                }
            } else if matches!(c, '.' | ',')
                && self.word_digits_only
                && !self.word.is_empty()
                && folded.get(i + 1).is_some_and(|n| n.is_ascii_digit())
            {
                // Decimal point or thousands separator inside a number.
            } else {
                let had_word = !self.word.is_empty();
                self.flush_word();
                if matches!(c, '.' | '!' | '?') {
                    let next = folded[i + 1..]
                        .iter()
                        .find(|n| !matches!(n, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}'));
                    if next.is_none_or(|n| n.is_whitespace()) {
                        let abbrev = c == '.'
                            && had_word
                            && self.last_word().is_some_and(|w| ABBREVIATIONS.contains(&w));
                        self.pending = Some(abbrev);
                    }
                }
            }
            i += 1;
        }
        self.flush_word();
    }

    fn math(&mut self, lexemes: Vec<String>) {
        if lexemes.is_empty() {
            return;
        }
        self.flags.had_math = true;
        for lx in lexemes {
            self.push(Token::new(lx, TokenKind::Math), false);
        }
    }

    fn placeholder(&mut self, text: &'static str) {
        self.push(Token::new(text, TokenKind::Placeholder), false);
    }

    fn finish(mut self) -> NormalizedParagraph {
        self.flush_word();
        self.pending = None;
        if !self.current.is_empty() {
            self.sentences.push(self.current);
        }
        NormalizedParagraph {
            sentences: self.sentences,
            flags: self.flags,
        }
    }
}

fn fold_char(c: char, out: &mut String) {
    for lc in c.to_lowercase() {
        if lc.is_ascii_alphanumeric() {
            out.push(lc);
            continue;
        }
        let mapped = match lc {
            'ß' => "ss",
            'æ' => "ae",
            'œ' => "oe",
            'ø' => "o",
            'ł' => "l",
            'đ' | 'ð' => "d",
            'þ' => "th",
            'ı' => "i",
            'ŋ' => "ng",
            'а' => "a",
            'б' => "b",
            'в' => "v",
            'г' | 'ґ' => "g",
            'д' => "d",
            'е' | 'э' => "e",
            'є' => "ye",
            'ж' => "zh",
            'з' => "z",
            'и' | 'і' | 'ї' | 'й' => "i",
            'к' => "k",
            'л' => "l",
            'м' => "m",
            'н' => "n",
            'о' => "o",
            'п' => "p",
            'р' => "r",
            'с' => "s",
            'т' => "t",
            'у' => "u",
            'ф' => "f",
            'х' => "kh",
            'ц' => "ts",
            'ч' => "ch",
            'ш' => "sh",
            'щ' => "shch",
            'ъ' | 'ь' => "",
            'ы' => "y",
            'ю' => "yu",
            'я' => "ya",
            _ => {
                let name = math::glyph_name(&lc.to_string());
                let escaped = name.len() == 5 && name.starts_with('u') && name[1..].bytes().all(|b| b.is_ascii_hexdigit());
                if !name.is_empty() && !escaped {
                    out.push_str(&name.to_lowercase());
                }
                continue;
            }
        };
        out.push_str(mapped);
    }
}

/// Normalizes an extracted statement.
pub fn normalize(stmt: &RawStatement, mode: MathMode) -> NormalizedParagraph {
    normalize_with(stmt, mode, &Lexer::new())
}

/// As [`normalize`], reporting lexer warnings through `lexer`.
pub fn normalize_with(stmt: &RawStatement, mode: MathMode, lexer: &Lexer) -> NormalizedParagraph {
    let mut b = Builder::default();
    let math = |b: &mut Builder, node: &MathNode| {
        if mode == MathMode::Keep {
            b.math(lexer.lexemize(node));
        }
    };
    for block in &stmt.blocks {
        match block {
            Block::Narrative(inlines) => {
                for inline in inlines {
                    match inline {
                        Inline::Text(t) => b.text(t),
                        Inline::Math(node) => {
                            b.flush_word();
                            math(&mut b, node);
                        }
                        Inline::Citation => {
                            b.flush_word();
                            b.flags.had_citation = true;
                            b.placeholder(CITATION);
                        }
                        Inline::Reference => {
                            b.flush_word();
                            b.flags.had_ref = true;
                            b.placeholder(REFERENCE);
                        }
                    }
                }
                b.flush_word();
            }
            Block::Math(node) => math(&mut b, node),
        }
    }
    b.finish()
}

/// Normalizes free text with no formula markup (the demo path).
pub fn normalize_text(text: &str) -> NormalizedParagraph {
    let mut b = Builder::default();
    b.text(text);
    b.finish()
}

fn is_placeholder(t: &str) -> bool {
    matches!(t, CITATION | REFERENCE | NUMBER)
}

/// Re-reads a serialized paragraph. Tokens already in normalized form pass
/// through unchanged, so `renormalize(p.serialize()).serialize()` equals
/// `p.serialize()`.
pub fn renormalize(serialized: &str) -> NormalizedParagraph {
    let mut out = NormalizedParagraph::default();
    for line in serialized.lines() {
        let mut sentence = Vec::new();
        for raw in line.split_whitespace() {
            if is_placeholder(raw) {
                match raw {
                    CITATION => out.flags.had_citation = true,
                    REFERENCE => out.flags.had_ref = true,
                    _ => out.flags.had_number = true,
                }
                sentence.push(Token::new(raw, TokenKind::Placeholder));
            } else if math::is_lexeme_shaped(raw)
                || (raw.starts_with(|c: char| c.is_ascii_digit())
                    && raw.bytes().all(|b| b.is_ascii_digit() || b == b'_'))
            {
                out.flags.had_math = true;
                sentence.push(Token::new(raw, TokenKind::Math));
            } else if raw
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
            {
                sentence.push(Token::new(raw, TokenKind::Word));
            } else {
                let mut b = Builder::default();
                b.text(raw);
                let p = b.finish();
                out.flags.had_number |= p.flags.had_number;
                sentence.extend(p.sentences.into_iter().flatten());
            }
        }
        if !sentence.is_empty() {
            out.sentences.push(sentence);
        }
    }
    out
}

/// Why a paragraph was dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    ErrorMarkup,
    LongWord,
    NonEnglish,
    Empty,
}

/// Document-level facts the filter needs beyond the paragraph itself.
#[derive(Clone, Copy, Debug)]
pub struct DocContext {
    pub error_markup: bool,
    pub doc_language: Detection,
}

/// Applies the quality filters; `Ok(())` keeps the paragraph.
pub fn quality_filter(
    para: &NormalizedParagraph,
    ctx: &DocContext,
    detector: &LanguageDetector,
) -> Result<(), DropReason> {
    if ctx.error_markup {
        return Err(DropReason::ErrorMarkup);
    }
    if para.is_empty() {
        return Err(DropReason::Empty);
    }
    if para
        .narrative_words()
        .any(|w| w.chars().count() > MAX_WORD_CHARS)
    {
        return Err(DropReason::LongWord);
    }
    let english = |d: Detection| d.language() == Some(Language::English);
    match detector.detect(para) {
        Detection::Undetermined if english(ctx.doc_language) => Ok(()),
        d if english(d) => Ok(()),
        _ => Err(DropReason::NonEnglish),
    }
}
