//! Word vectors and the fixed-window paragraph encoding.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalize::NormalizedParagraph;

/// Default paragraph window in tokens.
pub const DEFAULT_WINDOW: usize = 480;

/// Token vectors with dense indices from 1; index 0 is padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    // (tokens.len() + 1) * dim values, row 0 all zero
    matrix: Vec<f32>,
    duplicates: usize,
}

impl Vocabulary {
    pub fn empty(dim: usize) -> Self {
        Vocabulary {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            matrix: vec![0.0; dim],
            duplicates: 0,
        }
    }

    /// Builds a vocabulary from (token, vector) pairs; later duplicates are
    /// ignored.
    pub fn from_pairs<'a, I, V>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, V)>,
        V: AsRef<[f32]>,
    {
        let mut v = Vocabulary::empty(dim);
        for (token, vector) in pairs {
            let vector = vector.as_ref();
            if vector.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: vector.len(),
                });
            }
            v.insert(token, vector);
        }
        Ok(v)
    }

    fn insert(&mut self, token: &str, vector: &[f32]) -> bool {
        if self.index.contains_key(token) {
            self.duplicates += 1;
            return false;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() as u32);
        self.matrix.extend_from_slice(vector);
        true
    }

    /// Parses the whitespace-separated `token v1 ... vD` format. The first
    /// line fixes D.
    pub fn parse(text: &str) -> Result<Self> {
        let mut vocab: Option<Vocabulary> = None;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            values.clear();
            for f in fields {
                let x: f32 = f.parse().map_err(|_| Error::Vectors {
                    line: line_no,
                    message: format!("bad value `{f}`"),
                })?;
                if !x.is_finite() {
                    return Err(Error::Vectors {
                        line: line_no,
                        message: format!("non-finite value `{f}`"),
                    });
                }
                values.push(x);
            }
            let v = match &mut vocab {
                Some(v) => v,
                None => {
                    if values.is_empty() {
                        return Err(Error::Vectors {
                            line: line_no,
                            message: "no vector components".into(),
                        });
                    }
                    vocab.insert(Vocabulary::empty(values.len()))
                }
            };
            if values.len() != v.dim {
                return Err(Error::Vectors {
                    line: line_no,
                    message: format!("expected {} components, found {}", v.dim, values.len()),
                });
            }
            if !v.insert(token, &values) {
                log::warn!("duplicate vector for `{token}` at line {line_no}, keeping the first");
            }
        }
        vocab.ok_or(Error::Vectors {
            line: 0,
            message: "empty vector file".into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of tokens, excluding padding.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.tokens.get(i as usize))
            .map(String::as_str)
    }

    /// Vector of `index`; index 0 is the zero vector.
    pub fn vector(&self, index: u32) -> Result<&[f32]> {
        let i = index as usize;
        if i > self.tokens.len() {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.tokens.len() + 1,
            });
        }
        Ok(&self.matrix[i * self.dim..(i + 1) * self.dim])
    }

    /// Tokens in index order, starting at index 1.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

/// Vocabulary indices of a paragraph, padded to the window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexedParagraph {
    pub indices: Vec<u32>,
    /// Number of real tokens at the front of `indices`.
    pub len: usize,
}

impl IndexedParagraph {
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tokens(&self) -> &[u32] {
        &self.indices[..self.len]
    }
}

/// Maps tokens to indices, dropping out-of-vocabulary tokens and keeping
/// the first `window` of the rest.
pub fn index_tokens<'a>(
    tokens: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
    window: usize,
) -> IndexedParagraph {
    let mut indices: Vec<u32> = tokens
        .into_iter()
        .filter_map(|t| vocab.index_of(t))
        .take(window)
        .collect();
    let len = indices.len();
    indices.resize(window, 0);
    IndexedParagraph { indices, len }
}

pub fn index_paragraph(
    para: &NormalizedParagraph,
    vocab: &Vocabulary,
    window: usize,
) -> IndexedParagraph {
    index_tokens(para.tokens().map(|t| t.text.as_str()), vocab, window)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedParagraph {
    pub window: usize,
    pub dim: usize,
    /// Row-major `window × dim`.
    pub matrix: Vec<f32>,
    pub mask: Vec<bool>,
}

impl EmbeddedParagraph {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn embed(indices: &[u32], vocab: &Vocabulary) -> Result<EmbeddedParagraph> {
    let dim = vocab.dim();
    let mut matrix = Vec::with_capacity(indices.len() * dim);
    let mut mask = Vec::with_capacity(indices.len());
    for &i in indices {
        matrix.extend_from_slice(vocab.vector(i)?);
        mask.push(i != 0);
    }
    Ok(EmbeddedParagraph {
        window: indices.len(),
        dim,
        matrix,
        mask,
    })
}
