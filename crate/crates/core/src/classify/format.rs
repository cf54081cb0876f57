//! Binary model container.
//!
//! ```text
//! "STMC" | version u16 | kind u8 | 0u8
//! window, emb_dim, input_dim, hidden, classes, vocab_size, constant_class: u32
//! classes × (name length u16, UTF-8 bytes)
//! parameter count u64 | parameters f64 ...
//! ```
//! All integers and floats are little-endian.

use super::{Body, Model, ModelKind, Network};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STMC";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(model.kind.code());
    out.push(0);
    let (input_dim, hidden, constant, params): (usize, usize, usize, &[f64]) = match &model.body {
        Body::Constant(c) => (0, 0, *c, &[]),
        Body::Network(n) => (n.input_dim, n.hidden.unwrap_or(0), 0, &n.params),
    };
    for v in [
        model.window,
        model.emb_dim,
        input_dim,
        hidden,
        model.classes.len(),
        model.vocab_size,
        constant,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for name in &model.classes {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(bad(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("not a model file"));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = ModelKind::from_code(r.take(1)?[0]).ok_or_else(|| bad("unknown model kind"))?;
    r.take(1)?;
    let window = r.u32()?;
    let emb_dim = r.u32()?;
    let input_dim = r.u32()?;
    let hidden = r.u32()?;
    let classes = r.u32()?;
    let vocab_size = r.u32()?;
    let constant = r.u32()?;

    if classes == 0 {
        return Err(bad("no classes"));
    }
    if classes.saturating_mul(2) > r.remaining() {
        return Err(bad("class table larger than file"));
    }
    let mut names = Vec::with_capacity(classes);
    for _ in 0..classes {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("class name is not UTF-8"))?;
        names.push(name.to_string());
    }

    let expected_input = match kind {
        ModelKind::ZeroRule => 0,
        ModelKind::LogRegIndex => window,
        ModelKind::LogRegEmbedded | ModelKind::Mlp => window
            .checked_mul(emb_dim)
            .ok_or_else(|| bad("input size overflow"))?,
    };
    if input_dim != expected_input {
        return Err(bad(format!(
            "input size {input_dim} does not match window and embedding ({expected_input})"
        )));
    }
    if (kind == ModelKind::Mlp) != (hidden > 0) {
        return Err(bad("hidden width inconsistent with model kind"));
    }
    if kind == ModelKind::LogRegIndex && emb_dim != 0 {
        return Err(bad("index model with embedding dimension"));
    }

    let count = r.u64()?;
    let body = if kind == ModelKind::ZeroRule {
        if count != 0 {
            return Err(bad("zero rule carries parameters"));
        }
        if constant >= classes {
            return Err(bad("constant class out of range"));
        }
        Body::Constant(constant)
    } else {
        if input_dim == 0 {
            return Err(bad("empty input"));
        }
        let hidden = (hidden > 0).then_some(hidden);
        let expected = Network::param_count(input_dim, hidden, classes)
            .ok_or_else(|| bad("parameter count overflow"))?;
        if count != expected as u64 {
            return Err(bad(format!("expected {expected} parameters, found {count}")));
        }
        if expected.checked_mul(8) != Some(r.remaining()) {
            return Err(bad("parameter block has the wrong length"));
        }
        let raw = r.take(expected * 8)?;
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Body::Network(Network {
            input_dim,
            hidden,
            classes,
            params,
        })
    };
    if r.remaining() != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(Model {
        kind,
        classes: names,
        window,
        emb_dim,
        vocab_size,
        body,
    })
}
