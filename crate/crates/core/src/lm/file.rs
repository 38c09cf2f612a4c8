//! Model container: the 5-byte magic `LMEK1`, a little-endian `u64` header
//! length, a JSON header, then a body of little-endian `f64` values.
//!
//! The feed-forward body is the flat parameter vector. The n-gram body lists,
//! for every context length `k = 0..order` and every context in sorted order:
//! the `k` context ids, the number of successors `m`, then `m` pairs of
//! (successor id, count). Ids and counts are stored as exact integers in
//! `f64`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ffn::{FeedForwardLm, FfnDims};
use super::ngram::{ContextCounts, NGramLm};
use super::LanguageModel;
use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"LMEK1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
enum Header {
    Ngram { order: usize, k_s: f64, vocab: Vocab, tables: Vec<usize> },
    Ffn { dims: FfnDims, vocab: Vocab, n_params: usize },
}

/// Either built-in backend, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    NGram(NGramLm),
    Ffn(FeedForwardLm),
}

impl AnyModel {
    pub fn vocab(&self) -> &Vocab {
        match self {
            AnyModel::NGram(m) => m.vocab(),
            AnyModel::Ffn(m) => m.vocab(),
        }
    }
}

impl LanguageModel for AnyModel {
    fn vocab_size(&self) -> usize {
        match self {
            AnyModel::NGram(m) => m.vocab_size(),
            AnyModel::Ffn(m) => m.vocab_size(),
        }
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        match self {
            AnyModel::NGram(m) => m.next_dist(context),
            AnyModel::Ffn(m) => m.next_dist(context),
        }
    }
}

impl From<NGramLm> for AnyModel {
    fn from(m: NGramLm) -> Self {
        AnyModel::NGram(m)
    }
}

impl From<FeedForwardLm> for AnyModel {
    fn from(m: FeedForwardLm) -> Self {
        AnyModel::Ffn(m)
    }
}

pub fn encode_model(model: &AnyModel) -> Result<Vec<u8>> {
    let (header, body) = match model {
        AnyModel::Ffn(m) => (
            Header::Ffn { dims: m.dims().clone(), vocab: m.vocab().clone(), n_params: m.num_params() },
            m.params().to_vec(),
        ),
        AnyModel::NGram(m) => {
            let mut body = Vec::new();
            let mut sizes = Vec::new();
            for table in &m.tables {
                let mut keys: Vec<&Vec<TokenId>> = table.keys().collect();
                keys.sort();
                sizes.push(keys.len());
                for ctx in keys {
                    let c = &table[ctx];
                    body.extend(ctx.iter().map(|&t| t as f64));
                    body.push(c.next.len() as f64);
                    for (&w, &n) in &c.next {
                        body.push(w as f64);
                        body.push(n as f64);
                    }
                }
            }
            (
                Header::Ngram { order: m.order(), k_s: m.smoothing(), vocab: m.vocab().clone(), tables: sizes },
                body,
            )
        }
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(13 + json.len() + 8 * body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in body {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Body<'a> {
    bytes: &'a [u8],
}

impl Body<'_> {
    fn next(&mut self) -> Result<f64> {
        if self.bytes.len() < 8 {
            return Err(Error::format("model body truncated"));
        }
        let (head, rest) = self.bytes.split_at(8);
        self.bytes = rest;
        Ok(f64::from_le_bytes(head.try_into().expect("8 bytes")))
    }

    fn next_int(&mut self) -> Result<u64> {
        let v = self.next()?;
        if v < 0.0 || v.fract() != 0.0 || v > (1u64 << 53) as f64 {
            return Err(Error::format(format!("expected an integer in model body, found {v}")));
        }
        Ok(v as u64)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<AnyModel> {
    if bytes.len() < 13 || &bytes[..5] != MAGIC {
        return Err(Error::format("not an LMEK1 model file"));
    }
    let hlen = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(13..13 + hlen)
        .ok_or_else(|| Error::format("model header truncated"))?;
    let header: Header = serde_json::from_slice(json)?;
    let mut body = Body { bytes: &bytes[13 + hlen..] };
    let model = match header {
        Header::Ffn { dims, vocab, n_params } => {
            let params = (0..n_params).map(|_| body.next()).collect::<Result<Vec<_>>>()?;
            AnyModel::Ffn(FeedForwardLm::from_params(vocab, dims, params)?)
        }
        Header::Ngram { order, k_s, vocab, tables: sizes } => {
            if sizes.len() != order {
                return Err(Error::format("n-gram table count does not match order"));
            }
            let mut tables = Vec::with_capacity(order);
            for (k, &n) in sizes.iter().enumerate() {
                let mut table = HashMap::with_capacity(n);
                for _ in 0..n {
                    let ctx = (0..k)
                        .map(|_| body.next_int().map(|v| v as TokenId))
                        .collect::<Result<Vec<_>>>()?;
                    vocab.check(&ctx)?;
                    let m = body.next_int()?;
                    let mut c = ContextCounts::default();
                    for _ in 0..m {
                        let w = body.next_int()? as TokenId;
                        vocab.check(&[w])?;
                        let n = body.next_int()?;
                        c.total += n;
                        c.next.insert(w, n);
                    }
                    table.insert(ctx, c);
                }
                tables.push(table);
            }
            AnyModel::NGram(NGramLm::from_parts(order, k_s, vocab, tables))
        }
    };
    if !body.bytes.is_empty() {
        return Err(Error::format("trailing bytes after model body"));
    }
    Ok(model)
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    decode_model(&fs::read(path)?)
}
