use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::error::{Error, Result};

/// TF-IDF scores over fixed-length pseudo-documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfTable {
    pub doc_len: usize,
    pub n_docs: usize,
    /// Sparse per-document scores; absent tokens score 0.
    docs: Vec<HashMap<TokenId, f64>>,
}

impl TfidfTable {
    pub fn score(&self, doc: usize, token: TokenId) -> f64 {
        self.docs.get(doc).and_then(|d| d.get(&token)).copied().unwrap_or(0.0)
    }

    /// Score of the token at global position `pos` of the source stream, or
    /// `None` if the position falls in the dropped remainder.
    pub fn score_at(&self, pos: usize, token: TokenId) -> Option<f64> {
        let doc = pos / self.doc_len;
        (doc < self.n_docs).then(|| self.score(doc, token))
    }
}

/// `tf = count / doc_len`, `idf = ln(n_docs / df)`, `score = tf * idf`.
pub fn tfidf_scores(seq: &[TokenId], doc_len: usize) -> Result<TfidfTable> {
    if doc_len < 1 {
        return Err(Error::config("doc_len must be >= 1"));
    }
    if seq.len() < doc_len {
        return Err(Error::CorpusTooSmall(format!(
            "{} tokens is shorter than one document of {doc_len}",
            seq.len()
        )));
    }
    let counts: Vec<HashMap<TokenId, usize>> = seq
        .chunks_exact(doc_len)
        .map(|doc| {
            let mut c = HashMap::new();
            for &t in doc {
                *c.entry(t).or_insert(0) += 1;
            }
            c
        })
        .collect();
    let n_docs = counts.len();
    let mut df: HashMap<TokenId, usize> = HashMap::new();
    for c in &counts {
        for &t in c.keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let docs = counts
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|(t, n)| {
                    let idf = (n_docs as f64 / df[&t] as f64).ln();
                    (t, n as f64 / doc_len as f64 * idf)
                })
                .collect()
        })
        .collect();
    Ok(TfidfTable { doc_len, n_docs, docs })
}
