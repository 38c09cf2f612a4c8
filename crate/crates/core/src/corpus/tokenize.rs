use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::{TokenId, TokenSequence};
use crate::error::{Error, Result};

/// Surface form reserved for out-of-vocabulary tokens when a vocabulary
/// opts into one via [`Vocab::with_unk`].
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Whitespace-separated words with punctuation split off.
    Word,
    /// One token per Unicode scalar value.
    Char,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Scheme::Word),
            "char" => Ok(Scheme::Char),
            other => Err(Error::config(format!("unknown tokenizer scheme {other:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Word => "word",
            Scheme::Char => "char",
        })
    }
}

/// Bijection between surface strings and dense ids `0..len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    scheme: Scheme,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    scheme: Scheme,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let mut v = Vocab::empty(r.scheme);
        for t in r.tokens {
            v.intern(&t);
        }
        v
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { scheme: v.scheme, tokens: v.tokens }
    }
}

impl Vocab {
    pub fn empty(scheme: Scheme) -> Self {
        Self { tokens: Vec::new(), index: HashMap::new(), scheme }
    }

    /// Builds a vocabulary from surface strings in order; duplicates keep
    /// their first id.
    pub fn from_tokens<I, S>(scheme: Scheme, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::empty(scheme);
        for t in tokens {
            v.intern(t.as_ref());
        }
        v
    }

    /// Anonymous vocabulary of `size` ids, used for pre-tokenized input.
    pub fn anonymous(size: usize) -> Self {
        Self::from_tokens(Scheme::Word, (0..size).map(|i| format!("<{i}>")))
    }

    /// Appends the [`UNK`] entry if absent.
    pub fn with_unk(mut self) -> Self {
        self.intern(UNK);
        self
    }

    fn intern(&mut self, tok: &str) -> TokenId {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(tok.to_owned());
        self.index.insert(tok.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, tok: &str) -> Option<TokenId> {
        self.index.get(tok).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn unk(&self) -> Option<TokenId> {
        self.id_of(UNK)
    }

    pub fn check(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.len()) {
            Some(&id) => Err(Error::IdOutOfRange { id, size: self.len() }),
            None => Ok(()),
        }
    }

    /// Encodes `text` with this vocabulary's scheme. Unknown pieces map to
    /// [`UNK`] when present, otherwise fail. Empty text yields an empty
    /// vector.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let norm: String = text.nfc().collect();
        pieces(&norm, self.scheme)
            .into_iter()
            .map(|p| {
                self.id_of(&p)
                    .or_else(|| self.unk())
                    .ok_or(Error::OutOfVocabulary(p))
            })
            .collect()
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{2013}' | '\u{2014}' | '\u{00AB}' | '\u{00BB}'
        )
}

fn pieces(text: &str, scheme: Scheme) -> Vec<String> {
    match scheme {
        Scheme::Char => text.chars().map(String::from).collect(),
        Scheme::Word => {
            let mut out = Vec::new();
            for word in text.split_whitespace() {
                let mut cur = String::new();
                for c in word.chars() {
                    if is_punct(c) {
                        if !cur.is_empty() {
                            out.push(std::mem::take(&mut cur));
                        }
                        out.push(c.to_string());
                    } else {
                        cur.push(c);
                    }
                }
                if !cur.is_empty() {
                    out.push(cur);
                }
            }
            out
        }
    }
}

/// Tokenizes `text` (NFC-normalized) and builds a vocabulary in
/// first-occurrence order.
pub fn tokenize(text: &str, scheme: Scheme) -> Result<(TokenSequence, Vocab)> {
    let norm: String = text.nfc().collect();
    let ps = pieces(&norm, scheme);
    if ps.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut vocab = Vocab::empty(scheme);
    let ids = ps.iter().map(|p| vocab.intern(p)).collect();
    Ok((TokenSequence(ids), vocab))
}

/// Inverse of [`tokenize`]: exact for the char scheme, space-joined for the
/// word scheme.
pub fn detokenize(ids: &[TokenId], vocab: &Vocab) -> Result<String> {
    vocab.check(ids)?;
    let toks = ids.iter().map(|&i| vocab.tokens[i as usize].as_str());
    Ok(match vocab.scheme {
        Scheme::Char => toks.collect(),
        Scheme::Word => toks.collect::<Vec<_>>().join(" "),
    })
}
