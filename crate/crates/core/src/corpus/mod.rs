//! Text ingestion: tokenization, vocabularies, corpus splitting, n-gram
//! extraction, sentence segmentation, sentence-pair datasets and TF-IDF
//! targets.

mod io;
mod ngrams;
mod pairs;
mod sentences;
mod split;
mod tfidf;
mod tokenize;

pub use io::{read_id_file, write_id_file, SplitManifest};
pub use ngrams::{extract_ngrams, NgramCounts};
pub use pairs::{build_pair_datasets, PairLabel, PairMode, SentencePair};
pub use sentences::segment_sentences;
pub use split::{split_corpus, CorpusSplits};
pub use tfidf::{tfidf_scores, TfidfTable};
pub use tokenize::{detokenize, tokenize, Scheme, Vocab, UNK};

use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

/// A non-empty run of token ids.
///
/// Sequences do not carry their vocabulary; [`Vocab::check`] validates ids
/// against one when crossing a trust boundary (file loads, external input).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<TokenId>);

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

impl Deref for TokenSequence {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl AsRef<[TokenId]> for TokenSequence {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }
}

impl From<&[TokenId]> for TokenSequence {
    fn from(ids: &[TokenId]) -> Self {
        Self(ids.to_vec())
    }
}
