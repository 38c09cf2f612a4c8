use serde::{Deserialize, Serialize};

use super::TokenSequence;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Next-sentence prediction: negatives pair a sentence with a random
    /// non-successor.
    Nsp,
    /// Sentence-order prediction: negatives swap a positive pair.
    Sop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub first: TokenSequence,
    pub second: TokenSequence,
    pub label: PairLabel,
    pub mode: PairMode,
}

/// Builds `count` (positive, negative) pairs from an ordered list of
/// sentences. Positives are adjacent sentences `(s[i], s[i+1])` for `count`
/// distinct start indices drawn under `seed`.
pub fn build_pair_datasets(
    sentences: &[TokenSequence],
    mode: PairMode,
    count: usize,
    seed: u64,
) -> Result<Vec<(SentencePair, SentencePair)>> {
    if sentences.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 sentences, got {}",
            sentences.len()
        )));
    }
    let adjacent = sentences.len() - 1;
    if count > adjacent {
        return Err(Error::InsufficientData(format!(
            "requested {count} pairs but only {adjacent} adjacent pairs exist"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let starts = rng.sample_indices(adjacent, count);
    Ok(starts
        .into_iter()
        .map(|i| {
            let pos = SentencePair {
                first: sentences[i].clone(),
                second: sentences[i + 1].clone(),
                label: PairLabel::Positive,
                mode,
            };
            let neg = match mode {
                PairMode::Sop => SentencePair {
                    first: pos.second.clone(),
                    second: pos.first.clone(),
                    label: PairLabel::Negative,
                    mode,
                },
                PairMode::Nsp => {
                    // Uniform over every index except the true successor.
                    let mut j = rng.below(sentences.len() - 1);
                    if j >= i + 1 {
                        j += 1;
                    }
                    SentencePair {
                        first: pos.first.clone(),
                        second: sentences[j].clone(),
                        label: PairLabel::Negative,
                        mode,
                    }
                }
            };
            (pos, neg)
        })
        .collect())
}
