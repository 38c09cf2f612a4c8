use serde::{Deserialize, Serialize};

use super::{TokenId, TokenSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplits {
    pub train: Vec<TokenSequence>,
    pub dev: Vec<TokenSequence>,
    pub test: Vec<TokenSequence>,
    pub seq_len: usize,
    pub ratios: [f64; 3],
}

impl CorpusSplits {
    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.dev.len(), self.test.len()]
    }
}

/// Split sizes for `n` chunks: floor for train and dev, remainder to test,
/// then every split is lifted to at least one chunk by borrowing from the
/// larger of train/dev.
pub(crate) fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let mut train = ((n as f64 * ratios[0]).floor() as usize).max(1);
    let mut dev = ((n as f64 * ratios[1]).floor() as usize).max(1);
    while train + dev > n - 1 {
        if train >= dev {
            train -= 1;
        } else {
            dev -= 1;
        }
    }
    [train, dev, n - train - dev]
}

/// Cuts `seq` into consecutive `seq_len` windows (dropping the short tail)
/// and assigns them, in order, to train/dev/test.
pub fn split_corpus(seq: &[TokenId], seq_len: usize, ratios: [f64; 3]) -> Result<CorpusSplits> {
    if seq_len < 2 {
        return Err(Error::config(format!("seq_len must be >= 2, got {seq_len}")));
    }
    if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("ratios must be positive and sum to 1, got {ratios:?}")));
    }
    let chunks: Vec<TokenSequence> =
        seq.chunks_exact(seq_len).map(TokenSequence::from).collect();
    if chunks.len() < 3 {
        return Err(Error::CorpusTooSmall(format!(
            "{} tokens make {} chunks of {seq_len}; need 3",
            seq.len(),
            chunks.len()
        )));
    }
    let [a, b, _] = allocate(chunks.len(), ratios);
    let mut it = chunks.into_iter();
    let train = it.by_ref().take(a).collect();
    let dev = it.by_ref().take(b).collect();
    let test = it.collect();
    Ok(CorpusSplits { train, dev, test, seq_len, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EIGHTY_TEN_TEN: [f64; 3] = [0.8, 0.1, 0.1];

    #[test]
    fn large_corpus_counts() {
        // Floor rule gives 6220/777/779; the source reports 6220/778/778.
        assert_eq!(allocate(7776, EIGHTY_TEN_TEN), [6220, 777, 779]);
    }

    #[test]
    fn ten_chunks() {
        assert_eq!(allocate(10, EIGHTY_TEN_TEN), [8, 1, 1]);
        let seq: Vec<u32> = (0..25).collect();
        let s = split_corpus(&seq, 2, EIGHTY_TEN_TEN).unwrap();
        assert_eq!(s.counts(), [9, 1, 2]);
    }

    #[test]
    fn three_chunks_minimum() {
        assert_eq!(allocate(3, EIGHTY_TEN_TEN), [1, 1, 1]);
        assert_eq!(allocate(3, [0.98, 0.01, 0.01]), [1, 1, 1]);
        assert_eq!(allocate(3, [0.01, 0.98, 0.01]), [1, 1, 1]);
    }

    #[test]
    fn too_small() {
        let seq: Vec<u32> = (0..5).collect();
        assert!(matches!(split_corpus(&seq, 2, EIGHTY_TEN_TEN), Err(Error::CorpusTooSmall(_))));
        assert!(split_corpus(&seq, 1, EIGHTY_TEN_TEN).unwrap_err().is_config());
        assert!(split_corpus(&seq, 2, [0.5, 0.5, 0.1]).unwrap_err().is_config());
    }

    proptest! {
        #[test]
        fn partitions_chunked_prefix(
            len in 6usize..400,
            seq_len in 2usize..9,
            r1 in 0.05f64..0.9,
            r2frac in 0.05f64..0.95,
        ) {
            let r2 = (1.0 - r1) * r2frac;
            let ratios = [r1, r2, 1.0 - r1 - r2];
            let seq: Vec<u32> = (0..len as u32).collect();
            match split_corpus(&seq, seq_len, ratios) {
                Ok(s) => {
                    let joined: Vec<u32> = s.train.iter().chain(&s.dev).chain(&s.test)
                        .flat_map(|c| c.iter().copied()).collect();
                    let n = len / seq_len;
                    prop_assert_eq!(joined, (0..(n * seq_len) as u32).collect::<Vec<_>>());
                    prop_assert!(s.counts().iter().all(|&c| c >= 1));
                    prop_assert!(s.train.iter().chain(&s.dev).chain(&s.test).all(|c| c.len() == seq_len));
                }
                Err(Error::CorpusTooSmall(_)) => prop_assert!(len / seq_len < 3),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
