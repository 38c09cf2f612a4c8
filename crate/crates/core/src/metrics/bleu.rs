use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Stand-in for a zero modified precision.
    pub smoothing_epsilon: f64,
    /// Score only this many candidates (drawn under `subsample_seed`);
    /// `None` scores all of them.
    pub reference_subsample: Option<usize>,
    pub subsample_seed: u64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self { max_n: 4, smoothing_epsilon: 1e-9, reference_subsample: None, subsample_seed: 0 }
    }
}

impl BleuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_n < 1 {
            return Err(Error::BadOrder(self.max_n));
        }
        if !(self.smoothing_epsilon > 0.0) {
            return Err(Error::config("smoothing_epsilon must be positive"));
        }
        Ok(())
    }
}

/// Sufficient statistics of one candidate against a reference pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// Geometric mean of modified precisions over the orders the candidate
    /// is long enough to have, zeros floored at epsilon, times the brevity
    /// penalty `exp(min(0, 1 - r/c))`.
    pub fn score(&self, eps: f64) -> f64 {
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let p = if m == 0 { eps } else { m as f64 / t as f64 };
            log_sum += p.ln();
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        let bp = (1.0 - self.ref_len as f64 / self.cand_len as f64).min(0.0).exp();
        bp * (log_sum / orders as f64).exp()
    }
}

fn counts(seq: &[TokenId], n: usize) -> HashMap<&[TokenId], u64> {
    let mut c = HashMap::new();
    for w in seq.windows(n) {
        *c.entry(w).or_insert(0) += 1;
    }
    c
}

/// Closest length to `c`, ties to the shorter.
fn closest(c: usize, lens: impl Iterator<Item = usize>) -> usize {
    lens.min_by_key(|&r| (r.abs_diff(c), r)).expect("non-empty references")
}

/// Straightforward O(candidate x references) statistics.
pub fn bleu_stats_naive(candidate: &[TokenId], references: &[&[TokenId]], max_n: usize) -> BleuStats {
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    for n in 1..=max_n {
        let cand = counts(candidate, n);
        let refs: Vec<_> = references.iter().map(|r| counts(r, n)).collect();
        for (g, &cnt) in &cand {
            let max_ref = refs.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            matches[n - 1] += cnt.min(max_ref);
            totals[n - 1] += cnt;
        }
    }
    let ref_len = closest(candidate.len(), references.iter().map(|r| r.len()));
    BleuStats { matches, totals, cand_len: candidate.len(), ref_len }
}

pub fn bleu_naive(candidate: &[TokenId], references: &[&[TokenId]], cfg: &BleuConfig) -> Result<f64> {
    check_inputs(candidate, references.len())?;
    cfg.validate()?;
    Ok(bleu_stats_naive(candidate, references, cfg.max_n).score(cfg.smoothing_epsilon))
}

fn check_inputs(candidate: &[TokenId], n_refs: usize) -> Result<()> {
    if candidate.is_empty() || n_refs == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Top2 {
    best: u64,
    owner: usize,
    second: u64,
}

/// Hashed index over a reference pool: for every n-gram, the two largest
/// per-reference counts (and who holds the largest), so clipped counts can
/// be looked up in O(1), including with one reference left out.
pub struct ReferenceIndex<'a> {
    max_n: usize,
    grams: Vec<HashMap<&'a [TokenId], Top2>>,
    lens: BTreeMap<usize, usize>,
    ref_lens: Vec<usize>,
}

impl<'a> ReferenceIndex<'a> {
    pub fn new(references: &[&'a [TokenId]], max_n: usize) -> Self {
        let mut grams: Vec<HashMap<&'a [TokenId], Top2>> = vec![HashMap::new(); max_n];
        let mut lens = BTreeMap::new();
        for (i, r) in references.iter().enumerate() {
            *lens.entry(r.len()).or_insert(0) += 1;
            for n in 1..=max_n {
                let table = &mut grams[n - 1];
                for (g, cnt) in counts(r, n) {
                    let e = table.entry(g).or_insert(Top2 { best: 0, owner: usize::MAX, second: 0 });
                    if cnt > e.best {
                        e.second = e.best;
                        e.best = cnt;
                        e.owner = i;
                    } else if cnt > e.second {
                        e.second = cnt;
                    }
                }
            }
        }
        Self { max_n, grams, lens, ref_lens: references.iter().map(|r| r.len()).collect() }
    }

    pub fn len(&self) -> usize {
        self.ref_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ref_lens.is_empty()
    }

    fn closest_len(&self, c: usize, exclude: Option<usize>) -> Option<usize> {
        let skip = exclude.map(|i| self.ref_lens[i]);
        let avail = |len: usize, n: usize| if Some(len) == skip { n > 1 } else { n > 0 };
        let below = self.lens.range(..=c).rev().find(|(&l, &n)| avail(l, n)).map(|(&l, _)| l);
        let above = self.lens.range(c..).find(|(&l, &n)| avail(l, n)).map(|(&l, _)| l);
        match (below, above) {
            (Some(b), Some(a)) => Some(if c - b <= a - c { b } else { a }),
            (b, a) => b.or(a),
        }
    }

    /// Statistics of `candidate` against every reference except `exclude`.
    pub fn stats(&self, candidate: &[TokenId], exclude: Option<usize>) -> Option<BleuStats> {
        let ref_len = self.closest_len(candidate.len(), exclude)?;
        let mut matches = vec![0; self.max_n];
        let mut totals = vec![0; self.max_n];
        for n in 1..=self.max_n {
            for (g, cnt) in counts(candidate, n) {
                let max_ref = match self.grams[n - 1].get(g) {
                    Some(t) if Some(t.owner) == exclude => t.second,
                    Some(t) => t.best,
                    None => 0,
                };
                matches[n - 1] += cnt.min(max_ref);
                totals[n - 1] += cnt;
            }
        }
        Some(BleuStats { matches, totals, cand_len: candidate.len(), ref_len })
    }
}

/// Sentence BLEU against a reference pool via the hashed index.
pub fn bleu(candidate: &[TokenId], references: &[&[TokenId]], cfg: &BleuConfig) -> Result<f64> {
    check_inputs(candidate, references.len())?;
    cfg.validate()?;
    let idx = ReferenceIndex::new(references, cfg.max_n);
    Ok(idx.stats(candidate, None).expect("non-empty").score(cfg.smoothing_epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(max_n: usize) -> BleuConfig {
        BleuConfig { max_n, ..BleuConfig::default() }
    }

    #[test]
    fn brevity_hand_case() {
        // "the cat sat" vs "the cat sat on the mat": the=0 cat=1 sat=2 on=3 mat=4
        let cand = [0, 1, 2];
        let r = [0, 1, 2, 3, 0, 4];
        let got = bleu(&cand, &[&r], &cfg(2)).unwrap();
        assert!((got - (-1f64).exp()).abs() < 1e-12);
        assert!((got - 0.3679).abs() < 1e-4);
        assert_eq!(got, bleu_naive(&cand, &[&r], &cfg(2)).unwrap());
    }

    #[test]
    fn identity_and_disjoint() {
        let s = [3, 1, 4, 1, 5, 9, 2, 6];
        assert_eq!(bleu(&s, &[&[7, 7], &s], &cfg(4)).unwrap(), 1.0);
        let got = bleu(&[1, 2, 3, 4, 5], &[&[6, 7, 8, 9, 10]], &cfg(4)).unwrap();
        assert!((got - 1e-9).abs() < 1e-15);
    }

    #[test]
    fn short_candidate_skips_missing_orders() {
        assert_eq!(bleu(&[5, 6], &[&[5, 6]], &cfg(4)).unwrap(), 1.0);
    }

    #[test]
    fn clipping() {
        // Candidate "a a a a" vs "a b": p1 = 1/4 clipped.
        let s = bleu_stats_naive(&[0, 0, 0, 0], &[&[0, 1]], 1);
        assert_eq!(s.matches, vec![1]);
        assert_eq!(s.totals, vec![4]);
    }

    #[test]
    fn closest_length_ties_to_shorter() {
        let s = bleu_stats_naive(&[1, 2, 3, 4], &[&[1, 2, 3], &[1, 2, 3, 4, 5]], 1);
        assert_eq!(s.ref_len, 3);
        let refs: [&[u32]; 3] = [&[1, 2, 3], &[1, 2, 3, 4, 5], &[9, 9, 9, 9, 9, 9]];
        let idx = ReferenceIndex::new(&refs, 2);
        assert_eq!(idx.stats(&[1, 2, 3, 4], None).unwrap().ref_len, 3);
        assert_eq!(idx.stats(&[1, 2, 3, 4], Some(0)).unwrap().ref_len, 5);
    }

    #[test]
    fn rejects_empty() {
        assert!(bleu(&[], &[&[1]], &cfg(4)).is_err());
        assert!(bleu(&[1], &[], &cfg(4)).is_err());
        assert!(bleu(&[1], &[&[1]], &cfg(0)).is_err());
    }
}
