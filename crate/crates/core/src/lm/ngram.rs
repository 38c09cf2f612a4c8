use std::collections::{BTreeMap, HashMap};

use super::LanguageModel;
use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ContextCounts {
    pub(crate) total: u64,
    pub(crate) next: BTreeMap<TokenId, u64>,
}

/// Counted n-gram model with add-k smoothing.
///
/// `p(w | ctx) = (count(ctx w) + k) / (count(ctx) + k |V|)` using the longest
/// available context (at most `order - 1` tokens). When `k = 0` and a
/// context was never observed the formula is undefined, so the model backs
/// off to successively shorter contexts; with `k > 0` an unseen context
/// yields the uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLm {
    order: usize,
    k_s: f64,
    vocab: Vocab,
    /// `tables[k]` holds contexts of length `k`.
    pub(crate) tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
}

impl NGramLm {
    pub fn fit<S: AsRef<[TokenId]>>(
        train: &[S],
        order: usize,
        k_s: f64,
        vocab: Vocab,
    ) -> Result<Self> {
        if order < 1 {
            return Err(Error::BadOrder(order));
        }
        if !(k_s >= 0.0) || !k_s.is_finite() {
            return Err(Error::config(format!("smoothing constant must be >= 0, got {k_s}")));
        }
        if vocab.is_empty() || train.iter().all(|s| s.as_ref().is_empty()) {
            return Err(Error::EmptyInput);
        }
        let mut tables = vec![HashMap::new(); order];
        for seq in train {
            let seq = seq.as_ref();
            vocab.check(seq)?;
            for t in 0..seq.len() {
                for k in 0..order.min(t + 1) {
                    let entry: &mut ContextCounts =
                        tables[k].entry(seq[t - k..t].to_vec()).or_default();
                    entry.total += 1;
                    *entry.next.entry(seq[t]).or_insert(0) += 1;
                }
            }
        }
        Ok(Self { order, k_s, vocab, tables })
    }

    pub(crate) fn from_parts(
        order: usize,
        k_s: f64,
        vocab: Vocab,
        tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
    ) -> Self {
        Self { order, k_s, vocab, tables }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k_s
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Raw count of `ctx` followed by `w`.
    pub fn count(&self, ctx: &[TokenId], w: TokenId) -> u64 {
        self.tables
            .get(ctx.len())
            .and_then(|t| t.get(ctx))
            .and_then(|c| c.next.get(&w))
            .copied()
            .unwrap_or(0)
    }
}

impl LanguageModel for NGramLm {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let v = self.vocab.len();
        let max_k = (self.order - 1).min(context.len());
        for k in (0..=max_k).rev() {
            let ctx = &context[context.len() - k..];
            match self.tables[k].get(ctx) {
                Some(c) => {
                    let denom = c.total as f64 + self.k_s * v as f64;
                    let mut dist = vec![self.k_s / denom; v];
                    for (&w, &n) in &c.next {
                        dist[w as usize] = (n as f64 + self.k_s) / denom;
                    }
                    return Ok(dist);
                }
                None if self.k_s > 0.0 => return Ok(vec![1.0 / v as f64; v]),
                None => continue,
            }
        }
        // Only reachable if the unigram table is empty, which `fit` rules out.
        Err(Error::EmptyInput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Scheme};
    use crate::lm::perplexity;
    use proptest::prelude::*;

    fn fit_text(text: &str, order: usize, k: f64) -> (NGramLm, Vec<TokenId>) {
        let (seq, vocab) = tokenize(text, Scheme::Word).unwrap();
        let lm = NGramLm::fit(&[seq.ids()], order, k, vocab).unwrap();
        (lm, seq.into_ids())
    }

    #[test]
    fn mle_bigram() {
        let (lm, _) = fit_text("a b a b", 2, 0.0);
        let a = lm.vocab().id_of("a").unwrap();
        let b = lm.vocab().id_of("b").unwrap();
        assert_eq!(lm.next_dist(&[a]).unwrap()[b as usize], 1.0);
    }

    #[test]
    fn unseen_context_smoothed_is_uniform() {
        // "b" is never followed by anything, so ctx [b] is unseen.
        let (lm, _) = fit_text("a b", 2, 1.0);
        assert_eq!(lm.next_dist(&[1]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn add_one_closed_form() {
        let (lm, _) = fit_text("a b", 2, 1.0);
        let p = lm.next_dist(&[0]).unwrap()[1];
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_context_mle_backs_off() {
        let (lm, _) = fit_text("a b", 2, 0.0);
        assert_eq!(lm.next_dist(&[1]).unwrap(), vec![0.5, 0.5]);
        let (lm, _) = fit_text("a a b", 2, 0.0);
        let d = lm.next_dist(&[1]).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bigram_perplexity_by_hand() {
        let (lm, ids) = fit_text("a b a b", 2, 0.0);
        // p(a|start) uses unigrams: 2/4; p(b|a) = 1.
        let expect = (-(0.5f64.ln() + 1f64.ln()) / 2.0).exp();
        let got = perplexity(&lm, &ids[..2], &[]).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let v = Vocab::anonymous(3);
        let empty: Vec<Vec<TokenId>> = vec![];
        assert!(matches!(NGramLm::fit(&empty, 2, 1.0, v.clone()), Err(Error::EmptyInput)));
        assert!(matches!(NGramLm::fit(&[vec![0]], 0, 1.0, v.clone()), Err(Error::BadOrder(0))));
        assert!(NGramLm::fit(&[vec![7]], 2, 1.0, v).is_err());
    }

    proptest! {
        #[test]
        fn valid_distribution(
            data in prop::collection::vec(prop::collection::vec(0u32..6, 1..20), 1..4),
            ctx in prop::collection::vec(0u32..6, 0..5),
            order in 1usize..4,
            k in prop_oneof![Just(0.0), 0.01f64..2.0],
        ) {
            let lm = NGramLm::fit(&data, order, k, Vocab::anonymous(6)).unwrap();
            let d = lm.next_dist(&ctx).unwrap();
            prop_assert!(d.iter().all(|&p| p >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            if k > 0.0 {
                prop_assert!(d.iter().all(|&p| p > 0.0));
            }
        }

        #[test]
        fn mle_matches_direct_counts(
            data in prop::collection::vec(prop::collection::vec(0u32..4, 2..25), 1..4),
            order in 1usize..4,
        ) {
            let lm = NGramLm::fit(&data, order, 0.0, Vocab::anonymous(4)).unwrap();
            // Oracle: count every (context, next) occurrence directly.
            for seq in &data {
                for t in 0..seq.len() {
                    let k = (order - 1).min(t);
                    let ctx = &seq[t - k..t];
                    let mut follow = [0usize; 4];
                    let mut total = 0;
                    for s in &data {
                        for u in k..s.len() {
                            if &s[u - k..u] == ctx {
                                follow[s[u] as usize] += 1;
                                total += 1;
                            }
                        }
                    }
                    let d = lm.next_dist(ctx).unwrap();
                    for w in 0..4 {
                        prop_assert!((d[w] - follow[w] as f64 / total as f64).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
