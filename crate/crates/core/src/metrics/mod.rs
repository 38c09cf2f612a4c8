//! Quality and diversity metrics over sample sets.
//!
//! All metrics look at continuations only; prefixes are shared human text.

mod bleu;
mod samples;

pub use bleu::{bleu, bleu_naive, bleu_stats_naive, BleuConfig, BleuStats, ReferenceIndex};
pub use samples::{Provenance, Sample, SampleSet};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, NGramLm};
use crate::par;
use crate::rng::SplitMix64;

fn candidate_indices(n: usize, cfg: &BleuConfig) -> Vec<usize> {
    match cfg.reference_subsample {
        Some(k) if k < n => SplitMix64::new(cfg.subsample_seed).sample_indices(n, k),
        _ => (0..n).collect(),
    }
}

fn ordered_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean BLEU of each (sub-sampled) generated continuation against all
/// reference continuations.
pub fn corpus_bleu(gen: &SampleSet, refs: &SampleSet, cfg: &BleuConfig) -> Result<f64> {
    cfg.validate()?;
    if gen.is_empty() || refs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ref_seqs = refs.continuations();
    if ref_seqs.iter().any(|r| r.is_empty()) {
        return Err(Error::format("empty reference continuation"));
    }
    let index = ReferenceIndex::new(&ref_seqs, cfg.max_n);
    let cands = candidate_indices(gen.len(), cfg);
    let scores: Vec<Result<f64>> = par::map(&cands, |&i| {
        let c = &gen.samples[i].continuation_ids;
        if c.is_empty() {
            return Err(Error::format(format!("sample {} has an empty continuation", gen.samples[i].id)));
        }
        Ok(index.stats(c, None).expect("references present").score(cfg.smoothing_epsilon))
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ordered_mean(&scores))
}

/// Mean leave-one-out BLEU within the (sub-sampled) set; lower means more
/// diverse.
pub fn self_bleu(gen: &SampleSet, cfg: &BleuConfig) -> Result<f64> {
    cfg.validate()?;
    let picked = candidate_indices(gen.len(), cfg);
    if picked.len() < 2 {
        return Err(Error::InsufficientSamples(picked.len()));
    }
    let seqs: Vec<&[TokenId]> = picked.iter().map(|&i| gen.samples[i].continuation_ids.as_slice()).collect();
    if seqs.iter().any(|s| s.is_empty()) {
        return Err(Error::format("empty continuation in sample set"));
    }
    let index = ReferenceIndex::new(&seqs, cfg.max_n);
    let scores = par::map_range(seqs.len(), |i| {
        index.stats(seqs[i], Some(i)).expect("two or more samples").score(cfg.smoothing_epsilon)
    });
    Ok(ordered_mean(&scores))
}

/// Leave-one-out Self-BLEU computed the slow way; used to cross-check the
/// indexed path.
pub fn self_bleu_naive(gen: &SampleSet, cfg: &BleuConfig) -> Result<f64> {
    let picked = candidate_indices(gen.len(), cfg);
    if picked.len() < 2 {
        return Err(Error::InsufficientSamples(picked.len()));
    }
    let seqs: Vec<&[TokenId]> = picked.iter().map(|&i| gen.samples[i].continuation_ids.as_slice()).collect();
    let scores = (0..seqs.len())
        .map(|i| {
            let others: Vec<&[TokenId]> =
                seqs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| *s).collect();
            bleu_naive(seqs[i], &others, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ordered_mean(&scores))
}

/// `1 - unique n-grams / n-grams`, or `None` when `seq` is shorter than `n`.
pub fn seq_rep_n(seq: &[TokenId], n: usize) -> Result<Option<f64>> {
    if n < 1 {
        return Err(Error::BadOrder(n));
    }
    if seq.len() < n {
        return Ok(None);
    }
    let total = seq.len() - n + 1;
    let unique: HashSet<&[TokenId]> = seq.windows(n).collect();
    Ok(Some(1.0 - unique.len() as f64 / total as f64))
}

/// Mean seq-rep-n over a set, skipping undefined samples. Returns the mean
/// (if any sample is defined) and the number skipped.
pub fn mean_seq_rep_n(gen: &SampleSet, n: usize) -> Result<(Option<f64>, usize)> {
    let mut vals = Vec::new();
    let mut nulls = 0;
    for s in &gen.samples {
        match seq_rep_n(&s.continuation_ids, n)? {
            Some(v) => vals.push(v),
            None => nulls += 1,
        }
    }
    Ok(((!vals.is_empty()).then(|| ordered_mean(&vals)), nulls))
}

/// Token-weighted perplexity of the continuations under `scorer`, each
/// conditioned on its own prefix.
pub fn forward_ppl<M: LanguageModel + ?Sized>(scorer: &M, gen: &SampleSet) -> Result<f64> {
    let v = scorer.vocab_size();
    let parts: Vec<Result<(f64, usize)>> = par::map(&gen.samples, |s| {
        check_range(&s.prefix_ids, v)?;
        check_range(&s.continuation_ids, v)?;
        Ok((scorer.score(&s.continuation_ids, &s.prefix_ids)?, s.continuation_ids.len()))
    });
    let mut lp = 0.0;
    let mut n = 0;
    for p in parts {
        let (l, k) = p?;
        lp += l;
        n += k;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok((-lp / n as f64).exp())
}

fn check_range(ids: &[TokenId], v: usize) -> Result<()> {
    match ids.iter().find(|&&t| t as usize >= v) {
        Some(&id) => Err(Error::IdOutOfRange { id, size: v }),
        None => Ok(()),
    }
}

/// How [`reverse_ppl`] fits its scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgramTrainer {
    pub order: usize,
    /// Must be positive so held-out text always has finite perplexity.
    pub k_s: f64,
    pub vocab_size: usize,
}

impl Default for NgramTrainer {
    fn default() -> Self {
        Self { order: 3, k_s: 0.1, vocab_size: 0 }
    }
}

/// Fits a fresh n-gram model on the generated continuations and returns its
/// token-weighted perplexity on the human continuations.
pub fn reverse_ppl(gen: &SampleSet, human: &SampleSet, trainer: &NgramTrainer) -> Result<f64> {
    if !(trainer.k_s > 0.0) {
        return Err(Error::config("reverse perplexity needs a positive smoothing constant"));
    }
    if gen.is_empty() || human.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lm = NGramLm::fit(&gen.continuations(), trainer.order, trainer.k_s, Vocab::anonymous(trainer.vocab_size))?;
    forward_ppl(&lm, human)
}

/// Length-normalized log-probability: `ln p(sentence | context) / ((5 + |s|) / 6)^alpha`.
pub fn acceptability_penlp<M: LanguageModel + ?Sized>(
    scorer: &M,
    sentence: &[TokenId],
    context: &[TokenId],
    alpha: f64,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::config(format!("alpha must be >= 0, got {alpha}")));
    }
    if sentence.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(scorer.score(sentence, context)? / penlp_penalty(sentence.len(), alpha))
}

pub fn penlp_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

/// Batch-mode metric output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: Option<f64>,
    pub config: serde_json::Value,
    pub provenance: Option<Provenance>,
    pub n_samples: usize,
    pub nulls_excluded: usize,
}
