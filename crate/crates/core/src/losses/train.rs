use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    ce_loss, classification_loss, margin_rank_loss, regression_loss, ul_seq_candidates,
    ul_token_loss, LossAndGrad, NegativeCandidates,
};
use crate::corpus::{SentencePair, TokenId, TokenSequence};
use crate::decode::{generate, DecoderConfig, Strategy};
use crate::error::{Error, Result};
use crate::lm::FeedForwardLm;
use crate::par;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Next-token cross-entropy.
    Mle,
    /// Unlikelihood, token- or sequence-level per [`SeqUlConfig::mix_prob`].
    Unlikelihood,
    /// Perplexity margin ranking over sentence pairs.
    MarginRank,
    /// Smooth-L1 regression of TF-IDF targets.
    Tfidf,
    /// Cross-entropy of a token classification head.
    Classification { head: usize },
}

impl Objective {
    fn key(&self) -> String {
        match self {
            Objective::Mle => "mle".into(),
            Objective::Unlikelihood => "ul".into(),
            Objective::MarginRank => "margin_rank".into(),
            Objective::Tfidf => "tfidf".into(),
            Objective::Classification { head } => format!("class{head}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeight {
    pub kind: Objective,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqUlConfig {
    /// Probability of taking the sequence-level branch on a step.
    pub mix_prob: f64,
    pub prefix_len: usize,
    pub gen_len: usize,
    /// n-gram order whose repeats become negative candidates.
    pub ngram: usize,
}

impl Default for SeqUlConfig {
    fn default() -> Self {
        Self { mix_prob: 0.5, prefix_len: 50, gen_len: 100, ngram: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub objectives: Vec<ObjectiveWeight>,
    pub seq_ul: SeqUlConfig,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch_size: 16,
            learning_rate: 1e-3,
            objectives: vec![ObjectiveWeight { kind: Objective::Mle, weight: 1.0 }],
            seq_ul: SeqUlConfig::default(),
            margin: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.seq_ul.mix_prob) {
            return bad(format!("mix_prob must be in [0,1], got {}", self.seq_ul.mix_prob));
        }
        if self.seq_ul.ngram < 1 || self.seq_ul.gen_len < 1 {
            return bad("seq_ul.ngram and seq_ul.gen_len must be >= 1".into());
        }
        if self.objectives.iter().any(|o| !(o.weight >= 0.0)) {
            return bad("objective weights must be >= 0".into());
        }
        if !self.objectives.iter().any(|o| o.weight > 0.0) {
            return bad("at least one objective needs a positive weight".into());
        }
        if !(self.margin >= 0.0) {
            return bad(format!("margin must be >= 0, got {}", self.margin));
        }
        Ok(())
    }

    fn weight(&self, kind: Objective) -> f64 {
        self.objectives.iter().filter(|o| o.kind == kind).map(|o| o.weight).sum()
    }
}

/// Everything a training run can draw supervision from. Auxiliary sets are
/// optional; an objective whose data is missing is a configuration error.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub sequences: Vec<TokenSequence>,
    /// Per-token regression targets, aligned with `sequences`.
    pub tfidf: Option<Vec<Vec<Option<f64>>>>,
    /// (positive, negative) pairs for margin ranking.
    pub pairs: Vec<(SentencePair, SentencePair)>,
    /// Per classification head: sequences with per-token labels.
    pub labeled: Vec<Vec<(TokenSequence, Vec<Option<usize>>)>>,
}

/// Indices into [`TrainData`] making up one optimizer step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Batch {
    pub sequences: Vec<usize>,
    pub pairs: Vec<usize>,
    pub labeled: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub total: f64,
    pub losses: BTreeMap<String, f64>,
    /// Whether the unlikelihood branch was sequence-level this step.
    pub seq_level: Option<bool>,
}

/// Adam with the usual defaults for everything but the learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Mean of per-item `(loss, grad)` results, summed in input order so the
/// result does not depend on how the items were scheduled.
fn mean_in_order(results: Vec<Result<LossAndGrad>>, n_params: usize) -> Result<LossAndGrad> {
    let n = results.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for r in results {
        let (l, g) = r?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Owns a model plus optimizer and RNG state across steps.
pub struct Trainer {
    pub model: FeedForwardLm,
    pub cfg: TrainConfig,
    adam: Adam,
    rng: SplitMix64,
}

impl Trainer {
    pub fn new(model: FeedForwardLm, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = Adam::new(model.num_params(), cfg.learning_rate);
        let rng = SplitMix64::new(cfg.seed);
        Ok(Self { model, cfg, adam, rng })
    }

    /// Sequence-level unlikelihood on one training sequence: greedily
    /// continue its prefix, then penalize repeated n-grams of the output.
    fn seq_ul_item(model: &FeedForwardLm, seq: &[TokenId], cfg: &SeqUlConfig) -> Result<LossAndGrad> {
        let plen = cfg.prefix_len.clamp(1, seq.len());
        let prefix = &seq[..plen];
        let dec = DecoderConfig::new(Strategy::Greedy, 0, cfg.gen_len);
        let cont = generate(model, prefix, &dec)?;
        let mut cands = ul_seq_candidates(&cont, cfg.ngram)?;
        cands.start = plen;
        let full: Vec<TokenId> = prefix.iter().chain(cont.iter()).copied().collect();
        ul_token_loss(model, &full, &cands)
    }

    /// One optimizer step: weighted sum of every active objective's batch
    /// mean, then an Adam update.
    pub fn step(&mut self, data: &TrainData, batch: &Batch) -> Result<StepReport> {
        let model = &self.model;
        let n = model.num_params();
        let seqs: Vec<&TokenSequence> = batch.sequences.iter().map(|&i| &data.sequences[i]).collect();
        let mut total_grad = vec![0.0; n];
        let mut report = StepReport { total: 0.0, losses: BTreeMap::new(), seq_level: None };
        let mut kinds: Vec<Objective> = self
            .cfg
            .objectives
            .iter()
            .filter(|o| o.weight > 0.0)
            .map(|o| o.kind)
            .collect();
        kinds.sort();
        kinds.dedup();
        for kind in kinds {
            let weight = self.cfg.weight(kind);
            let (loss, grad) = match kind {
                Objective::Mle => {
                    mean_in_order(par::map(&seqs, |s| ce_loss(model, s)), n)?
                }
                Objective::Unlikelihood => {
                    let seq_level = self.rng.bernoulli(self.cfg.seq_ul.mix_prob);
                    report.seq_level = Some(seq_level);
                    let sc = self.cfg.seq_ul;
                    if seq_level {
                        mean_in_order(par::map(&seqs, |s| Self::seq_ul_item(model, s, &sc)), n)?
                    } else {
                        mean_in_order(
                            par::map(&seqs, |s| {
                                ul_token_loss(model, s, &NegativeCandidates::previous_tokens(s))
                            }),
                            n,
                        )?
                    }
                }
                Objective::MarginRank => {
                    if batch.pairs.is_empty() {
                        return Err(Error::config("margin ranking needs sentence pairs"));
                    }
                    let margin = self.cfg.margin;
                    mean_in_order(
                        par::map(&batch.pairs, |&i| {
                            let (pos, neg) = &data.pairs[i];
                            margin_rank_loss(model, pos, neg, margin)
                        }),
                        n,
                    )?
                }
                Objective::Tfidf => {
                    let targets = data
                        .tfidf
                        .as_ref()
                        .ok_or_else(|| Error::config("tfidf objective needs tfidf targets"))?;
                    mean_in_order(
                        par::map(&batch.sequences, |&i| {
                            regression_loss(model, &data.sequences[i], &targets[i])
                        }),
                        n,
                    )?
                }
                Objective::Classification { head } => {
                    let items = batch
                        .labeled
                        .get(head)
                        .filter(|v| !v.is_empty())
                        .ok_or_else(|| Error::config(format!("no labeled data for head {head}")))?;
                    mean_in_order(
                        par::map(items, |&i| {
                            let (seq, labels) = &data.labeled[head][i];
                            classification_loss(model, head, seq, labels)
                        }),
                        n,
                    )?
                }
            };
            report.total += weight * loss;
            report.losses.insert(kind.key(), loss);
            for (a, b) in total_grad.iter_mut().zip(&grad) {
                *a += weight * b;
            }
        }
        self.adam.update(self.model.params_mut(), &total_grad);
        Ok(report)
    }

    /// Batches for one epoch: sequences shuffled under the trainer's RNG,
    /// auxiliary items cycled in order alongside.
    pub fn epoch_batches(&mut self, data: &TrainData, epoch: usize) -> Vec<Batch> {
        let bs = self.cfg.batch_size;
        let mut order: Vec<usize> = (0..data.sequences.len()).collect();
        self.rng.shuffle(&mut order);
        let steps = order.len().div_ceil(bs).max(1);
        let cycle = |len: usize, step: usize| -> Vec<usize> {
            if len == 0 {
                return Vec::new();
            }
            let base = (epoch * steps + step) * bs;
            (0..bs.min(len)).map(|j| (base + j) % len).collect()
        };
        (0..steps)
            .map(|s| Batch {
                sequences: order.iter().skip(s * bs).take(bs).copied().collect(),
                pairs: cycle(data.pairs.len(), s),
                labeled: data.labeled.iter().map(|l| cycle(l.len(), s)).collect(),
            })
            .collect()
    }

    /// Runs `cfg.epochs` epochs; returns one report per step.
    pub fn fit(&mut self, data: &TrainData) -> Result<Vec<StepReport>> {
        if data.sequences.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut reports = Vec::new();
        for epoch in 0..self.cfg.epochs {
            for batch in self.epoch_batches(data, epoch) {
                reports.push(self.step(data, &batch)?);
            }
        }
        Ok(reports)
    }

    pub fn into_model(self) -> FeedForwardLm {
        self.model
    }
}
