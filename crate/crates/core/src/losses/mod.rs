//! Training objectives for [`FeedForwardLm`] with analytic gradients.
//!
//! Every loss returns `(value, gradient)` where the gradient is a flat
//! vector aligned with [`FeedForwardLm::params`].

mod align;
mod train;

pub use align::{align_labels, read_label_file, LabeledWord, X_LABEL};
pub use train::{
    Adam, Batch, Objective, ObjectiveWeight, SeqUlConfig, StepReport, TrainConfig, TrainData,
    Trainer,
};

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{SentencePair, TokenId};
use crate::error::{Error, Result};
use crate::lm::{FeedForwardLm, Upstream};

/// Clamp applied to candidate probabilities inside `ln(1 - p)`.
pub const UL_EPSILON: f64 = 1e-12;

pub type LossAndGrad = (f64, Vec<f64>);

/// Per-position negative candidate sets for the unlikelihood loss.
///
/// `sets[i]` applies to position `start + i` of the scored sequence; only
/// those positions are averaged over.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NegativeCandidates {
    pub start: usize,
    pub sets: Vec<Vec<TokenId>>,
}

impl NegativeCandidates {
    /// Token-level candidates: every distinct earlier token, excluding the
    /// current target.
    pub fn previous_tokens(seq: &[TokenId]) -> Self {
        let mut seen: Vec<TokenId> = Vec::new();
        let mut sets = Vec::with_capacity(seq.len());
        for &x in seq {
            sets.push(seen.iter().copied().filter(|&c| c != x).collect());
            if !seen.contains(&x) {
                seen.push(x);
            }
        }
        Self { start: 0, sets }
    }

    pub fn positions(&self) -> Range<usize> {
        self.start..self.start + self.sets.len()
    }
}

/// Sequence-level candidates: position `t` is flagged with its own token when
/// the n-gram ending at `t` already occurred earlier in `continuation`.
pub fn ul_seq_candidates(continuation: &[TokenId], n: usize) -> Result<NegativeCandidates> {
    if n < 1 {
        return Err(Error::BadOrder(n));
    }
    let mut seen: HashMap<&[TokenId], ()> = HashMap::new();
    let sets = (0..continuation.len())
        .map(|t| {
            if t + 1 < n {
                return Vec::new();
            }
            let gram = &continuation[t + 1 - n..=t];
            if seen.insert(gram, ()).is_some() {
                vec![continuation[t]]
            } else {
                Vec::new()
            }
        })
        .collect();
    Ok(NegativeCandidates { start: 0, sets })
}

/// Sums per-position LM losses over `positions` of `ids`. `per_pos` gets the
/// position and the model's distribution there and returns the loss and
/// `d loss / d logits` (or `None` if the position contributes no gradient).
fn lm_positions<F>(
    model: &FeedForwardLm,
    ids: &[TokenId],
    positions: Range<usize>,
    grad: &mut [f64],
    scale: f64,
    mut per_pos: F,
) -> f64
where
    F: FnMut(usize, &[f64]) -> (f64, Option<Vec<f64>>),
{
    let mut total = 0.0;
    for t in positions {
        let hid = model.hidden(model.window(ids, t));
        let p = model.lm_probs(&hid);
        let (l, dz) = per_pos(t, &p);
        total += l;
        if let Some(mut dz) = dz {
            dz.iter_mut().for_each(|g| *g *= scale);
            model.backward(&hid, Upstream { lm: Some(&dz), ..Upstream::default() }, grad);
        }
    }
    total
}

fn ce_dz(p: &[f64], target: TokenId) -> Vec<f64> {
    let mut dz = p.to_vec();
    dz[target as usize] -= 1.0;
    dz
}

/// Mean next-token cross-entropy over every position of `seq`.
pub fn ce_loss(model: &FeedForwardLm, seq: &[TokenId]) -> Result<LossAndGrad> {
    if seq.is_empty() {
        return Err(Error::EmptyInput);
    }
    model.vocab().check(seq)?;
    let mut grad = vec![0.0; model.num_params()];
    let scale = 1.0 / seq.len() as f64;
    let total = lm_positions(model, seq, 0..seq.len(), &mut grad, scale, |t, p| {
        (-p[seq[t] as usize].ln(), Some(ce_dz(p, seq[t])))
    });
    Ok((total * scale, grad))
}

/// `-sum_c ln(1 - p(c | x_<t))` averaged over the candidate positions.
pub fn ul_token_loss(
    model: &FeedForwardLm,
    seq: &[TokenId],
    candidates: &NegativeCandidates,
) -> Result<LossAndGrad> {
    model.vocab().check(seq)?;
    let range = candidates.positions();
    if range.end > seq.len() {
        return Err(Error::config("candidate positions exceed sequence length"));
    }
    let mut grad = vec![0.0; model.num_params()];
    if range.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / range.len() as f64;
    let v = model.vocab().len();
    let total = lm_positions(model, seq, range, &mut grad, scale, |t, p| {
        let cands = &candidates.sets[t - candidates.start];
        if cands.is_empty() {
            return (0.0, None);
        }
        let mut loss = 0.0;
        let mut dz = vec![0.0; v];
        let mut wsum = 0.0;
        for &c in cands {
            let pc = p[c as usize];
            if pc > 1.0 - UL_EPSILON {
                loss -= UL_EPSILON.ln();
                continue;
            }
            loss -= (1.0 - pc).ln();
            let w = pc / (1.0 - pc);
            dz[c as usize] += w;
            wsum += w;
        }
        for (g, &pj) in dz.iter_mut().zip(p) {
            *g -= pj * wsum;
        }
        (loss, Some(dz))
    });
    Ok((total * scale, grad))
}

/// Perplexity of `pair.second` given `pair.first`, with its gradient.
fn pair_perplexity(model: &FeedForwardLm, pair: &SentencePair) -> Result<LossAndGrad> {
    if pair.second.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ids: Vec<TokenId> = pair.first.iter().chain(pair.second.iter()).copied().collect();
    model.vocab().check(&ids)?;
    let range = pair.first.len()..ids.len();
    let n = range.len() as f64;
    // First pass: d(mean NLL) with unit scale; rescaled by ppl afterwards.
    let mut grad = vec![0.0; model.num_params()];
    let nll = lm_positions(model, &ids, range, &mut grad, 1.0 / n, |t, p| {
        (-p[ids[t] as usize].ln(), Some(ce_dz(p, ids[t])))
    });
    let ppl = (nll / n).exp();
    grad.iter_mut().for_each(|g| *g *= ppl);
    Ok((ppl, grad))
}

/// `max(0, ppl(pos) - ppl(neg) + margin)`.
pub fn margin_rank_loss(
    model: &FeedForwardLm,
    pos: &SentencePair,
    neg: &SentencePair,
    margin: f64,
) -> Result<LossAndGrad> {
    if !(margin >= 0.0) {
        return Err(Error::config(format!("margin must be >= 0, got {margin}")));
    }
    let (pp, gp) = pair_perplexity(model, pos)?;
    let (pn, gn) = pair_perplexity(model, neg)?;
    let raw = pp - pn + margin;
    if raw <= 0.0 {
        return Ok((0.0, vec![0.0; model.num_params()]));
    }
    let grad = gp.iter().zip(&gn).map(|(a, b)| a - b).collect();
    Ok((raw, grad))
}

/// Hinge on precomputed perplexities.
pub fn margin_hinge(ppl_pos: f64, ppl_neg: f64, margin: f64) -> f64 {
    (ppl_pos - ppl_neg + margin).max(0.0)
}

/// Huber loss with unit threshold; returns `(loss, d loss / d pred)`.
pub fn smooth_l1_loss(pred: f64, target: f64) -> (f64, f64) {
    let x = pred - target;
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Smooth-L1 regression of per-token targets through the regression head.
/// The prediction for token `t` reads the window ending at `t` inclusive.
pub fn regression_loss(
    model: &FeedForwardLm,
    seq: &[TokenId],
    targets: &[Option<f64>],
) -> Result<LossAndGrad> {
    if targets.len() != seq.len() {
        return Err(Error::config("one regression target slot per token required"));
    }
    let mut grad = vec![0.0; model.num_params()];
    let supervised: Vec<usize> = (0..seq.len()).filter(|&t| targets[t].is_some()).collect();
    if supervised.is_empty() {
        return Err(Error::NoSupervision);
    }
    let scale = 1.0 / supervised.len() as f64;
    let mut total = 0.0;
    for t in supervised {
        let hid = model.hidden(model.window(seq, t + 1));
        let pred = model
            .regress(&hid)
            .ok_or_else(|| Error::config("model has no regression head"))?;
        let (l, g) = smooth_l1_loss(pred, targets[t].expect("filtered"));
        total += l;
        model.backward(&hid, Upstream { reg: g * scale, ..Upstream::default() }, &mut grad);
    }
    Ok((total * scale, grad))
}

/// Mean cross-entropy of classification head `head` over labeled positions;
/// `None` labels (including the X label) are masked out.
pub fn classification_loss(
    model: &FeedForwardLm,
    head: usize,
    seq: &[TokenId],
    labels: &[Option<usize>],
) -> Result<LossAndGrad> {
    if labels.len() != seq.len() {
        return Err(Error::config("one label slot per token required"));
    }
    model.vocab().check(seq)?;
    let n_labels = *model
        .dims()
        .class_heads
        .get(head)
        .ok_or_else(|| Error::config(format!("model has no classification head {head}")))?;
    let supervised: Vec<(usize, usize)> =
        labels.iter().enumerate().filter_map(|(t, l)| l.map(|l| (t, l))).collect();
    if supervised.is_empty() {
        return Err(Error::NoSupervision);
    }
    if let Some(&(_, l)) = supervised.iter().find(|&&(_, l)| l >= n_labels) {
        return Err(Error::config(format!("label {l} out of range for head with {n_labels} labels")));
    }
    let mut grad = vec![0.0; model.num_params()];
    let scale = 1.0 / supervised.len() as f64;
    let mut total = 0.0;
    for (t, label) in supervised {
        let hid = model.hidden(model.window(seq, t + 1));
        let p = model.class_probs(head, &hid).expect("head checked");
        total -= p[label].ln();
        let mut dz = p;
        dz[label] -= 1.0;
        dz.iter_mut().for_each(|g| *g *= scale);
        model.backward(&hid, Upstream { class: Some((head, &dz)), ..Upstream::default() }, &mut grad);
    }
    Ok((total * scale, grad))
}

/// Step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares the analytic gradient of `loss` against central finite
/// differences on every parameter. Returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(model: &FeedForwardLm, loss: F) -> Result<f64>
where
    F: Fn(&FeedForwardLm) -> Result<LossAndGrad>,
{
    let (_, analytic) = loss(model)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.num_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let (up, _) = loss(&probe)?;
        probe.params_mut()[i] = orig - FD_STEP;
        let (down, _) = loss(&probe)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
