//! Decoding strategies over any [`LanguageModel`].
//!
//! Every stochastic choice consumes exactly one uniform variate from a
//! [`SplitMix64`] seeded by the config, so a `(model, prefix, config)` triple
//! always produces the same continuation.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::rng::SplitMix64;

/// Distribution reshaping applied before sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum Truncation {
    TopK(usize),
    TopP(f64),
    Temperature(f64),
}

impl Truncation {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        match *self {
            Truncation::TopK(k) if k < 1 || k > vocab_size => {
                Err(Error::config(format!("top-k needs 1 <= k <= {vocab_size}, got {k}")))
            }
            Truncation::TopP(p) if !(p > 0.0 && p <= 1.0) => {
                Err(Error::config(format!("top-p needs 0 < p <= 1, got {p}")))
            }
            Truncation::Temperature(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::config(format!("temperature must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Token ids ordered by probability descending, ties by lower id.
fn ranked(dist: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx
}

fn softmax_of_logs(lp: &[f64]) -> Vec<f64> {
    let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = lp.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Keeps the ranked prefix `keep` and renormalizes. Returns the input
/// unchanged when nothing with positive mass is dropped.
fn keep_prefix(dist: &[f64], order: &[usize], keep: usize) -> Vec<f64> {
    if order[keep..].iter().all(|&i| dist[i] == 0.0) {
        return dist.to_vec();
    }
    let mass: f64 = order[..keep].iter().map(|&i| dist[i]).sum();
    let mut out = vec![0.0; dist.len()];
    for &i in &order[..keep] {
        out[i] = dist[i] / mass;
    }
    out
}

pub fn truncate_renormalize(dist: &[f64], mode: Truncation) -> Vec<f64> {
    match mode {
        Truncation::TopK(k) => {
            if k >= dist.len() {
                return dist.to_vec();
            }
            keep_prefix(dist, &ranked(dist), k)
        }
        Truncation::TopP(p) => {
            let order = ranked(dist);
            let mut cum = 0.0;
            let mut keep = order.len();
            for (n, &i) in order.iter().enumerate() {
                cum += dist[i];
                if cum >= p {
                    keep = n + 1;
                    break;
                }
            }
            keep_prefix(dist, &order, keep)
        }
        Truncation::Temperature(t) => {
            if t == 1.0 {
                return dist.to_vec();
            }
            let lp: Vec<f64> = dist.iter().map(|&p| p.ln() / t).collect();
            softmax_of_logs(&lp)
        }
    }
}

/// Discounts previously generated tokens in the log domain: their
/// log-probability is multiplied by `theta` (>= 1, so they become less
/// likely), then the result is renormalized.
pub fn penalize(dist: &[f64], generated: &[bool], theta: f64) -> Vec<f64> {
    if theta == 1.0 || !generated.iter().any(|&g| g) {
        return dist.to_vec();
    }
    let lp: Vec<f64> = dist
        .iter()
        .zip(generated)
        .map(|(&p, &g)| if g { theta * p.ln() } else { p.ln() })
        .collect();
    softmax_of_logs(&lp)
}

/// Inverse-CDF draw over the ranked tokens using one uniform variate.
pub fn sample(dist: &[f64], rng: &mut SplitMix64) -> TokenId {
    sample_with(dist, rng.next_f64())
}

pub(crate) fn sample_with(dist: &[f64], u: f64) -> TokenId {
    let order = ranked(dist);
    let mut cum = 0.0;
    let mut last = order[0];
    for &i in &order {
        if dist[i] <= 0.0 {
            break;
        }
        cum += dist[i];
        last = i;
        if u < cum {
            return i as TokenId;
        }
    }
    last as TokenId
}

/// Highest-probability token, ties broken by lower id.
pub fn argmax(dist: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best as TokenId
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Greedy,
    Beam { width: usize },
    Temperature { t: f64 },
    TopK { k: usize },
    TopP { p: f64 },
    /// Near-greedy decoding with repeated tokens discounted by `theta`;
    /// with `temperature` set, samples from the tempered penalized
    /// distribution instead of taking the argmax.
    Penalized { theta: f64, temperature: Option<f64> },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam { .. } => "beam",
            Strategy::Temperature { .. } => "temp",
            Strategy::TopK { .. } => "topk",
            Strategy::TopP { .. } => "topp",
            Strategy::Penalized { .. } => "penalized",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match *self {
            Strategy::Greedy => None,
            Strategy::Beam { width } => Some(width as f64),
            Strategy::Temperature { t } => Some(t),
            Strategy::TopK { k } => Some(k as f64),
            Strategy::TopP { p } => Some(p),
            Strategy::Penalized { theta, .. } => Some(theta),
        }
    }

    /// Builds a strategy from its CLI name and single parameter.
    pub fn from_parts(name: &str, param: Option<f64>) -> Result<Self> {
        let need = |what: &str| {
            param.ok_or_else(|| Error::config(format!("strategy {name} needs a {what} parameter")))
        };
        let int = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("strategy {name} needs a positive integer, got {v}")))
            }
        };
        let s = match name {
            "greedy" => match param {
                None => Strategy::Greedy,
                Some(_) => return Err(Error::config("greedy takes no parameter")),
            },
            "beam" => Strategy::Beam { width: int(need("b")?)? },
            "temp" | "temperature" => Strategy::Temperature { t: need("t")? },
            "topk" => Strategy::TopK { k: int(need("k")?)? },
            "topp" => Strategy::TopP { p: need("p")? },
            "penalized" => Strategy::Penalized { theta: need("theta")?, temperature: None },
            other => return Err(Error::config(format!("unknown strategy {other:?}"))),
        };
        Ok(s)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        match *self {
            Strategy::Greedy => Ok(()),
            Strategy::Beam { width } if width < 1 => Err(Error::config("beam width must be >= 1")),
            Strategy::Beam { .. } => Ok(()),
            Strategy::Temperature { t } => Truncation::Temperature(t).validate(vocab_size),
            Strategy::TopK { k } => Truncation::TopK(k).validate(vocab_size),
            Strategy::TopP { p } => Truncation::TopP(p).validate(vocab_size),
            Strategy::Penalized { theta, temperature } => {
                if !(theta >= 1.0 && theta.is_finite()) {
                    return Err(Error::config(format!("penalty theta must be >= 1, got {theta}")));
                }
                match temperature {
                    Some(t) => Truncation::Temperature(t).validate(vocab_size),
                    None => Ok(()),
                }
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}:{p}", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub strategy: Strategy,
    pub seed: u64,
    pub max_len: usize,
}

impl DecoderConfig {
    pub fn new(strategy: Strategy, seed: u64, max_len: usize) -> Self {
        Self { strategy, seed, max_len }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.max_len < 1 {
            return Err(Error::config("max_len must be >= 1"));
        }
        self.strategy.validate(vocab_size)
    }
}

/// Generates exactly `cfg.max_len` tokens continuing `prefix`.
pub fn generate<M: LanguageModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    cfg: &DecoderConfig,
) -> Result<TokenSequence> {
    let v = model.vocab_size();
    cfg.validate(v)?;
    if prefix.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Strategy::Beam { width } = cfg.strategy {
        return beam_search(model, prefix, width, cfg.max_len);
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut buf = prefix.to_vec();
    let mut emitted = vec![false; v];
    for _ in 0..cfg.max_len {
        let dist = model.next_dist(&buf)?;
        let tok = match cfg.strategy {
            Strategy::Greedy => argmax(&dist),
            Strategy::Temperature { t } => {
                sample(&truncate_renormalize(&dist, Truncation::Temperature(t)), &mut rng)
            }
            Strategy::TopK { k } => sample(&truncate_renormalize(&dist, Truncation::TopK(k)), &mut rng),
            Strategy::TopP { p } => sample(&truncate_renormalize(&dist, Truncation::TopP(p)), &mut rng),
            Strategy::Penalized { theta, temperature } => {
                let pen = penalize(&dist, &emitted, theta);
                match temperature {
                    None => argmax(&pen),
                    Some(t) => sample(&truncate_renormalize(&pen, Truncation::Temperature(t)), &mut rng),
                }
            }
            Strategy::Beam { .. } => unreachable!("handled above"),
        };
        emitted[tok as usize] = true;
        buf.push(tok);
    }
    Ok(TokenSequence(buf.split_off(prefix.len())))
}

/// Width-`width` search over summed log-probabilities. Hypotheses with equal
/// scores are ordered by their token sequences, lexicographically.
fn beam_search<M: LanguageModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    width: usize,
    max_len: usize,
) -> Result<TokenSequence> {
    let mut beams: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut buf = prefix.to_vec();
    for _ in 0..max_len {
        // (score, beam index, token)
        let mut cands: Vec<(f64, usize, TokenId)> = Vec::new();
        for (bi, (toks, score)) in beams.iter().enumerate() {
            buf.truncate(prefix.len());
            buf.extend_from_slice(toks);
            let dist = model.next_dist(&buf)?;
            for (w, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    cands.push((score + p.ln(), bi, w as TokenId));
                }
            }
        }
        let cmp = |a: &(f64, usize, TokenId), b: &(f64, usize, TokenId)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| beams[a.1].0.cmp(&beams[b.1].0))
                .then(a.2.cmp(&b.2))
        };
        cands.sort_by(cmp);
        cands.truncate(width);
        beams = cands
            .into_iter()
            .map(|(s, bi, w)| {
                let mut toks = beams[bi].0.clone();
                toks.push(w);
                (toks, s)
            })
            .collect();
    }
    Ok(TokenSequence(beams.swap_remove(0).0))
}
