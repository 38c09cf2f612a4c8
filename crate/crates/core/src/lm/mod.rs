//! Language-model contract, built-in backends and perplexity tooling.

mod external;
mod ffn;
mod file;
mod ngram;

pub use external::{serve, ExternalLm};
pub use ffn::{FeedForwardLm, FfnDims, Hidden, Upstream};
pub use file::{load_model, save_model, AnyModel};
pub use ngram::NGramLm;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::decode::{truncate_renormalize, Truncation};
use crate::error::{Error, Result};

/// Anything that can produce a next-token distribution.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Probability of every vocabulary entry following `context`. Entries are
    /// non-negative and sum to 1.
    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>>;

    /// Sum of natural-log probabilities of `seq` continuing `context`.
    fn score(&self, seq: &[TokenId], context: &[TokenId]) -> Result<f64> {
        let mut buf = context.to_vec();
        buf.reserve(seq.len());
        let mut total = 0.0;
        for &tok in seq {
            let dist = self.next_dist(&buf)?;
            total += dist[tok as usize].ln();
            buf.push(tok);
        }
        Ok(total)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_dist(context)
    }

    fn score(&self, seq: &[TokenId], context: &[TokenId]) -> Result<f64> {
        (**self).score(seq, context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_dist(context)
    }

    fn score(&self, seq: &[TokenId], context: &[TokenId]) -> Result<f64> {
        (**self).score(seq, context)
    }
}

/// Opens a model from a spec string:
///
/// * `tcp://HOST:PORT?vocab=N` connects to a running model server,
/// * `exec:N:PROGRAM [ARGS..]` spawns one speaking the protocol on stdio,
/// * anything else is read as a model file.
pub fn open_model(spec: &str) -> Result<Arc<dyn LanguageModel>> {
    let bad = || Error::config(format!("malformed model spec {spec:?}"));
    if let Some(rest) = spec.strip_prefix("tcp://") {
        let (addr, query) = rest.split_once('?').ok_or_else(bad)?;
        let n = query.strip_prefix("vocab=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        return Ok(Arc::new(ExternalLm::connect_tcp(addr, n)?));
    }
    if let Some(rest) = spec.strip_prefix("exec:") {
        let (n, cmd) = rest.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        let mut words = cmd.split_whitespace().map(str::to_string);
        let program = words.next().ok_or_else(bad)?;
        let args: Vec<String> = words.collect();
        return Ok(Arc::new(ExternalLm::spawn(&program, &args, n)?));
    }
    Ok(Arc::new(load_model(Path::new(spec))?))
}

/// Uniform distribution over a fixed vocabulary size.
#[derive(Debug, Clone, Copy)]
pub struct UniformLm(pub usize);

impl LanguageModel for UniformLm {
    fn vocab_size(&self) -> usize {
        self.0
    }

    fn next_dist(&self, _context: &[TokenId]) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.0 as f64; self.0])
    }
}

/// `exp(-score(seq | context) / len(seq))`. Only `seq` tokens are counted;
/// a zero-probability token gives `+inf`.
pub fn perplexity<M: LanguageModel + ?Sized>(
    model: &M,
    seq: &[TokenId],
    context: &[TokenId],
) -> Result<f64> {
    if seq.is_empty() {
        return Err(crate::Error::EmptyInput);
    }
    let lp = model.score(seq, context)?;
    Ok((-lp / seq.len() as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub token: TokenId,
    pub prob: f64,
    pub truncated_prob: f64,
}

/// Per-position probability of each token of `seq` (conditioned on its
/// prefix), raw and after truncated renormalization.
pub fn token_prob_trace<M: LanguageModel + ?Sized>(
    model: &M,
    seq: &[TokenId],
    truncation: Option<Truncation>,
) -> Result<Vec<TraceStep>> {
    if let Some(t) = truncation {
        t.validate(model.vocab_size())?;
    }
    (0..seq.len())
        .map(|t| {
            let dist = model.next_dist(&seq[..t])?;
            let tok = seq[t];
            let prob = dist[tok as usize];
            let truncated_prob = match truncation {
                None => prob,
                Some(tr) => truncate_renormalize(&dist, tr)[tok as usize],
            };
            Ok(TraceStep { token: tok, prob, truncated_prob })
        })
        .collect()
}
