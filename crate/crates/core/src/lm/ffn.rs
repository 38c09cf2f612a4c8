use serde::{Deserialize, Serialize};

use super::LanguageModel;
use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Shape of a [`FeedForwardLm`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FfnDims {
    /// Number of preceding tokens read.
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Adds a scalar regression head on the hidden layer.
    #[serde(default)]
    pub regression: bool,
    /// One classification head per entry, with that many labels.
    #[serde(default)]
    pub class_heads: Vec<usize>,
}

impl Default for FfnDims {
    fn default() -> Self {
        Self { context: 8, embed: 32, hidden: 64, regression: false, class_heads: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    emb: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    reg: Option<usize>,
    heads: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new(vocab: usize, d: &FfnDims) -> Self {
        let (c, e, h) = (d.context, d.embed, d.hidden);
        let emb = 0;
        let w1 = emb + (vocab + 1) * e;
        let b1 = w1 + h * c * e;
        let w2 = b1 + h;
        let b2 = w2 + vocab * h;
        let mut next = b2 + vocab;
        let reg = d.regression.then(|| {
            let at = next;
            next += h + 1;
            at
        });
        let heads = d
            .class_heads
            .iter()
            .map(|&l| {
                let at = next;
                next += (h + 1) * l;
                at
            })
            .collect();
        Self { emb, w1, b1, w2, b2, reg, heads, len: next }
    }

    /// `(offset, length)` of every weight matrix; everything else is a bias.
    fn weight_spans(&self, vocab: usize, d: &FfnDims) -> Vec<(usize, usize)> {
        let h = d.hidden;
        let mut spans = vec![
            (self.emb, (vocab + 1) * d.embed),
            (self.w1, h * d.context * d.embed),
            (self.w2, vocab * h),
        ];
        if let Some(r) = self.reg {
            spans.push((r, h));
        }
        for (&at, &l) in self.heads.iter().zip(&d.class_heads) {
            spans.push((at, l * h));
        }
        spans
    }
}

/// Classic window-based neural language model: embed the previous
/// `context` tokens, concatenate, one `tanh` hidden layer, softmax output.
///
/// Short contexts are left-padded with a reserved pad row of the embedding
/// table (row `vocab_size`), trained like any other row. Optional heads read
/// the same hidden layer: a scalar regression head and any number of
/// classification heads.
///
/// All parameters live in one flat vector so optimizers and finite-difference
/// checks can treat the model as a point in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardLm {
    vocab: Vocab,
    dims: FfnDims,
    layout: Layout,
    params: Vec<f64>,
}

/// Cached forward activations for one window.
#[derive(Debug, Clone)]
pub struct Hidden {
    rows: Vec<usize>,
    x: Vec<f64>,
    a: Vec<f64>,
}

/// Loss gradients arriving at the network outputs for one window.
#[derive(Debug, Clone, Copy, Default)]
pub struct Upstream<'a> {
    /// d loss / d output logits.
    pub lm: Option<&'a [f64]>,
    /// d loss / d regression output.
    pub reg: f64,
    /// (head index, d loss / d head logits).
    pub class: Option<(usize, &'a [f64])>,
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

impl FeedForwardLm {
    /// Weights uniform in `[-0.1, 0.1]` drawn under `seed`, biases zero.
    pub fn new(vocab: Vocab, dims: FfnDims, seed: u64) -> Result<Self> {
        if dims.context < 1 || dims.embed < 1 || dims.hidden < 1 {
            return Err(Error::config(format!(
                "context, embed and hidden sizes must be >= 1, got {dims:?}"
            )));
        }
        if dims.class_heads.iter().any(|&l| l < 1) {
            return Err(Error::config("classification heads need at least one label"));
        }
        if vocab.is_empty() {
            return Err(Error::EmptyInput);
        }
        let layout = Layout::new(vocab.len(), &dims);
        let mut params = vec![0.0; layout.len];
        let mut rng = SplitMix64::new(seed);
        for (at, len) in layout.weight_spans(vocab.len(), &dims) {
            for p in &mut params[at..at + len] {
                *p = rng.uniform(-0.1, 0.1);
            }
        }
        Ok(Self { vocab, dims, layout, params })
    }

    pub(crate) fn from_params(vocab: Vocab, dims: FfnDims, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(vocab.len(), &dims);
        if params.len() != layout.len {
            return Err(Error::format(format!(
                "expected {} parameters, found {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Self { vocab, dims, layout, params })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dims(&self) -> &FfnDims {
        &self.dims
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn pad_row(&self) -> usize {
        self.vocab.len()
    }

    /// Embedding rows for the `context` tokens before position `end` of
    /// `ids`, left-padded.
    pub fn window(&self, ids: &[TokenId], end: usize) -> Vec<usize> {
        let c = self.dims.context;
        (0..c)
            .map(|i| {
                let pos = end as isize - c as isize + i as isize;
                if pos < 0 {
                    self.pad_row()
                } else {
                    ids[pos as usize] as usize
                }
            })
            .collect()
    }

    pub fn hidden(&self, rows: Vec<usize>) -> Hidden {
        let (e, h) = (self.dims.embed, self.dims.hidden);
        let ce = rows.len() * e;
        let mut x = Vec::with_capacity(ce);
        for &r in &rows {
            let at = self.layout.emb + r * e;
            x.extend_from_slice(&self.params[at..at + e]);
        }
        let w1 = &self.params[self.layout.w1..self.layout.w1 + h * ce];
        let b1 = &self.params[self.layout.b1..self.layout.b1 + h];
        let a = (0..h)
            .map(|j| {
                let row = &w1[j * ce..(j + 1) * ce];
                (b1[j] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        Hidden { rows, x, a }
    }

    fn affine(&self, w_at: usize, b_at: usize, out: usize, a: &[f64]) -> Vec<f64> {
        let h = self.dims.hidden;
        (0..out)
            .map(|k| {
                let row = &self.params[w_at + k * h..w_at + (k + 1) * h];
                self.params[b_at + k] + row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn lm_probs(&self, hid: &Hidden) -> Vec<f64> {
        let mut z = self.affine(self.layout.w2, self.layout.b2, self.vocab.len(), &hid.a);
        softmax_in_place(&mut z);
        z
    }

    /// Output of the regression head, if present.
    pub fn regress(&self, hid: &Hidden) -> Option<f64> {
        let at = self.layout.reg?;
        let h = self.dims.hidden;
        Some(self.affine(at, at + h, 1, &hid.a)[0])
    }

    pub fn class_probs(&self, head: usize, hid: &Hidden) -> Option<Vec<f64>> {
        let at = *self.layout.heads.get(head)?;
        let l = self.dims.class_heads[head];
        let mut z = self.affine(at, at + l * self.dims.hidden, l, &hid.a);
        softmax_in_place(&mut z);
        Some(z)
    }

    /// Accumulates parameter gradients for one window into `grad`.
    pub fn backward(&self, hid: &Hidden, up: Upstream<'_>, grad: &mut [f64]) {
        let (e, h) = (self.dims.embed, self.dims.hidden);
        let ce = hid.x.len();
        let mut da = vec![0.0; h];
        let mut head = |w_at: usize, b_at: usize, dz: &[f64], grad: &mut [f64]| {
            for (k, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[b_at + k] += g;
                let w = w_at + k * h;
                for j in 0..h {
                    grad[w + j] += g * hid.a[j];
                    da[j] += g * self.params[w + j];
                }
            }
        };
        if let Some(dz) = up.lm {
            head(self.layout.w2, self.layout.b2, dz, grad);
        }
        if let (Some(at), true) = (self.layout.reg, up.reg != 0.0) {
            head(at, at + h, &[up.reg], grad);
        }
        if let Some((k, dz)) = up.class {
            let at = self.layout.heads[k];
            head(at, at + self.dims.class_heads[k] * h, dz, grad);
        }
        let mut dx = vec![0.0; ce];
        for j in 0..h {
            let dpre = da[j] * (1.0 - hid.a[j] * hid.a[j]);
            if dpre == 0.0 {
                continue;
            }
            grad[self.layout.b1 + j] += dpre;
            let w = self.layout.w1 + j * ce;
            for i in 0..ce {
                grad[w + i] += dpre * hid.x[i];
                dx[i] += dpre * self.params[w + i];
            }
        }
        for (slot, &r) in hid.rows.iter().enumerate() {
            let at = self.layout.emb + r * e;
            for i in 0..e {
                grad[at + i] += dx[slot * e + i];
            }
        }
    }
}

impl LanguageModel for FeedForwardLm {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_dist(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        self.vocab.check(context)?;
        let hid = self.hidden(self.window(context, context.len()));
        Ok(self.lm_probs(&hid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(v: usize, dims: FfnDims, seed: u64) -> FeedForwardLm {
        FeedForwardLm::new(Vocab::anonymous(v), dims, seed).unwrap()
    }

    #[test]
    fn deterministic_init() {
        let a = model(11, FfnDims::default(), 5);
        let b = model(11, FfnDims::default(), 5);
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), model(11, FfnDims::default(), 6).params());
        assert!(a.params().iter().all(|p| p.abs() <= 0.1));
    }

    #[test]
    fn biases_start_at_zero() {
        let m = model(9, FfnDims::default(), 1);
        let l = &m.layout;
        assert!(m.params[l.b1..l.b1 + 64].iter().all(|&b| b == 0.0));
        assert!(m.params[l.b2..l.b2 + 9].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn parameter_count_formula() {
        let v = 50;
        let m = model(v, FfnDims::default(), 0);
        // (V+1)*d embeddings (pad row included) + (c*d+1)*h + (h+1)*V.
        assert_eq!(m.num_params(), (v + 1) * 32 + (8 * 32 + 1) * 64 + (64 + 1) * v);
        let dims = FfnDims { regression: true, class_heads: vec![3, 5], ..FfnDims::default() };
        let m = model(v, dims, 0);
        assert_eq!(
            m.num_params(),
            (v + 1) * 32 + (8 * 32 + 1) * 64 + (64 + 1) * v + 65 + 65 * 3 + 65 * 5
        );
    }

    #[test]
    fn rejects_bad_dims() {
        let dims = FfnDims { hidden: 0, ..FfnDims::default() };
        assert!(FeedForwardLm::new(Vocab::anonymous(3), dims, 0).unwrap_err().is_config());
    }

    #[test]
    fn window_padding() {
        let m = model(5, FfnDims { context: 3, embed: 2, hidden: 2, ..FfnDims::default() }, 0);
        assert_eq!(m.window(&[1, 2, 3, 4], 2), vec![5, 1, 2]);
        assert_eq!(m.window(&[1, 2, 3, 4], 4), vec![2, 3, 4]);
        assert_eq!(m.window(&[], 0), vec![5, 5, 5]);
    }

    proptest! {
        #[test]
        fn forward_is_distribution(seed in 0u64..1000, ctx in prop::collection::vec(0u32..7, 0..12)) {
            let m = model(7, FfnDims { context: 3, embed: 4, hidden: 5, ..FfnDims::default() }, seed);
            let d = m.next_dist(&ctx).unwrap();
            prop_assert!(d.iter().all(|&p| p >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn score_is_decomposable(seed in 0u64..100, seq in prop::collection::vec(0u32..7, 1..10), ctx in prop::collection::vec(0u32..7, 0..4)) {
            let m = model(7, FfnDims { context: 2, embed: 3, hidden: 4, ..FfnDims::default() }, seed);
            let whole = m.score(&seq, &ctx).unwrap();
            let mut buf = ctx.clone();
            let mut parts = 0.0;
            for &t in &seq {
                parts += m.score(&[t], &buf).unwrap();
                buf.push(t);
            }
            prop_assert!((whole - parts).abs() < 1e-9);
        }
    }
}
