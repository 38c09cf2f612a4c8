//! Small synthetic corpora and models for tests, benches and demos.

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::rng::SplitMix64;

const SUBJECTS: &[&str] = &[
    "the cat", "a dog", "the old man", "my friend", "the bird", "a girl", "the farmer", "our teacher",
    "his uncle", "the young queen", "a quiet boy", "the baker", "every child", "your sister", "the pilot",
];
const VERBS: &[&str] = &[
    "saw", "found", "liked", "took", "made", "wanted", "heard", "painted", "carried", "dropped", "cooked",
    "opened", "bought", "forgot", "fixed", "washed",
];
const OBJECTS: &[&str] = &[
    "the ball", "a red hat", "some bread", "the river", "a song", "the small box", "her book", "two apples",
    "a wooden chair", "the map", "my coat", "a blue kite", "the garden gate", "fresh milk", "a long letter",
    "the clock", "an empty jar", "the yellow door",
];
const TAILS: &[&str] = &[
    "", " today", " at home", " in the park", " again", " by the road", " after lunch", " near the shop",
    " with care", " quickly", " last night",
];

/// One template sentence, e.g. "the cat saw a song in the park."
pub fn toy_sentence(rng: &mut SplitMix64) -> String {
    let pick = |rng: &mut SplitMix64, xs: &[&'static str]| xs[rng.below(xs.len())];
    let mut s = format!("{} {} {}", pick(rng, SUBJECTS), pick(rng, VERBS), pick(rng, OBJECTS));
    if rng.bernoulli(0.3) {
        s.push_str(" and ");
        s.push_str(pick(rng, VERBS));
        s.push(' ');
        s.push_str(pick(rng, OBJECTS));
    }
    s.push_str(pick(rng, TAILS));
    s.push('.');
    s
}

/// Space-joined template sentences until at least `min_chars` characters.
/// The character inventory stays under 30 symbols.
pub fn toy_corpus(seed: u64, min_chars: usize) -> String {
    let mut rng = SplitMix64::new(seed);
    let mut out = String::new();
    while out.len() < min_chars {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&toy_sentence(&mut rng));
    }
    out
}

/// Puts `mass` on one fixed token and spreads the rest evenly.
#[derive(Debug, Clone, PartialEq)]
pub struct OverconfidentLm {
    pub vocab_size: usize,
    pub favourite: TokenId,
    pub mass: f64,
}

impl OverconfidentLm {
    pub fn new(vocab_size: usize, favourite: TokenId, mass: f64) -> Result<Self> {
        if vocab_size < 2 || favourite as usize >= vocab_size || !(0.0..=1.0).contains(&mass) {
            return Err(Error::config("overconfident model needs |V| >= 2, a valid favourite and mass in [0,1]"));
        }
        Ok(Self { vocab_size, favourite, mass })
    }
}

impl LanguageModel for OverconfidentLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_dist(&self, _context: &[TokenId]) -> Result<Vec<f64>> {
        let rest = (1.0 - self.mass) / (self.vocab_size - 1) as f64;
        let mut d = vec![rest; self.vocab_size];
        d[self.favourite as usize] = self.mass;
        Ok(d)
    }
}
