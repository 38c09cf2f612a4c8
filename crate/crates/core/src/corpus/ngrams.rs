use std::collections::HashMap;

use super::TokenId;
use crate::error::{Error, Result};

/// Multiset of n-grams keyed by borrowed slices of the source sequence.
pub type NgramCounts<'a> = HashMap<&'a [TokenId], usize>;

/// All `len - n + 1` contiguous n-grams of `seq` with multiplicity.
pub fn extract_ngrams(seq: &[TokenId], n: usize) -> Result<NgramCounts<'_>> {
    if n < 1 {
        return Err(Error::BadOrder(n));
    }
    let mut counts = HashMap::new();
    for w in seq.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    Ok(counts)
}
