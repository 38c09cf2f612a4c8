use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, TokenSequence};
use crate::error::{Error, Result};

/// One generated (or human) continuation with its provenance. This is also
/// the line format of sample-set JSONL files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub param: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub prefix_ids: Vec<TokenId>,
    pub continuation_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: Option<String>,
    pub strategy: Option<String>,
    pub param: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    /// Human text: each sequence becomes a continuation with an empty prefix.
    pub fn from_sequences<S: AsRef<[TokenId]>>(seqs: &[S]) -> Self {
        Self::from_split(seqs, 0)
    }

    /// Human text split at `prefix_len` into prefix and continuation.
    pub fn from_split<S: AsRef<[TokenId]>>(seqs: &[S], prefix_len: usize) -> Self {
        let samples = seqs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let s = s.as_ref();
                let cut = prefix_len.min(s.len());
                Sample {
                    id: i as u64,
                    model: None,
                    strategy: None,
                    param: None,
                    seed: None,
                    prefix_ids: s[..cut].to_vec(),
                    continuation_ids: s[cut..].to_vec(),
                }
            })
            .collect();
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn continuations(&self) -> Vec<&[TokenId]> {
        self.samples.iter().map(|s| s.continuation_ids.as_slice()).collect()
    }

    pub fn continuation_seqs(&self) -> Vec<TokenSequence> {
        self.samples.iter().map(|s| TokenSequence(s.continuation_ids.clone())).collect()
    }

    /// Provenance of the first sample; a set is expected to be homogeneous.
    pub fn provenance(&self) -> Option<Provenance> {
        self.samples.first().map(|s| Provenance {
            model: s.model.clone(),
            strategy: s.strategy.clone(),
            param: s.param,
            seed: s.seed,
        })
    }

    pub fn check_ids_unique(&self) -> Result<()> {
        let mut ids: Vec<u64> = self.samples.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        match ids.windows(2).find(|w| w[0] == w[1]) {
            Some(w) => Err(Error::format(format!("duplicate sample id {}", w[0]))),
            None => Ok(()),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut samples = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(&line).map_err(|e| {
                Error::format(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            samples.push(s);
        }
        let set = Self { samples };
        set.check_ids_unique()?;
        Ok(set)
    }
}
