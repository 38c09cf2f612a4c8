use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scheme, TokenSequence};
use crate::error::{Error, Result};

/// Sidecar written next to persisted splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seq_len: usize,
    pub ratios: [f64; 3],
    pub counts: [usize; 3],
    pub tokenizer: Option<Scheme>,
    pub seed: u64,
}

/// Writes sequences as space-separated decimal ids, one per line, under a
/// `#vocab_size=N` header.
pub fn write_id_file(path: &Path, vocab_size: usize, seqs: &[TokenSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#vocab_size={vocab_size}")?;
    for s in seqs {
        let line: Vec<String> = s.iter().map(u32::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an id file; returns the declared vocabulary size and sequences.
/// Blank lines are skipped; every id must be below the declared size.
pub fn read_id_file(path: &Path) -> Result<(usize, Vec<TokenSequence>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format(format!("{}: empty id file", path.display())))?;
    let vocab_size: usize = header
        .trim()
        .strip_prefix("#vocab_size=")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::format(format!("{}: missing #vocab_size=N header", path.display())))?;
    let mut seqs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|tok| {
                let id: u32 = tok.parse().map_err(|_| {
                    Error::format(format!("{}:{}: bad id {tok:?}", path.display(), lineno + 2))
                })?;
                if id as usize >= vocab_size {
                    return Err(Error::IdOutOfRange { id, size: vocab_size });
                }
                Ok(id)
            })
            .collect::<Result<Vec<_>>>()?;
        seqs.push(TokenSequence(ids));
    }
    Ok((vocab_size, seqs))
}
