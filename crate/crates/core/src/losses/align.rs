use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label given to continuation sub-tokens and tokens that cannot be aligned.
pub const X_LABEL: &str = "X";

/// One row of a supervision file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWord {
    pub surface: String,
    pub label: String,
    /// Offset from the dependent to its head, when the file carries one.
    pub head_offset: Option<i64>,
}

/// Reads `surface<TAB>label[<TAB>head_offset]` rows, blank line between
/// sentences.
pub fn read_label_file(path: &Path) -> Result<Vec<Vec<LabeledWord>>> {
    let text = fs::read_to_string(path)?;
    let mut sentences = Vec::new();
    let mut cur = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                sentences.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || Error::format(format!("{}:{}: expected surface<TAB>label[<TAB>head]", path.display(), n + 1));
        if cols.len() < 2 || cols.len() > 3 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(bad());
        }
        let head_offset = match cols.get(2) {
            Some(h) => Some(h.trim().parse().map_err(|_| bad())?),
            None => None,
        };
        cur.push(LabeledWord { surface: cols[0].to_owned(), label: cols[1].to_owned(), head_offset });
    }
    if !cur.is_empty() {
        sentences.push(cur);
    }
    Ok(sentences)
}

fn strip_ws(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Projects word-level labels onto a finer (sub-word) tokenization.
///
/// The first sub-token of each word carries the word's label; the remaining
/// sub-tokens, and tokens with no visible characters, get [`X_LABEL`].
/// Continuation markers (leading `#`) on model tokens are ignored when the
/// raw surface does not match.
pub fn align_labels(words: &[(String, String)], model_tokens: &[String]) -> Result<Vec<String>> {
    let word_chars: Vec<Vec<char>> = words.iter().map(|(s, _)| strip_ws(s)).collect();
    // Flattened text with the owning word of every character.
    let mut text = Vec::new();
    let mut owner = Vec::new();
    let mut word_start = Vec::new();
    for (wi, chars) in word_chars.iter().enumerate() {
        for (k, &c) in chars.iter().enumerate() {
            text.push(c);
            owner.push(wi);
            word_start.push(k == 0);
        }
    }
    let mut pos = 0;
    let mut out = Vec::with_capacity(model_tokens.len());
    for tok in model_tokens {
        let raw = strip_ws(tok);
        let stripped: Vec<char> = raw.iter().copied().skip_while(|&c| c == '#').collect();
        let matches = |cand: &[char]| !cand.is_empty() && text[pos..].starts_with(cand);
        let piece = if matches(&raw) {
            raw
        } else if matches(&stripped) {
            stripped
        } else if stripped.is_empty() {
            out.push(X_LABEL.to_owned());
            continue;
        } else {
            let got: String = raw.iter().collect();
            let want: String = text[pos..].iter().take(raw.len().max(1)).collect();
            return Err(Error::Alignment(format!("token {got:?} does not match text {want:?}")));
        };
        out.push(if word_start[pos] {
            words[owner[pos]].1.clone()
        } else {
            X_LABEL.to_owned()
        });
        pos += piece.len();
    }
    if pos != text.len() {
        let rest: String = text[pos..].iter().collect();
        return Err(Error::Alignment(format!("model tokens end before text {rest:?}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn t(toks: &[&str]) -> Vec<String> {
        toks.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn worked_example() {
        let words = w(&[("Jane", "I-PER"), ("Doe", "I-PER"), ("is", "O"), ("a", "O"), ("musketeer", "O")]);
        let toks = t(&["Jane", "Do", "#e", "is", "a", "musket", "#eer"]);
        assert_eq!(
            align_labels(&words, &toks).unwrap(),
            ["I-PER", "I-PER", "X", "O", "O", "O", "X"]
        );
    }

    #[test]
    fn single_word_splits() {
        assert_eq!(align_labels(&w(&[("Doe", "I-PER")]), &t(&["Do", "#e"])).unwrap(), ["I-PER", "X"]);
        assert_eq!(align_labels(&w(&[("musketeer", "O")]), &t(&["musket", "#eer"])).unwrap(), ["O", "X"]);
    }

    #[test]
    fn one_to_one_passes_through() {
        let words = w(&[("the", "DET"), ("cat", "NOUN"), (".", "PUNCT")]);
        assert_eq!(align_labels(&words, &t(&["the", "cat", "."])).unwrap(), ["DET", "NOUN", "PUNCT"]);
    }

    #[test]
    fn merged_and_invisible_tokens() {
        let words = w(&[("New", "A"), ("York", "B")]);
        assert_eq!(align_labels(&words, &t(&[" ", "NewYork"])).unwrap(), ["X", "A"]);
    }

    #[test]
    fn irreconcilable() {
        let words = w(&[("cat", "N")]);
        assert!(matches!(align_labels(&words, &t(&["dog"])), Err(Error::Alignment(_))));
        assert!(matches!(align_labels(&words, &t(&["ca"])), Err(Error::Alignment(_))));
    }

    #[test]
    fn label_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.tsv");
        fs::write(&p, "The\tDET\t1\ncat\tNOUN\t0\n\nHi\tINTJ\n").unwrap();
        let s = read_label_file(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0][0].head_offset, Some(1));
        assert_eq!(s[1][0].label, "INTJ");
        fs::write(&p, "lonely\n").unwrap();
        assert!(read_label_file(&p).is_err());
    }
}
