//! Perplexity-based selection accuracy: the model "picks" whichever option
//! it finds less surprising after the context.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::lm::{perplexity, LanguageModel};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliTriple {
    pub context: String,
    pub entailed: String,
    pub contradicting: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ending {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryItem {
    pub opening: [String; 4],
    pub ending_a: String,
    pub ending_b: String,
    pub correct: Ending,
}

/// Either kind of item reduced to (context, correct option, wrong option).
pub trait SelectionItem: Sync {
    fn context(&self) -> String;
    fn positive(&self) -> &str;
    fn negative(&self) -> &str;
}

impl SelectionItem for NliTriple {
    fn context(&self) -> String {
        self.context.clone()
    }
    fn positive(&self) -> &str {
        &self.entailed
    }
    fn negative(&self) -> &str {
        &self.contradicting
    }
}

impl SelectionItem for StoryItem {
    fn context(&self) -> String {
        self.opening.join(" ")
    }
    fn positive(&self) -> &str {
        match self.correct {
            Ending::A => &self.ending_a,
            Ending::B => &self.ending_b,
        }
    }
    fn negative(&self) -> &str {
        match self.correct {
            Ending::A => &self.ending_b,
            Ending::B => &self.ending_a,
        }
    }
}

impl NliTriple {
    pub fn swapped(&self) -> Self {
        Self {
            context: self.context.clone(),
            entailed: self.contradicting.clone(),
            contradicting: self.entailed.clone(),
        }
    }
}

/// A line the loader rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

fn ends_with_terminal(s: &str) -> bool {
    let t = s.trim_end();
    let t = t.trim_end_matches(['"', '\'', ')', '\u{201D}', '\u{2019}']);
    t.ends_with(['.', '!', '?', '\u{2026}'])
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn fields(line: &str, want: usize) -> std::result::Result<Vec<String>, String> {
    let parts: Vec<String> = line.split('\t').map(|f| f.trim().to_string()).collect();
    if parts.len() != want {
        return Err(format!("expected {want} tab-separated fields, found {}", parts.len()));
    }
    if let Some(i) = parts.iter().position(|p| p.is_empty()) {
        return Err(format!("field {} is empty", i + 1));
    }
    Ok(parts)
}

pub fn parse_triples(text: &str) -> Result<Loaded<NliTriple>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, raw) in data_lines(text) {
        let parsed = fields(raw, 3).and_then(|f| {
            if !ends_with_terminal(&f[0]) {
                return Err("context does not end with terminal punctuation".to_string());
            }
            let [context, entailed, contradicting]: [String; 3] = f.try_into().expect("three fields");
            Ok(NliTriple { context, entailed, contradicting })
        });
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => errors.push(LineError { line, reason }),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Loaded { records, errors })
}

pub fn parse_stories(text: &str) -> Result<Loaded<StoryItem>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, raw) in data_lines(text) {
        let parsed = fields(raw, 7).and_then(|f| {
            let correct = match f[6].to_ascii_lowercase().as_str() {
                "a" => Ending::A,
                "b" => Ending::B,
                other => return Err(format!("correct ending must be a or b, got {other:?}")),
            };
            if !ends_with_terminal(&f[3]) {
                return Err("context does not end with terminal punctuation".to_string());
            }
            let mut it = f.into_iter();
            let opening = [(); 4].map(|_| it.next().expect("seven fields"));
            Ok(StoryItem { opening, ending_a: it.next().unwrap(), ending_b: it.next().unwrap(), correct })
        });
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => errors.push(LineError { line, reason }),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Loaded { records, errors })
}

pub fn load_triples(path: &Path) -> Result<Loaded<NliTriple>> {
    parse_triples(&fs::read_to_string(path)?)
}

pub fn load_stories(path: &Path) -> Result<Loaded<StoryItem>> {
    parse_stories(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub ppl_pos: f64,
    pub ppl_neg: f64,
    /// True when the correct option had strictly lower perplexity.
    pub picked: bool,
}

impl ItemResult {
    pub fn is_tie(&self) -> bool {
        self.ppl_pos == self.ppl_neg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub accuracy: f64,
    pub n: usize,
    pub ties: usize,
    pub per_item: Vec<ItemResult>,
}

impl SelectionReport {
    pub fn from_items(per_item: Vec<ItemResult>) -> Self {
        let n = per_item.len();
        let correct = per_item.iter().filter(|r| r.picked).count();
        let ties = per_item.iter().filter(|r| r.is_tie()).count();
        Self { accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 }, n, ties, per_item }
    }

    pub fn tie_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.ties as f64 / self.n as f64
        }
    }
}

/// Turns text into ids; a [`Vocab`] is the usual implementation.
pub trait Encoder: Sync {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>>;
}

impl Encoder for Vocab {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        Vocab::encode(self, text)
    }
}

impl<F: Fn(&str) -> Result<Vec<TokenId>> + Sync> Encoder for F {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        self(text)
    }
}

fn score_item<M, E, I>(model: &M, item: &I, enc: &E) -> Result<ItemResult>
where
    M: LanguageModel + ?Sized,
    E: Encoder + ?Sized,
    I: SelectionItem,
{
    // Context and option are joined by one space; the space belongs to the
    // context so the option tokens alone are averaged.
    let ctx = enc.encode(&format!("{} ", item.context()))?;
    let pos = enc.encode(item.positive())?;
    let neg = enc.encode(item.negative())?;
    let ppl_pos = perplexity(model, &pos, &ctx)?;
    let ppl_neg = perplexity(model, &neg, &ctx)?;
    Ok(ItemResult { ppl_pos, ppl_neg, picked: ppl_pos < ppl_neg })
}

pub fn selection_accuracy<M, E, I>(model: &M, items: &[I], enc: &E) -> Result<SelectionReport>
where
    M: LanguageModel + ?Sized,
    E: Encoder + ?Sized,
    I: SelectionItem,
{
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let per_item = par::map(items, |it| score_item(model, it, enc)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SelectionReport::from_items(per_item))
}
