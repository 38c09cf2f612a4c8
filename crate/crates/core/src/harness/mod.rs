//! Parameter sweeps: generate per (model, strategy, param) cell, score the
//! samples, persist everything, and summarize as CSV.

mod fit;

pub use fit::{fit_log_curve, tradeoff_table, LogFit, ModelFit, TradeoffRow, TradeoffTable};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenSequence, Vocab};
use crate::decode::{generate, DecoderConfig, Strategy};
use crate::error::{Error, Result};
use crate::lm::{open_model, LanguageModel, NGramLm};
use crate::metrics::{
    corpus_bleu, forward_ppl, mean_seq_rep_n, reverse_ppl, self_bleu, BleuConfig, NgramTrainer, Sample, SampleSet,
};
use crate::par;
use crate::rng::fnv1a;

pub const CSV_SCHEMA: &str = "v1";
pub const CSV_COLUMNS: [&str; 11] = [
    "model",
    "strategy",
    "param",
    "n_samples",
    "corpus_bleu",
    "self_bleu",
    "seq_rep_4",
    "forward_ppl",
    "reverse_ppl",
    "seed",
    "schema",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "corpus_bleu")]
    CorpusBleu,
    #[serde(rename = "self_bleu")]
    SelfBleu,
    #[serde(rename = "seq_rep_4")]
    SeqRep4,
    #[serde(rename = "forward_ppl")]
    ForwardPpl,
    #[serde(rename = "reverse_ppl")]
    ReversePpl,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] =
        [MetricKind::CorpusBleu, MetricKind::SelfBleu, MetricKind::SeqRep4, MetricKind::ForwardPpl, MetricKind::ReversePpl];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::CorpusBleu => "corpus_bleu",
            MetricKind::SelfBleu => "self_bleu",
            MetricKind::SeqRep4 => "seq_rep_4",
            MetricKind::ForwardPpl => "forward_ppl",
            MetricKind::ReversePpl => "reverse_ppl",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::CorpusBleu)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown metric {s:?}")))
    }
}

/// One strategy and the parameter values to sweep. `greedy` takes an empty
/// list and yields a single cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyGrid {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl StrategyGrid {
    fn cells(&self) -> Result<Vec<Strategy>> {
        if self.params.is_empty() {
            return match Strategy::from_parts(&self.name, None) {
                Ok(s) => Ok(vec![s]),
                Err(_) => Ok(Vec::new()),
            };
        }
        self.params.iter().map(|&p| Strategy::from_parts(&self.name, Some(p))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub models: Vec<String>,
    pub strategies: Vec<StrategyGrid>,
    pub prefix_len: usize,
    pub gen_len: usize,
    pub seed: u64,
    pub metrics: Vec<MetricKind>,
    pub bleu: BleuConfig,
    /// Settings for the n-gram model fit on generations (reverse perplexity)
    /// and, when no scorer is named, on the train split (forward perplexity).
    pub ngram: NgramTrainer,
    /// Model id used to score forward perplexity.
    pub scorer: Option<String>,
    /// Use only the first N train sequences as prompts.
    pub max_prompts: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            strategies: Vec::new(),
            prefix_len: 50,
            gen_len: 150,
            seed: 0,
            metrics: MetricKind::ALL.to_vec(),
            bleu: BleuConfig::default(),
            ngram: NgramTrainer::default(),
            scorer: None,
            max_prompts: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prefix_len < 1 || self.gen_len < 1 {
            return Err(Error::config("prefix_len and gen_len must be >= 1"));
        }
        self.bleu.validate()?;
        if self.ngram.order < 1 {
            return Err(Error::BadOrder(self.ngram.order));
        }
        if !(self.ngram.k_s > 0.0) {
            return Err(Error::config("ngram.k_s must be positive"));
        }
        for g in &self.strategies {
            g.cells()?;
        }
        Ok(())
    }

    /// Grid cells in output order: models, then strategies, then params, as
    /// listed.
    pub fn cells(&self) -> Result<Vec<(String, Strategy)>> {
        let mut out = Vec::new();
        for m in &self.models {
            for g in &self.strategies {
                for s in g.cells()? {
                    out.push((m.clone(), s));
                }
            }
        }
        Ok(out)
    }
}

/// Human text the sweep draws on. Prompts come from `train`; Corpus-BLEU
/// references and reverse-perplexity targets come from `heldout`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepData {
    pub train: Vec<TokenSequence>,
    pub heldout: Vec<TokenSequence>,
}

impl SweepData {
    fn hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for (tag, seqs) in [(b'T', &self.train), (b'H', &self.heldout)] {
            bytes.push(tag);
            for s in seqs {
                for id in s.iter() {
                    bytes.extend_from_slice(&id.to_le_bytes());
                }
                bytes.push(b'|');
            }
        }
        fnv1a(&bytes)
    }
}

/// Resolves model ids to loaded models.
pub trait ModelSource: Sync {
    fn load(&self, id: &str) -> Result<Arc<dyn LanguageModel>>;
}

/// Opens model specs (see [`open_model`]), resolving relative file paths
/// against `base`.
#[derive(Debug, Clone, Default)]
pub struct FileModels {
    pub base: Option<PathBuf>,
}

impl ModelSource for FileModels {
    fn load(&self, id: &str) -> Result<Arc<dyn LanguageModel>> {
        let p = Path::new(id);
        match &self.base {
            Some(b) if p.is_relative() && !id.starts_with("tcp://") && !id.starts_with("exec:") => {
                open_model(&b.join(p).to_string_lossy())
            }
            _ => open_model(id),
        }
    }
}

#[derive(Clone, Default)]
pub struct InMemoryModels {
    pub models: BTreeMap<String, Arc<dyn LanguageModel>>,
}

impl InMemoryModels {
    pub fn with(mut self, id: impl Into<String>, model: Arc<dyn LanguageModel>) -> Self {
        self.models.insert(id.into(), model);
        self
    }
}

impl ModelSource for InMemoryModels {
    fn load(&self, id: &str) -> Result<Arc<dyn LanguageModel>> {
        self.models.get(id).cloned().ok_or_else(|| Error::External(format!("no model named {id:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: String,
    pub strategy: String,
    pub param: Option<f64>,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub n_samples: usize,
    pub seed: u64,
    pub content_hash: String,
    pub status: CellStatus,
}

impl SweepRecord {
    pub fn metric(&self, m: MetricKind) -> Option<f64> {
        self.metrics.get(m.name()).copied().flatten()
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

/// Seed for sample `index` of a cell. Stable across platforms and runs.
pub fn sample_seed(seed: u64, model: &str, strategy: &Strategy, index: usize) -> u64 {
    let key = format!("{model}\u{0}{}\u{0}{}\u{0}{index}", strategy.name(), param_key(strategy.param()));
    seed ^ fnv1a(key.as_bytes())
}

fn param_key(p: Option<f64>) -> String {
    p.map(|v| v.to_string()).unwrap_or_else(|| "none".into())
}

/// File-name-safe cell identifier.
pub fn cell_slug(model: &str, strategy: &Strategy) -> String {
    let clean: String = model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let tail = clean.len().saturating_sub(40);
    format!(
        "{}-{:016x}__{}_{}",
        &clean[tail..],
        fnv1a(model.as_bytes()),
        strategy.name(),
        param_key(strategy.param())
    )
}

fn cell_hash(cfg: &SweepConfig, data_hash: u64, model: &str, strategy: &Strategy) -> Result<String> {
    let key = serde_json::json!({
        "model": model,
        "strategy": strategy.name(),
        "param": strategy.param(),
        "prefix_len": cfg.prefix_len,
        "gen_len": cfg.gen_len,
        "seed": cfg.seed,
        "metrics": cfg.metrics,
        "bleu": cfg.bleu,
        "ngram": cfg.ngram,
        "scorer": cfg.scorer,
        "max_prompts": cfg.max_prompts,
        "data": format!("{data_hash:016x}"),
    });
    Ok(format!("{:016x}", fnv1a(serde_json::to_string(&key)?.as_bytes())))
}

/// What [`run_sweep`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    /// Cells recomputed this run (the rest were reused from `out_dir`).
    pub computed: usize,
}

struct Shared<'a> {
    cfg: &'a SweepConfig,
    prompts: Vec<&'a [u32]>,
    refs: SampleSet,
    data_hash: u64,
    scorer: Option<Arc<dyn LanguageModel>>,
    train: &'a [TokenSequence],
    /// Default forward-perplexity scorers, one per vocabulary size.
    fitted: Mutex<BTreeMap<usize, Arc<NGramLm>>>,
}

impl Shared<'_> {
    /// The named scorer, or an n-gram model fit on the train split over a
    /// vocabulary covering the generator's.
    fn scorer_for(&self, vocab_size: usize) -> Result<Arc<dyn LanguageModel>> {
        if let Some(s) = &self.scorer {
            return Ok(s.clone());
        }
        let v = self
            .train
            .iter()
            .flat_map(|s| s.iter())
            .max()
            .map_or(0, |&m| m as usize + 1)
            .max(vocab_size)
            .max(self.cfg.ngram.vocab_size);
        let mut cache = self.fitted.lock().expect("scorer cache poisoned");
        if let Some(lm) = cache.get(&v) {
            return Ok(lm.clone());
        }
        let lm = Arc::new(NGramLm::fit(self.train, self.cfg.ngram.order, self.cfg.ngram.k_s, Vocab::anonymous(v))?);
        cache.insert(v, lm.clone());
        Ok(lm)
    }
}

/// Runs every cell of the grid. With `out_dir`, writes
/// `samples/<cell>.jsonl` and `cells/<cell>.json` per cell and skips cells
/// whose stored record has a matching content hash.
pub fn run_sweep(
    cfg: &SweepConfig,
    data: &SweepData,
    models: &dyn ModelSource,
    out_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    if cells.is_empty() {
        return Ok(SweepOutcome { records: Vec::new(), computed: 0 });
    }
    let limit = cfg.max_prompts.unwrap_or(usize::MAX);
    let prompts: Vec<&[u32]> = data.train.iter().take(limit).map(|s| s.ids()).collect();
    if prompts.is_empty() {
        return Err(Error::InsufficientData("no train sequences to draw prompts from".into()));
    }
    if let Some(short) = prompts.iter().find(|p| p.len() < cfg.prefix_len) {
        return Err(Error::config(format!(
            "prefix_len {} exceeds a train sequence of length {}",
            cfg.prefix_len,
            short.len()
        )));
    }
    let heldout: Vec<&[u32]> = data.heldout.iter().map(|s| s.ids()).filter(|s| s.len() > cfg.prefix_len).collect();
    let needs_refs = cfg.metrics.iter().any(|m| matches!(m, MetricKind::CorpusBleu | MetricKind::ReversePpl));
    if needs_refs && heldout.is_empty() {
        return Err(Error::InsufficientData("no held-out sequences longer than prefix_len".into()));
    }
    let scorer = match &cfg.scorer {
        Some(id) if cfg.metrics.contains(&MetricKind::ForwardPpl) => Some(models.load(id)?),
        _ => None,
    };
    let shared = Shared {
        cfg,
        prompts,
        refs: SampleSet::from_split(&heldout, cfg.prefix_len),
        data_hash: data.hash(),
        scorer,
        train: &data.train,
        fitted: Mutex::new(BTreeMap::new()),
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir.join("samples"))?;
        fs::create_dir_all(dir.join("cells"))?;
    }
    let results: Vec<Result<(SweepRecord, bool)>> =
        par::map(&cells, |(model, strategy)| run_cell(&shared, models, model, strategy, out_dir));
    let mut records = Vec::with_capacity(results.len());
    let mut computed = 0;
    for r in results {
        let (rec, fresh) = r?;
        computed += fresh as usize;
        records.push(rec);
    }
    if let Some(dir) = out_dir {
        let f = fs::File::create(dir.join("sweep.csv"))?;
        write_sweep_csv(&records, f)?;
    }
    Ok(SweepOutcome { records, computed })
}

fn run_cell(
    sh: &Shared<'_>,
    models: &dyn ModelSource,
    model_id: &str,
    strategy: &Strategy,
    out_dir: Option<&Path>,
) -> Result<(SweepRecord, bool)> {
    let cfg = sh.cfg;
    let hash = cell_hash(cfg, sh.data_hash, model_id, strategy)?;
    let slug = cell_slug(model_id, strategy);
    if let Some(dir) = out_dir {
        let path = dir.join("cells").join(format!("{slug}.json"));
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(rec) = serde_json::from_str::<SweepRecord>(&text) {
                let samples_ok = dir.join("samples").join(format!("{slug}.jsonl")).exists();
                if rec.content_hash == hash && rec.is_ok() && samples_ok {
                    return Ok((rec, false));
                }
            }
        }
    }
    let mut rec = SweepRecord {
        model: model_id.to_string(),
        strategy: strategy.name().to_string(),
        param: strategy.param(),
        metrics: BTreeMap::new(),
        n_samples: 0,
        seed: cfg.seed,
        content_hash: hash,
        status: CellStatus::Ok,
    };
    match compute_cell(sh, models, model_id, strategy) {
        Ok((set, metrics)) => {
            rec.n_samples = set.len();
            rec.metrics = metrics;
            if let Some(dir) = out_dir {
                set.write_jsonl(&dir.join("samples").join(format!("{slug}.jsonl")))?;
            }
        }
        // Data-dependent failures are part of the result; I/O on our own
        // output directory is not.
        Err(e @ Error::Io(_)) => return Err(e),
        Err(e) => rec.status = CellStatus::Failed { error: e.to_string() },
    }
    if let Some(dir) = out_dir {
        let mut f = fs::File::create(dir.join("cells").join(format!("{slug}.json")))?;
        serde_json::to_writer_pretty(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    Ok((rec, true))
}

fn compute_cell(
    sh: &Shared<'_>,
    models: &dyn ModelSource,
    model_id: &str,
    strategy: &Strategy,
) -> Result<(SampleSet, BTreeMap<String, Option<f64>>)> {
    let cfg = sh.cfg;
    let model = models.load(model_id)?;
    strategy.validate(model.vocab_size())?;
    let gens: Vec<Result<Sample>> = par::map_range(sh.prompts.len(), |i| {
        let seed = sample_seed(cfg.seed, model_id, strategy, i);
        let prefix = &sh.prompts[i][..cfg.prefix_len];
        let cont = generate(&*model, prefix, &DecoderConfig::new(*strategy, seed, cfg.gen_len))?;
        Ok(Sample {
            id: i as u64,
            model: Some(model_id.to_string()),
            strategy: Some(strategy.name().to_string()),
            param: strategy.param(),
            seed: Some(seed),
            prefix_ids: prefix.to_vec(),
            continuation_ids: cont.into_ids(),
        })
    });
    let set = SampleSet::new(gens.into_iter().collect::<Result<Vec<_>>>()?);
    let mut metrics = BTreeMap::new();
    for &m in &cfg.metrics {
        let value = match m {
            MetricKind::CorpusBleu => Some(corpus_bleu(&set, &sh.refs, &cfg.bleu)?),
            MetricKind::SelfBleu => match self_bleu(&set, &cfg.bleu) {
                Ok(v) => Some(v),
                Err(Error::InsufficientSamples(_)) => None,
                Err(e) => return Err(e),
            },
            MetricKind::SeqRep4 => mean_seq_rep_n(&set, 4)?.0,
            MetricKind::ForwardPpl => {
                let scorer = sh.scorer_for(model.vocab_size())?;
                Some(forward_ppl(&*scorer, &set)?)
            }
            MetricKind::ReversePpl => {
                let tr = NgramTrainer { vocab_size: cfg.ngram.vocab_size.max(model.vocab_size()), ..cfg.ngram.clone() };
                Some(reverse_ppl(&set, &sh.refs, &tr)?)
            }
        };
        metrics.insert(m.name().to_string(), value.filter(|v| v.is_finite()));
    }
    Ok((set, metrics))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the fixed-column summary. Failed cells keep their row with empty
/// metric fields.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        let mut row = vec![r.model.clone(), r.strategy.clone(), opt(r.param), r.n_samples.to_string()];
        for m in MetricKind::ALL {
            row.push(opt(r.metric(m)));
        }
        row.push(r.seed.to_string());
        row.push(CSV_SCHEMA.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a summary written by [`write_sweep_csv`]. Content hashes and
/// failure messages are not part of the CSV and come back empty.
pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::format(format!("unexpected sweep CSV header {header:?}")));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::format(format!("bad number {s:?} in sweep CSV")))
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if &row[10] != CSV_SCHEMA {
            return Err(Error::format(format!("unsupported sweep CSV schema {:?}", &row[10])));
        }
        let mut metrics = BTreeMap::new();
        for (i, m) in MetricKind::ALL.iter().enumerate() {
            metrics.insert(m.name().to_string(), num(&row[4 + i])?);
        }
        let n_samples = row[3].parse().map_err(|_| Error::format("bad n_samples in sweep CSV"))?;
        out.push(SweepRecord {
            model: row[0].to_string(),
            strategy: row[1].to_string(),
            param: num(&row[2])?,
            metrics,
            n_samples,
            seed: row[9].parse().map_err(|_| Error::format("bad seed in sweep CSV"))?,
            content_hash: String::new(),
            status: CellStatus::Ok,
        });
    }
    Ok(out)
}
