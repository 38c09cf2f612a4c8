mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "qdeval", version, about = "Quality, diversity and consistency evaluation for text generation")]
struct Cli {
    /// JSON file with a top-level section per subcommand; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tokenize raw text and write train/dev/test id files.
    Ingest(IngestArgs),
    /// Fit an n-gram model or train a feed-forward model.
    Train(TrainArgs),
    /// Continue prefixes with a decoding strategy.
    Generate(GenerateArgs),
    /// Score sample sets or models.
    Eval(EvalArgs),
    /// Run a (model, strategy, param) grid and summarize it.
    Sweep(SweepArgs),
    /// Fit log curves to a sweep's quality/diversity trade-off.
    Fit(FitArgs),
    /// Per-token probabilities of a text, raw and truncated.
    Trace(TraceArgs),
    /// Selection accuracy on NLI triples.
    Nli(SelectArgs),
    /// Selection accuracy on story endings.
    Story(SelectArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestArgs {
    /// Raw UTF-8 text.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub tokenizer: Option<qdeval::corpus::Scheme>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// train,dev,test fractions.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<Backend>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub model_out: Option<String>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub k_s: Option<f64>,
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// `name=weight` list; names: mle, ul, margin_rank, tfidf, class.
    #[arg(long, value_delimiter = ',')]
    pub objectives: Option<Vec<String>>,
    #[arg(long)]
    pub mix_prob: Option<f64>,
    #[arg(long)]
    pub ul_prefix_len: Option<usize>,
    #[arg(long)]
    pub ul_gen_len: Option<usize>,
    #[arg(long)]
    pub ul_ngram: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Raw text segmented into sentences for NSP/SOP pairs.
    #[arg(long)]
    pub pairs_text: Option<PathBuf>,
    #[arg(long)]
    pub pair_mode: Option<PairModeArg>,
    #[arg(long)]
    pub pair_count: Option<usize>,
    #[arg(long)]
    pub tfidf_doc_len: Option<usize>,
    /// `surface<TAB>label` file for the classification head.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Ffn,
    Ngram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairModeArg {
    Nsp,
    Sop,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    /// Model file, `tcp://HOST:PORT?vocab=N` or `exec:N:PROGRAM ARGS`.
    #[arg(long)]
    pub model: Option<String>,
    /// Id file whose sequences supply the prefixes.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub prefix_len: Option<usize>,
    #[arg(long)]
    pub gen_len: Option<usize>,
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub samples_out: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Quality,
    Diversity,
    Consistency,
    Acceptability,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(value_enum, required = true)]
    #[serde(skip)]
    pub kind: Option<EvalKind>,
    /// Sample-set JSONL to score.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Human text: sample-set JSONL or id file.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Prefix length used when `--refs` is an id file.
    #[arg(long)]
    pub prefix_len: Option<usize>,
    /// Model scoring forward perplexity / acceptability / consistency.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub ngram_order: Option<usize>,
    #[arg(long)]
    pub ngram_k: Option<f64>,
    /// n of seq-rep-n.
    #[arg(long)]
    pub rep_n: Option<usize>,
    #[arg(long)]
    pub triples: Option<PathBuf>,
    #[arg(long)]
    pub stories: Option<PathBuf>,
    /// Lines of `sentence` or `context<TAB>sentence`.
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// Directory written by `ingest`; prompts from train, references from test.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// `name:p1,p2,..`, repeatable; `greedy` takes no params.
    #[arg(long = "grid", value_parser = parse_grid)]
    pub strategies: Option<Vec<qdeval::harness::StrategyGrid>>,
    #[arg(long)]
    pub prefix_len: Option<usize>,
    #[arg(long)]
    pub gen_len: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<qdeval::harness::MetricKind>>,
    #[arg(long)]
    pub max_prompts: Option<usize>,
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub ngram_order: Option<usize>,
    #[arg(long)]
    pub ngram_k: Option<f64>,
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long)]
    pub subsample: Option<usize>,
}

fn parse_grid(s: &str) -> std::result::Result<qdeval::harness::StrategyGrid, String> {
    let (name, params) = s.split_once(':').unwrap_or((s, ""));
    let params = params
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(qdeval::harness::StrategyGrid { name: name.trim().to_string(), params })
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Sweep CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub quality: Option<qdeval::harness::MetricKind>,
    #[arg(long)]
    pub diversity: Option<qdeval::harness::MetricKind>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<String>,
    /// Space-separated ids, used instead of `--text`.
    #[arg(long)]
    pub ids: Option<String>,
    /// `topk:K`, `topp:P` or `temp:T`.
    #[arg(long)]
    pub truncation: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// TSV dataset.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Fit(_) => "fit",
            Command::Trace(_) => "trace",
            Command::Nli(_) => "nli",
            Command::Story(_) => "story",
        }
    }
}

/// Settings shared by every subcommand after the config overlay.
pub struct Globals {
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => file.global("seed")?.unwrap_or(0),
    };
    let out_dir = match cli.out_dir {
        Some(d) => d,
        None => file.global("out_dir")?.unwrap_or_else(|| PathBuf::from(".")),
    };
    let workers: Option<usize> = match cli.workers {
        Some(w) => Some(w),
        None => file.global("workers")?,
    };
    if let Some(w) = workers {
        if w < 1 {
            return Err(config::config_error("--workers must be >= 1"));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| config::config_error(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&out_dir)?;
    let g = Globals { seed, out_dir };
    let section = cli.command.section();
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&g, file.resolve(section, a)?),
        Command::Train(a) => commands::train(&g, file.resolve(section, a)?),
        Command::Generate(a) => commands::generate(&g, file.resolve(section, a)?),
        Command::Eval(a) => {
            let mut r: EvalArgs = file.resolve(section, a)?;
            r.kind = a.kind;
            commands::eval(&g, r)
        }
        Command::Sweep(a) => commands::sweep(&g, file.resolve(section, a)?),
        Command::Fit(a) => commands::fit(&g, file.resolve(section, a)?),
        Command::Trace(a) => commands::trace(&g, file.resolve(section, a)?),
        Command::Nli(a) => commands::select(&g, file.resolve(section, a)?, false),
        Command::Story(a) => commands::select(&g, file.resolve(section, a)?, true),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<qdeval::Error>() {
            return if e.is_config() { 2 } else { 3 };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
