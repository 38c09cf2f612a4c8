use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use qdeval::consistency::{load_stories, load_triples, selection_accuracy, SelectionReport};
use qdeval::corpus::{
    build_pair_datasets, read_id_file, segment_sentences, split_corpus, tfidf_scores, tokenize, write_id_file,
    PairMode, Scheme, SplitManifest, TokenSequence, Vocab,
};
use qdeval::decode::{generate as decode, DecoderConfig, Strategy, Truncation};
use qdeval::harness::{
    read_sweep_csv, run_sweep, sample_seed, tradeoff_table, FileModels, MetricKind, SweepConfig, SweepData,
};
use qdeval::lm::{open_model, save_model, token_prob_trace, AnyModel, FeedForwardLm, FfnDims, LanguageModel, NGramLm};
use qdeval::losses::{
    align_labels, read_label_file, Objective, ObjectiveWeight, SeqUlConfig, TrainConfig, TrainData, Trainer, X_LABEL,
};
use qdeval::metrics::{
    acceptability_penlp, corpus_bleu, forward_ppl, mean_seq_rep_n, reverse_ppl, self_bleu, BleuConfig, MetricReport,
    NgramTrainer, Sample, SampleSet,
};

use crate::config::{config_error, need};
use crate::{
    Backend, EvalArgs, EvalKind, FitArgs, GenerateArgs, Globals, IngestArgs, PairModeArg, SelectArgs, SweepArgs,
    TraceArgs, TrainArgs,
};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| qdeval::Error::format(format!("{}: {e}", path.display())).into())
}

fn read_ids(path: &Path) -> Result<(usize, Vec<TokenSequence>)> {
    read_id_file(path).with_context(|| format!("reading {}", path.display()))
}

pub fn ingest(g: &Globals, a: IngestArgs) -> Result<()> {
    let input = need(a.input, "input")?;
    let scheme = a.tokenizer.unwrap_or(Scheme::Word);
    let seq_len = a.seq_len.unwrap_or(200);
    let ratios: [f64; 3] = match a.ratios {
        None => [0.8, 0.1, 0.1],
        Some(r) => r.try_into().map_err(|_| config_error("--ratios takes exactly three values"))?,
    };
    let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let (seq, vocab) = tokenize(&text, scheme)?;
    // Unknown-token slot for text seen later; ids of existing tokens are unchanged.
    let vocab = vocab.with_unk();
    let splits = split_corpus(&seq, seq_len, ratios)?;
    let v = vocab.len();
    write_json(&g.out_dir.join("vocab.json"), &vocab)?;
    write_id_file(&g.out_dir.join("train.ids"), v, &splits.train)?;
    write_id_file(&g.out_dir.join("dev.ids"), v, &splits.dev)?;
    write_id_file(&g.out_dir.join("test.ids"), v, &splits.test)?;
    let manifest = SplitManifest { seq_len, ratios, counts: splits.counts(), tokenizer: Some(scheme), seed: g.seed };
    write_json(&g.out_dir.join("manifest.json"), &manifest)?;
    print_json(&json!({ "tokens": seq.len(), "vocab_size": v, "counts": manifest.counts }))
}

fn parse_objectives(list: &[String], label_heads: bool) -> Result<Vec<ObjectiveWeight>> {
    list.iter()
        .map(|item| {
            let (name, w) = item.split_once('=').unwrap_or((item, "1"));
            let weight: f64 =
                w.trim().parse().map_err(|_| config_error(format!("bad objective weight in {item:?}")))?;
            let kind = match name.trim() {
                "mle" => Objective::Mle,
                "ul" | "unlikelihood" => Objective::Unlikelihood,
                "margin_rank" => Objective::MarginRank,
                "tfidf" => Objective::Tfidf,
                "class" if label_heads => Objective::Classification { head: 0 },
                "class" => return Err(config_error("objective class needs --labels")),
                other => return Err(config_error(format!("unknown objective {other:?}"))),
            };
            Ok(ObjectiveWeight { kind, weight })
        })
        .collect()
}

/// Word-level labels projected onto model tokens. Returns the label
/// inventory and one (sequence, per-token class) item per sentence.
fn labeled_items(path: &Path, vocab: &Vocab) -> Result<(Vec<String>, Vec<(TokenSequence, Vec<Option<usize>>)>)> {
    let sentences = read_label_file(path)?;
    let mut names: Vec<String> = sentences
        .iter()
        .flatten()
        .map(|w| w.label.clone())
        .filter(|l| l != X_LABEL)
        .collect();
    names.sort();
    names.dedup();
    let mut items = Vec::new();
    for sent in &sentences {
        let mut ids = Vec::new();
        for w in sent {
            ids.extend(vocab.encode(&w.surface)?);
            if vocab.scheme() == Scheme::Char {
                ids.extend(vocab.encode(" ")?);
            }
        }
        let tokens: Vec<String> = ids.iter().map(|&t| vocab.token(t).unwrap_or_default().to_string()).collect();
        let words: Vec<(String, String)> = sent.iter().map(|w| (w.surface.clone(), w.label.clone())).collect();
        let labels = align_labels(&words, &tokens)?;
        let classes = labels.iter().map(|l| names.binary_search(l).ok()).collect();
        items.push((TokenSequence(ids), classes));
    }
    Ok((names, items))
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<()> {
    let data = need(a.data, "data")?;
    let vocab = read_vocab(&data.join("vocab.json"))?;
    let (_, train) = read_ids(&data.join("train.ids"))?;
    let out = g.out_dir.join(a.model_out.as_deref().unwrap_or("model.lmek"));
    let model: AnyModel = match a.backend.unwrap_or(Backend::Ffn) {
        Backend::Ngram => NGramLm::fit(&train, a.order.unwrap_or(3), a.k_s.unwrap_or(0.1), vocab)?.into(),
        Backend::Ffn => {
            let label_data = a.labels.as_deref().map(|p| labeled_items(p, &vocab)).transpose()?;
            let objectives = parse_objectives(
                &a.objectives.unwrap_or_else(|| vec!["mle=1".into()]),
                label_data.is_some(),
            )?;
            let has = |k: Objective| objectives.iter().any(|o| o.kind == k);
            let defaults = FfnDims::default();
            let dims = FfnDims {
                context: a.context.unwrap_or(defaults.context),
                embed: a.embed.unwrap_or(defaults.embed),
                hidden: a.hidden.unwrap_or(defaults.hidden),
                regression: has(Objective::Tfidf),
                class_heads: label_data.iter().map(|(names, _)| names.len()).collect(),
            };
            let mut td = TrainData { sequences: train.clone(), ..TrainData::default() };
            if has(Objective::Tfidf) {
                let doc_len = a.tfidf_doc_len.unwrap_or(train.first().map_or(1, |s| s.len()));
                let stream: Vec<u32> = train.iter().flat_map(|s| s.iter().copied()).collect();
                let table = tfidf_scores(&stream, doc_len)?;
                let mut pos = 0;
                let targets = train
                    .iter()
                    .map(|s| {
                        let row = s.iter().enumerate().map(|(i, &t)| table.score_at(pos + i, t)).collect();
                        pos += s.len();
                        row
                    })
                    .collect();
                td.tfidf = Some(targets);
            }
            if has(Objective::MarginRank) {
                let path = need(a.pairs_text, "pairs-text")?;
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let sentences = segment_sentences(&text)
                    .iter()
                    .map(|s| vocab.encode(s).map(TokenSequence))
                    .collect::<qdeval::Result<Vec<_>>>()?;
                let mode = match a.pair_mode.unwrap_or(PairModeArg::Nsp) {
                    PairModeArg::Nsp => PairMode::Nsp,
                    PairModeArg::Sop => PairMode::Sop,
                };
                let count = a.pair_count.unwrap_or(sentences.len().saturating_sub(1));
                td.pairs = build_pair_datasets(&sentences, mode, count, g.seed)?;
            }
            if let Some((_, items)) = label_data {
                td.labeled = vec![items];
            }
            let base = TrainConfig::default();
            let ul = SeqUlConfig::default();
            let cfg = TrainConfig {
                epochs: a.epochs.unwrap_or(base.epochs),
                batch_size: a.batch_size.unwrap_or(base.batch_size),
                learning_rate: a.learning_rate.unwrap_or(base.learning_rate),
                objectives,
                seq_ul: SeqUlConfig {
                    mix_prob: a.mix_prob.unwrap_or(ul.mix_prob),
                    prefix_len: a.ul_prefix_len.unwrap_or(ul.prefix_len),
                    gen_len: a.ul_gen_len.unwrap_or(ul.gen_len),
                    ngram: a.ul_ngram.unwrap_or(ul.ngram),
                },
                margin: a.margin.unwrap_or(base.margin),
                seed: g.seed,
            };
            let model = FeedForwardLm::new(vocab, dims, g.seed)?;
            let mut trainer = Trainer::new(model, cfg)?;
            let reports = trainer.fit(&td)?;
            write_jsonl(&g.out_dir.join("train_log.jsonl"), &reports)?;
            trainer.into_model().into()
        }
    };
    save_model(&out, &model)?;
    print_json(&json!({ "model": out, "vocab_size": model.vocab_size() }))
}

fn strategy_from(a: &GenerateArgs) -> Result<Strategy> {
    let name = a.strategy.as_deref().unwrap_or("greedy");
    let param = match name {
        "greedy" => None,
        "beam" => a.b.map(|b| b as f64),
        "temp" | "temperature" => a.t,
        "topk" => a.k.map(|k| k as f64),
        "topp" => a.p,
        "penalized" => a.theta,
        _ => None,
    };
    let mut s = Strategy::from_parts(name, param)?;
    if let Strategy::Penalized { temperature, .. } = &mut s {
        *temperature = a.t;
    }
    Ok(s)
}

pub fn generate(g: &Globals, a: GenerateArgs) -> Result<()> {
    let spec = need(a.model.clone(), "model")?;
    let input = need(a.input.clone(), "input")?;
    let strategy = strategy_from(&a)?;
    let prefix_len = a.prefix_len.unwrap_or(50);
    let gen_len = a.gen_len.unwrap_or(150);
    let model = open_model(&spec)?;
    let (_, seqs) = read_ids(&input)?;
    let seqs = &seqs[..seqs.len().min(a.max_samples.unwrap_or(usize::MAX))];
    let mut samples = Vec::with_capacity(seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        if s.len() < prefix_len {
            return Err(qdeval::Error::InsufficientData(format!(
                "sequence {i} has {} tokens, fewer than prefix_len {prefix_len}",
                s.len()
            ))
            .into());
        }
        let seed = sample_seed(g.seed, &spec, &strategy, i);
        let prefix = &s[..prefix_len];
        let cont = decode(&model, prefix, &DecoderConfig::new(strategy, seed, gen_len))?;
        samples.push(Sample {
            id: i as u64,
            model: Some(spec.clone()),
            strategy: Some(strategy.name().to_string()),
            param: strategy.param(),
            seed: Some(seed),
            prefix_ids: prefix.to_vec(),
            continuation_ids: cont.into_ids(),
        });
    }
    let out = g.out_dir.join(a.samples_out.as_deref().unwrap_or("samples.jsonl"));
    SampleSet::new(samples).write_jsonl(&out)?;
    print_json(&json!({ "samples": out, "n": seqs.len(), "strategy": strategy.to_string() }))
}

fn load_samples(path: &Path, prefix_len: usize) -> Result<SampleSet> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(SampleSet::read_jsonl(path)?);
    }
    let (_, seqs) = read_ids(path)?;
    let long: Vec<&[u32]> = seqs.iter().map(|s| s.ids()).filter(|s| s.len() > prefix_len).collect();
    Ok(SampleSet::from_split(&long, prefix_len))
}

fn max_id_plus_one(sets: &[&SampleSet]) -> usize {
    sets.iter()
        .flat_map(|s| s.samples.iter())
        .flat_map(|s| s.prefix_ids.iter().chain(&s.continuation_ids))
        .max()
        .map_or(0, |&m| m as usize + 1)
}

fn emit_reports(g: &Globals, reports: &[MetricReport]) -> Result<()> {
    for r in reports {
        write_json(&g.out_dir.join(format!("report_{}.json", r.metric)), r)?;
        print_json(r)?;
    }
    Ok(())
}

pub fn eval(g: &Globals, a: EvalArgs) -> Result<()> {
    let kind = need(a.kind, "kind")?;
    match kind {
        EvalKind::Consistency => {
            let (input, stories) = match (&a.triples, &a.stories) {
                (Some(t), None) => (t.clone(), false),
                (None, Some(s)) => (s.clone(), true),
                _ => return Err(config_error("consistency needs exactly one of --triples or --stories")),
            };
            return select(g, SelectArgs { model: a.model, vocab: a.vocab, input: Some(input) }, stories);
        }
        EvalKind::Acceptability => return acceptability(g, &a),
        EvalKind::Quality | EvalKind::Diversity => {}
    }
    let samples_path = need(a.samples.clone(), "samples")?;
    let samples = SampleSet::read_jsonl(&samples_path)?;
    let prefix_len = a.prefix_len.unwrap_or(50);
    let refs = a.refs.as_deref().map(|p| load_samples(p, prefix_len)).transpose()?;
    let bleu = BleuConfig {
        max_n: a.max_n.unwrap_or(4),
        reference_subsample: a.subsample,
        subsample_seed: g.seed,
        ..BleuConfig::default()
    };
    let provenance = samples.provenance();
    let report = |metric: &str, value: Option<f64>, config: serde_json::Value, nulls: usize| MetricReport {
        metric: metric.to_string(),
        value,
        config,
        provenance: provenance.clone(),
        n_samples: samples.len(),
        nulls_excluded: nulls,
    };
    let mut out = Vec::new();
    match kind {
        EvalKind::Quality => {
            if let Some(refs) = &refs {
                let v = corpus_bleu(&samples, refs, &bleu)?;
                out.push(report("corpus_bleu", Some(v), serde_json::to_value(&bleu)?, 0));
            }
            if let Some(spec) = &a.model {
                let scorer = open_model(spec)?;
                let v = forward_ppl(&scorer, &samples)?;
                out.push(report("forward_ppl", Some(v), json!({ "scorer": spec }), 0));
            }
            if out.is_empty() {
                return Err(config_error("quality needs --refs (corpus_bleu) and/or --model (forward_ppl)"));
            }
        }
        EvalKind::Diversity => {
            let v = self_bleu(&samples, &bleu)?;
            out.push(report("self_bleu", Some(v), serde_json::to_value(&bleu)?, 0));
            let n = a.rep_n.unwrap_or(4);
            let (v, nulls) = mean_seq_rep_n(&samples, n)?;
            out.push(report(&format!("seq_rep_{n}"), v, json!({ "n": n }), nulls));
            if let Some(human) = &refs {
                let vocab_size = match &a.vocab {
                    Some(p) => read_vocab(p)?.len(),
                    None => max_id_plus_one(&[&samples, human]),
                };
                let tr = NgramTrainer {
                    order: a.ngram_order.unwrap_or(3),
                    k_s: a.ngram_k.unwrap_or(0.1),
                    vocab_size,
                };
                let v = reverse_ppl(&samples, human, &tr)?;
                out.push(report("reverse_ppl", Some(v), serde_json::to_value(&tr)?, 0));
            }
        }
        EvalKind::Consistency | EvalKind::Acceptability => unreachable!("handled above"),
    }
    emit_reports(g, &out)
}

fn acceptability(g: &Globals, a: &EvalArgs) -> Result<()> {
    let model = open_model(&need(a.model.clone(), "model")?)?;
    let vocab = read_vocab(&need(a.vocab.clone(), "vocab")?)?;
    let path = need(a.sentences.clone(), "sentences")?;
    let alpha = a.alpha.unwrap_or(0.6);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut items = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (context, sentence) = line.split_once('\t').unwrap_or(("", line));
        let ctx = if context.is_empty() { Vec::new() } else { vocab.encode(&format!("{context} "))? };
        let ids = vocab.encode(sentence)?;
        let v = acceptability_penlp(&model, &ids, &ctx, alpha)?;
        items.push(json!({ "sentence": sentence, "penlp": v }));
    }
    if items.is_empty() {
        return Err(qdeval::Error::EmptyDataset.into());
    }
    let mean = items.iter().map(|i| i["penlp"].as_f64().unwrap_or(f64::NAN)).sum::<f64>() / items.len() as f64;
    write_jsonl(&g.out_dir.join("acceptability_items.jsonl"), &items)?;
    emit_reports(
        g,
        &[MetricReport {
            metric: "penlp".into(),
            value: Some(mean),
            config: json!({ "alpha": alpha, "per_item": "acceptability_items.jsonl" }),
            provenance: None,
            n_samples: items.len(),
            nulls_excluded: 0,
        }],
    )
}

pub fn sweep(g: &Globals, a: SweepArgs) -> Result<()> {
    let data = need(a.data, "data")?;
    let base = SweepConfig::default();
    let cfg = SweepConfig {
        models: a.models.unwrap_or_default(),
        strategies: a.strategies.unwrap_or_default(),
        prefix_len: a.prefix_len.unwrap_or(base.prefix_len),
        gen_len: a.gen_len.unwrap_or(base.gen_len),
        seed: g.seed,
        metrics: a.metrics.unwrap_or(base.metrics),
        bleu: BleuConfig {
            max_n: a.max_n.unwrap_or(base.bleu.max_n),
            reference_subsample: a.subsample,
            subsample_seed: g.seed,
            ..base.bleu
        },
        ngram: NgramTrainer {
            order: a.ngram_order.unwrap_or(base.ngram.order),
            k_s: a.ngram_k.unwrap_or(base.ngram.k_s),
            vocab_size: base.ngram.vocab_size,
        },
        scorer: a.scorer,
        max_prompts: a.max_prompts,
    };
    let (_, train) = read_ids(&data.join("train.ids"))?;
    let (_, heldout) = read_ids(&data.join("test.ids"))?;
    let outcome = run_sweep(&cfg, &SweepData { train, heldout }, &FileModels::default(), Some(&g.out_dir))?;
    write_json(&g.out_dir.join("sweep_config.json"), &cfg)?;
    let failed = outcome.records.iter().filter(|r| !r.is_ok()).count();
    for r in outcome.records.iter().filter(|r| !r.is_ok()) {
        eprintln!("cell {} {} {:?} failed: {:?}", r.model, r.strategy, r.param, r.status);
    }
    print_json(&json!({
        "records": outcome.records.len(),
        "computed": outcome.computed,
        "failed": failed,
        "csv": g.out_dir.join("sweep.csv"),
    }))
}

pub fn fit(g: &Globals, a: FitArgs) -> Result<()> {
    let csv = need(a.csv, "csv")?;
    let quality = a.quality.unwrap_or(MetricKind::CorpusBleu);
    let diversity = a.diversity.unwrap_or(MetricKind::SelfBleu);
    let records = read_sweep_csv(File::open(&csv).with_context(|| format!("reading {}", csv.display()))?)?;
    let table = tradeoff_table(&records, quality, diversity);
    table.write_rows_csv(File::create(g.out_dir.join("tradeoff.csv"))?)?;
    table.write_fits_csv(File::create(g.out_dir.join("tradeoff_fits.csv"))?)?;
    for f in &table.fits {
        print_json(f)?;
    }
    Ok(())
}

fn parse_truncation(s: &str) -> Result<Truncation> {
    let (name, v) = s.split_once(':').ok_or_else(|| config_error(format!("bad truncation {s:?}")))?;
    let bad = || config_error(format!("bad truncation value in {s:?}"));
    Ok(match name {
        "topk" => Truncation::TopK(v.parse().map_err(|_| bad())?),
        "topp" => Truncation::TopP(v.parse().map_err(|_| bad())?),
        "temp" => Truncation::Temperature(v.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    })
}

pub fn trace(g: &Globals, a: TraceArgs) -> Result<()> {
    let model = open_model(&need(a.model, "model")?)?;
    let ids: Vec<u32> = match (&a.text, &a.ids) {
        (Some(text), None) => read_vocab(&need(a.vocab, "vocab")?)?.encode(text)?,
        (None, Some(ids)) => ids
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| qdeval::Error::format(format!("bad id {t:?}"))))
            .collect::<qdeval::Result<_>>()?,
        _ => return Err(config_error("trace needs exactly one of --text or --ids")),
    };
    let truncation = a.truncation.as_deref().map(parse_truncation).transpose()?;
    let steps = token_prob_trace(&model, &ids, truncation)?;
    write_jsonl(&g.out_dir.join("trace.jsonl"), &steps)?;
    for s in &steps {
        print_json(s)?;
    }
    Ok(())
}

pub fn select(g: &Globals, a: SelectArgs, stories: bool) -> Result<()> {
    let model: Arc<dyn LanguageModel> = open_model(&need(a.model, "model")?)?;
    let vocab = read_vocab(&need(a.vocab, "vocab")?)?;
    let input: PathBuf = need(a.input, "input")?;
    let name = if stories { "story" } else { "nli" };
    let (report, errors): (SelectionReport, Vec<_>) = if stories {
        let l = load_stories(&input)?;
        (selection_accuracy(&model, &l.records, &vocab)?, l.errors)
    } else {
        let l = load_triples(&input)?;
        (selection_accuracy(&model, &l.records, &vocab)?, l.errors)
    };
    for e in &errors {
        eprintln!("{}:{}: skipped: {}", input.display(), e.line, e.reason);
    }
    let items_file = format!("{name}_items.jsonl");
    write_jsonl(&g.out_dir.join(&items_file), &report.per_item)?;
    let summary: BTreeMap<&str, serde_json::Value> = [
        ("accuracy", json!(report.accuracy)),
        ("n", json!(report.n)),
        ("ties", json!(report.ties)),
        ("per_item", json!(items_file)),
        ("skipped_lines", json!(errors.len())),
    ]
    .into_iter()
    .collect();
    write_json(&g.out_dir.join(format!("{name}_report.json")), &summary)?;
    print_json(&summary)
}
