//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs under `cargo test`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use qdeval::consistency::{selection_accuracy, NliTriple};
use qdeval::corpus::{extract_ngrams, split_corpus, tokenize, PairLabel, PairMode, Scheme, SentencePair, TokenSequence, Vocab};
use qdeval::decode::{generate, sample, truncate_renormalize, DecoderConfig, Strategy, Truncation};
use qdeval::harness::{
    fit_log_curve, run_sweep, InMemoryModels, MetricKind, StrategyGrid, SweepConfig, SweepData, SweepRecord,
};
use qdeval::lm::{FeedForwardLm, FfnDims, LanguageModel, NGramLm, UniformLm};
use qdeval::losses::{
    ce_loss, classification_loss, grad_check, margin_rank_loss, regression_loss, smooth_l1_loss, ul_token_loss,
    NegativeCandidates, Objective, ObjectiveWeight, SeqUlConfig, TrainConfig, TrainData, Trainer,
};
use qdeval::metrics::{bleu, reverse_ppl, seq_rep_n, BleuConfig, NgramTrainer, SampleSet};
use qdeval::rng::SplitMix64;
use qdeval::toy::{toy_corpus, toy_sentence};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64, out: Outcome) -> Outcome {
    let secs = elapsed.as_secs_f64();
    match out {
        Ok(d) if secs < limit_secs as f64 => Ok(format!("{d}; {secs:.1}s < {limit_secs}s")),
        Ok(d) => Err(format!("{d}; took {secs:.1}s, limit {limit_secs}s")),
        Err(d) => Err(format!("{d}; {secs:.1}s")),
    }
}

fn random_seq(rng: &mut SplitMix64, vocab: usize, min: usize, max: usize) -> Vec<u32> {
    let len = min + rng.below(max - min + 1);
    (0..len).map(|_| rng.below(vocab) as u32).collect()
}

// Brute-force oracles: quadratic scans, no hashing.

fn count_in(seq: &[u32], gram: &[u32]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

fn oracle_bleu(cand: &[u32], refs: &[Vec<u32>], max_n: usize, eps: f64) -> f64 {
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=max_n {
        if cand.len() < n {
            continue;
        }
        let total = cand.len() - n + 1;
        let mut clipped = 0;
        let mut seen: Vec<&[u32]> = Vec::new();
        for i in 0..total {
            let g = &cand[i..i + n];
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let max_ref = refs.iter().map(|r| count_in(r, g)).max().unwrap_or(0);
            clipped += count_in(cand, g).min(max_ref);
        }
        let p = if clipped == 0 { eps } else { clipped as f64 / total as f64 };
        log_sum += p.ln();
        orders += 1;
    }
    let c = cand.len() as f64;
    let mut r = refs[0].len();
    for x in refs {
        let (d, best) = ((x.len() as i64 - cand.len() as i64).abs(), (r as i64 - cand.len() as i64).abs());
        if d < best || (d == best && x.len() < r) {
            r = x.len();
        }
    }
    let bp = (1.0 - r as f64 / c).min(0.0).exp();
    bp * (log_sum / orders as f64).exp()
}

fn oracle_seq_rep(seq: &[u32], n: usize) -> Option<f64> {
    if seq.len() < n {
        return None;
    }
    let total = seq.len() - n + 1;
    // A window is a duplicate if the same n-gram starts earlier.
    let dups = (0..total).filter(|&i| (0..i).any(|j| seq[j..j + n] == seq[i..i + n])).count();
    // Same rounding as one minus the distinct fraction.
    Some(1.0 - (total - dups) as f64 / total as f64)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(101);
    let mut worst_bleu: f64 = 0.0;
    let mut rep_mismatch = 0;
    let mut gram_mismatch = 0;
    for _ in 0..1000 {
        let v = 2 + rng.below(5);
        let cand = random_seq(&mut rng, v, 1, 12);
        let refs: Vec<Vec<u32>> = (0..1 + rng.below(4)).map(|_| random_seq(&mut rng, v, 1, 12)).collect();
        let max_n = 1 + rng.below(4);
        let cfg = BleuConfig { max_n, ..BleuConfig::default() };
        let ref_slices: Vec<&[u32]> = refs.iter().map(|r| r.as_slice()).collect();
        let got = bleu(&cand, &ref_slices, &cfg).map_err(|e| e.to_string())?;
        worst_bleu = worst_bleu.max((got - oracle_bleu(&cand, &refs, max_n, cfg.smoothing_epsilon)).abs());

        let seq = random_seq(&mut rng, v, 0, 20);
        let n = 1 + rng.below(4);
        if seq_rep_n(&seq, n).map_err(|e| e.to_string())? != oracle_seq_rep(&seq, n) {
            rep_mismatch += 1;
        }
        let grams = extract_ngrams(&seq, n).map_err(|e| e.to_string())?;
        let mut expect: Vec<(&[u32], usize)> = Vec::new();
        if seq.len() >= n {
            for i in 0..=seq.len() - n {
                let g = &seq[i..i + n];
                if !expect.iter().any(|(e, _)| *e == g) {
                    expect.push((g, count_in(&seq, g)));
                }
            }
        }
        if grams.len() != expect.len() || expect.iter().any(|(g, c)| grams.get(g) != Some(c)) {
            gram_mismatch += 1;
        }
    }
    within(
        start.elapsed(),
        30,
        check(
            worst_bleu <= 1e-9 && rep_mismatch == 0 && gram_mismatch == 0,
            format!(
                "1000 cases: max |bleu - oracle| = {worst_bleu:.1e}, seq_rep mismatches {rep_mismatch}, n-gram mismatches {gram_mismatch}"
            ),
        ),
    )
}

fn criterion_2() -> Outcome {
    let (cand, vocab) = tokenize("the cat sat on the mat", Scheme::Word).map_err(|e| e.to_string())?;
    let reference = cand.ids().to_vec();
    let cand = vocab.encode("the cat sat").map_err(|e| e.to_string())?;
    let cfg = BleuConfig { max_n: 2, ..BleuConfig::default() };
    let got = bleu(&cand, &[&reference], &cfg).map_err(|e| e.to_string())?;
    check((got - 0.3679).abs() <= 1e-4, format!("BLEU = {got:.6}, expected 0.3679 +- 1e-4"))
}

fn random_ffn(rng: &mut SplitMix64) -> FeedForwardLm {
    let v = 3 + rng.below(10);
    let dims = FfnDims { context: 1 + rng.below(3), embed: 2 + rng.below(4), hidden: 2 + rng.below(6), ..FfnDims::default() };
    let mut m = FeedForwardLm::new(Vocab::anonymous(v), dims, rng.next_u64()).expect("valid dims");
    // Sharpen the random init so distributions are far from uniform.
    m.params_mut().iter_mut().for_each(|w| *w *= 20.0);
    m
}

fn plain_sampling(model: &FeedForwardLm, prefix: &[u32], seed: u64, len: usize) -> Vec<u32> {
    let mut rng = SplitMix64::new(seed);
    let mut buf = prefix.to_vec();
    for _ in 0..len {
        let d = model.next_dist(&buf).expect("in-vocab context");
        buf.push(sample(&d, &mut rng));
    }
    buf.split_off(prefix.len())
}

fn criterion_3() -> Outcome {
    let mut rng = SplitMix64::new(303);
    let mut fails = BTreeMap::new();
    for _ in 0..100 {
        let model = random_ffn(&mut rng);
        let prefix = random_seq(&mut rng, model.vocab_size(), 1, 6);
        let seed = rng.next_u64();
        let len = 1 + rng.below(12);
        let run = |s: Strategy| generate(&model, &prefix, &DecoderConfig::new(s, seed, len)).map(|t| t.into_ids());
        let greedy = run(Strategy::Greedy).map_err(|e| e.to_string())?;
        let plain = plain_sampling(&model, &prefix, seed, len);
        let checks = [
            ("topk(1)=greedy", run(Strategy::TopK { k: 1 }).map_err(|e| e.to_string())? == greedy),
            ("beam(1)=greedy", run(Strategy::Beam { width: 1 }).map_err(|e| e.to_string())? == greedy),
            ("topp(1)=sampling", run(Strategy::TopP { p: 1.0 }).map_err(|e| e.to_string())? == plain),
            ("temp(1)=sampling", run(Strategy::Temperature { t: 1.0 }).map_err(|e| e.to_string())? == plain),
        ];
        let d = model.next_dist(&prefix).map_err(|e| e.to_string())?;
        let temp_identity = truncate_renormalize(&d, Truncation::Temperature(1.0)) == d;
        for (name, ok) in checks.into_iter().chain([("temp(1) transform", temp_identity)]) {
            *fails.entry(name).or_insert(0) += (!ok) as usize;
        }
    }
    let bad: usize = fails.values().sum();
    check(bad == 0, format!("100 cases per identity; failures {fails:?}"))
}

fn criterion_4() -> Outcome {
    let mut rng = SplitMix64::new(404);
    let hits = (0..10_000).filter(|_| sample(&[0.7, 0.3], &mut rng) == 0).count();
    let f = hits as f64 / 10_000.0;
    check((f - 0.7).abs() <= 0.02, format!("frequency of token 0 = {f:.4} over 10000 draws"))
}

fn pair(first: &[u32], second: &[u32], label: PairLabel) -> SentencePair {
    SentencePair { first: TokenSequence::from(first), second: TokenSequence::from(second), label, mode: PairMode::Nsp }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let dims = FfnDims { context: 2, embed: 4, hidden: 5, regression: true, class_heads: vec![3] };
    let model = FeedForwardLm::new(Vocab::anonymous(7), dims, 55).map_err(|e| e.to_string())?;
    let seq: Vec<u32> = vec![1, 4, 2, 4, 6, 0, 3, 4];
    let pos = pair(&[1, 2, 3], &[4, 5], PairLabel::Positive);
    let neg = pair(&[1, 2, 3], &[6, 0, 6], PairLabel::Negative);
    let targets: Vec<Option<f64>> = vec![Some(0.3), None, Some(2.5), Some(-1.7), Some(0.1), None, Some(0.8), Some(3.0)];
    let labels: Vec<Option<usize>> = vec![Some(0), Some(2), None, Some(1), Some(1), Some(0), None, Some(2)];
    let cands = NegativeCandidates::previous_tokens(&seq);
    let mut results = Vec::new();
    let errs: Vec<(&str, qdeval::Result<f64>)> = vec![
        ("ce", grad_check(&model, |m| ce_loss(m, &seq))),
        ("ul_token", grad_check(&model, |m| ul_token_loss(m, &seq, &cands))),
        // A wide margin keeps the hinge active so the gradient is defined.
        ("margin_rank", grad_check(&model, |m| margin_rank_loss(m, &pos, &neg, 50.0))),
        ("smooth_l1", grad_check(&model, |m| regression_loss(m, &seq, &targets))),
        ("classification", grad_check(&model, |m| classification_loss(m, 0, &seq, &labels))),
    ];
    let mut ok = true;
    for (name, r) in errs {
        let e = r.map_err(|e| format!("{name}: {e}"))?;
        ok &= e < 1e-4;
        results.push(format!("{name} {e:.1e}"));
    }
    // The scalar derivative of smooth-L1 on both branches.
    for &(p, t) in &[(0.3, 0.1), (2.0, -1.0), (-3.0, 0.5)] {
        let h = 1e-6;
        let numeric = (smooth_l1_loss(p + h, t).0 - smooth_l1_loss(p - h, t).0) / (2.0 * h);
        ok &= (numeric - smooth_l1_loss(p, t).1).abs() < 1e-6;
    }
    within(start.elapsed(), 60, check(ok, format!("max rel err: {}", results.join(", "))))
}

/// Greedy seq-rep-4 of a model trained from scratch on the char-level toy
/// corpus, with or without the unlikelihood objective.
fn degeneration_run(with_ul: bool) -> qdeval::Result<f64> {
    let text = toy_corpus(7, 30_000);
    let (seq, vocab) = tokenize(&text, Scheme::Char)?;
    let splits = split_corpus(&seq, 150, [0.8, 0.1, 0.1])?;
    let mut objectives = vec![ObjectiveWeight { kind: Objective::Mle, weight: 1.0 }];
    if with_ul {
        objectives.push(ObjectiveWeight { kind: Objective::Unlikelihood, weight: 1.0 });
    }
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 16,
        learning_rate: 3e-3,
        objectives,
        seq_ul: SeqUlConfig { mix_prob: 0.5, prefix_len: 50, gen_len: 100, ngram: 4 },
        seed: 1,
        ..TrainConfig::default()
    };
    let dims = FfnDims { context: 8, embed: 16, hidden: 64, ..FfnDims::default() };
    let mut trainer = Trainer::new(FeedForwardLm::new(vocab, dims, 3)?, cfg)?;
    trainer.fit(&TrainData { sequences: splits.train.clone(), ..TrainData::default() })?;
    let model = trainer.into_model();
    let evals: Vec<&TokenSequence> = splits.dev.iter().chain(&splits.test).collect();
    let mut total = 0.0;
    for s in &evals {
        let out = generate(&model, &s[..50], &DecoderConfig::new(Strategy::Greedy, 0, 100))?;
        total += seq_rep_n(&out, 4)?.expect("100 tokens");
    }
    Ok(total / evals.len() as f64)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mle = degeneration_run(false).map_err(|e| e.to_string())?;
    let ul = degeneration_run(true).map_err(|e| e.to_string())?;
    within(
        start.elapsed(),
        600,
        check(
            mle > 0.05 && ul < 0.5 * mle,
            format!("greedy seq-rep-4: MLE {mle:.4}, MLE+UL {ul:.4} (ratio {:.3})", ul / mle),
        ),
    )
}

/// Adjacent pairs that fail to strictly decrease.
fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] >= w[0]).count()
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let run = || -> qdeval::Result<Vec<SweepRecord>> {
        let text = toy_corpus(11, 60_000);
        let (seq, vocab) = tokenize(&text, Scheme::Word)?;
        let splits = split_corpus(&seq, 40, [0.8, 0.1, 0.1])?;
        let cfg = TrainConfig { epochs: 3, learning_rate: 3e-3, seed: 1, ..TrainConfig::default() };
        let dims = FfnDims { context: 4, embed: 16, hidden: 64, ..FfnDims::default() };
        let mut trainer = Trainer::new(FeedForwardLm::new(vocab, dims, 3)?, cfg)?;
        trainer.fit(&TrainData { sequences: splits.train.clone(), ..TrainData::default() })?;
        let models = InMemoryModels::default().with("mle", Arc::new(trainer.into_model()));
        let sweep = SweepConfig {
            models: vec!["mle".into()],
            strategies: vec![
                StrategyGrid { name: "topp".into(), params: vec![0.2, 0.4, 0.6, 0.8, 0.9] },
                StrategyGrid { name: "topk".into(), params: vec![2.0, 10.0, 50.0] },
            ],
            prefix_len: 10,
            gen_len: 15,
            seed: 5,
            metrics: vec![MetricKind::CorpusBleu, MetricKind::SelfBleu],
            max_prompts: Some(250),
            ..SweepConfig::default()
        };
        let data = SweepData { train: splits.train, heldout: splits.test };
        Ok(run_sweep(&sweep, &data, &models, None)?.records)
    };
    let records = run().map_err(|e| e.to_string())?;
    let series = |strategy: &str, m: MetricKind| -> Vec<f64> {
        records.iter().filter(|r| r.strategy == strategy).filter_map(|r| r.metric(m)).collect()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (strategy, n) in [("topp", 5), ("topk", 3)] {
        for m in [MetricKind::SelfBleu, MetricKind::CorpusBleu] {
            let s = series(strategy, m);
            let inv = inversions(&s);
            ok &= s.len() == n && inv <= 1;
            let shown: Vec<String> = s.iter().map(|v| format!("{v:.4}")).collect();
            parts.push(format!("{strategy} {m} [{}] inv {inv}", shown.join(" ")));
        }
    }
    within(start.elapsed(), 600, check(ok, parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(808);
    let sentences: Vec<String> = (0..300).map(|_| toy_sentence(&mut rng)).collect();
    let (_, vocab) = tokenize(&sentences.join(" "), Scheme::Word).map_err(|e| e.to_string())?;
    let enc = |s: &String| vocab.encode(s).map_err(|e| e.to_string());
    let distinct: Vec<Vec<u32>> = sentences[..100].iter().map(enc).collect::<Result<_, _>>()?;
    let repeated: Vec<Vec<u32>> = vec![enc(&sentences[0])?; 100];
    let heldout: Vec<Vec<u32>> = sentences[200..].iter().map(enc).collect::<Result<_, _>>()?;
    let tr = NgramTrainer { order: 3, k_s: 0.1, vocab_size: vocab.len() };
    let human = SampleSet::from_sequences(&heldout);
    let rp = |g: &[Vec<u32>]| reverse_ppl(&SampleSet::from_sequences(g), &human, &tr).map_err(|e| e.to_string());
    let (rep, dis) = (rp(&repeated)?, rp(&distinct)?);
    within(start.elapsed(), 60, check(rep > dis, format!("reverse ppl: repeated {rep:.2}, distinct {dis:.2}")))
}

fn criterion_9() -> Outcome {
    let subjects = ["ann", "bob", "cy", "dee", "eve"];
    let verbs = ["likes", "sees", "helps", "calls"];
    let mut triples = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        for (j, v) in verbs.iter().enumerate() {
            triples.push(NliTriple {
                context: format!("{s} {v} the dog ."),
                entailed: format!("{s} {v} a dog ."),
                contradicting: format!("zed{i} never{j} any cat ?"),
            });
        }
    }
    let text: Vec<String> = triples
        .iter()
        .map(|t| format!("{} {} {} {}", t.context, t.entailed, t.context, t.entailed))
        .chain(triples.iter().map(|t| t.contradicting.clone()))
        .collect();
    let (_, vocab) = tokenize(&text.join(" "), Scheme::Word).map_err(|e| e.to_string())?;
    // The scorer memorizes context followed by entailed option only.
    let memorized: Vec<Vec<u32>> = triples
        .iter()
        .map(|t| vocab.encode(&format!("{} {}", t.context, t.entailed)))
        .collect::<qdeval::Result<_>>()
        .map_err(|e| e.to_string())?;
    let lm = NGramLm::fit(&memorized, 3, 0.01, vocab.clone()).map_err(|e| e.to_string())?;
    let a = selection_accuracy(&lm, &triples, &vocab).map_err(|e| e.to_string())?;
    let swapped: Vec<NliTriple> = triples.iter().map(NliTriple::swapped).collect();
    let b = selection_accuracy(&lm, &swapped, &vocab).map_err(|e| e.to_string())?;
    check(
        triples.len() == 20 && a.accuracy == 1.0 && b.accuracy == 0.0 && b.ties == 0,
        format!("20 triples: accuracy {}, swapped {} (ties {})", a.accuracy, b.accuracy, b.ties),
    )
}

fn criterion_10() -> Outcome {
    let pts: Vec<(f64, f64)> = [0.1, 0.5, 1.0, 2.0, 7.5, 40.0, 300.0].iter().map(|&x| (x, 2.0 * f64::ln(x) + 1.0)).collect();
    let fit = fit_log_curve(&pts).map_err(|e| e.to_string())?;
    let fit_ok = (fit.a - 2.0).abs() <= 1e-9 && (fit.b - 1.0).abs() <= 1e-9;
    // 3 models x (10 top-p + 9 top-k values) = 57 cells.
    let topp: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let topk: Vec<f64> = (1..=9).map(|k| k as f64).collect();
    let mut models = InMemoryModels::default();
    for (i, name) in ["m1", "m2", "m3"].iter().enumerate() {
        models = models.with(*name, Arc::new(UniformLm(10 + i)) as Arc<dyn LanguageModel>);
    }
    let cfg = SweepConfig {
        models: vec!["m1".into(), "m2".into(), "m3".into()],
        strategies: vec![
            StrategyGrid { name: "topp".into(), params: topp },
            StrategyGrid { name: "topk".into(), params: topk },
        ],
        prefix_len: 3,
        gen_len: 4,
        metrics: vec![MetricKind::SelfBleu, MetricKind::SeqRep4],
        ..SweepConfig::default()
    };
    let seqs: Vec<TokenSequence> = (0..4u32).map(|i| TokenSequence((0..8).map(|j| (i * 3 + j) % 10).collect())).collect();
    let data = SweepData { train: seqs.clone(), heldout: seqs };
    let out = run_sweep(&cfg, &data, &models, None).map_err(|e| e.to_string())?;
    let all_ok = out.records.iter().all(SweepRecord::is_ok);
    check(
        fit_ok && out.records.len() == 57 && all_ok,
        format!("fit a = {:.12}, b = {:.12}; 57-cell grid gave {} records", fit.a, fit.b, out.records.len()),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qdeval"))
        .args(["--config", "config.json"])
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("qdeval {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).expect("under root").to_path_buf(), fs::read(&p).expect("readable"));
            }
        }
    }
    out
}

fn criterion_11() -> Outcome {
    let config = serde_json::json!({
        "seed": 17,
        "ingest": { "input": "corpus.txt", "tokenizer": "word", "seq_len": 30 },
        "train": { "data": "data", "epochs": 2, "context": 3, "embed": 8, "hidden": 16,
                   "objectives": ["mle=1", "ul=0.5"], "ul_prefix_len": 10, "ul_gen_len": 10 },
        "sweep": { "data": "data", "models": ["model/model.lmek"],
                   "strategies": [{"name": "greedy"}, {"name": "topp", "params": [0.5, 0.9]}, {"name": "topk", "params": [5]}],
                   "prefix_len": 10, "gen_len": 10, "max_prompts": 40 },
        "eval": { "refs": "data/test.ids", "prefix_len": 10, "model": "model/model.lmek" }
    });
    let text = toy_corpus(23, 20_000);
    let mut trees = Vec::new();
    let mut roots = Vec::new();
    for _ in 0..2 {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = root.path();
        fs::write(dir.join("corpus.txt"), &text).map_err(|e| e.to_string())?;
        fs::write(dir.join("config.json"), serde_json::to_vec_pretty(&config).unwrap()).map_err(|e| e.to_string())?;
        run_cli(dir, &["--out-dir", "data", "ingest"])?;
        run_cli(dir, &["--out-dir", "model", "train"])?;
        run_cli(dir, &["--out-dir", "sweep", "sweep"])?;
        let samples = fs::read_dir(dir.join("sweep/samples"))
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .find(|p| p.to_string_lossy().contains("topp_0.9"))
            .ok_or("no topp 0.9 sample file")?;
        let samples = samples.strip_prefix(dir).unwrap().to_string_lossy().to_string();
        run_cli(dir, &["--out-dir", "eval", "eval", "quality", "--samples", &samples])?;
        run_cli(dir, &["--out-dir", "eval", "eval", "diversity", "--samples", &samples])?;
        trees.push(tree(dir));
        roots.push(root);
    }
    let (a, b) = (&trees[0], &trees[1]);
    let differing: Vec<_> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
    check(
        differing.is_empty() && a.len() > 15,
        format!("{} artifacts compared, {} differ {:?}", a.len(), differing.len(), differing),
    )
}

fn main() {
    // libtest flags such as --nocapture or a name filter are accepted and
    // ignored; `--list` must print nothing for tooling.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("metric oracles", criterion_1),
        ("BLEU hand case", criterion_2),
        ("sampler identities", criterion_3),
        ("sampling statistics", criterion_4),
        ("gradient suite", criterion_5),
        ("degeneration reproduction", criterion_6),
        ("trade-off direction", criterion_7),
        ("reverse-ppl direction", criterion_8),
        ("selection-accuracy oracle", criterion_9),
        ("log-fit recovery and grid count", criterion_10),
        ("end-to-end determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
