//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use amfusion::aligner::{expand_pronunciations, viterbi_align};
use amfusion::decoder::{ctc_label_prob, prefix_beam_search, BeamConfig};
use amfusion::eval::{format_score_report, oracle_wer, wer, word_errors, ErrorCounts};
use amfusion::experiment::{decode_and_score, run_experiment, train_models, ExperimentConfig};
use amfusion::fusion::{equivalent_lm_weights, rerank};
use amfusion::lexicon::{Lexicon, LexiconEntry};
use amfusion::nbest::{format_nbest, Hypothesis, NBestList, ScoreBundle};
use amfusion::ngram::NGramModel;
use amfusion::synth::{gen_corpus, Mode, SynthConfig};
use amfusion::vocab::{detokenize_lossy, TokenId, Vocabulary};
use amfusion::FusionWeights;
use common::{
    alignment_combinations, brute_force_alignment, brute_force_best, edit_distance, random_posteriors, random_words,
    realizations, Rng,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn werr_arithmetic() -> Outcome {
    let cases = [
        (3.63, 3.11, 14.33),
        (3.30, 2.85, 13.64),
        (4.82, 4.70, 2.49),
        (11.75, 11.26, 4.17),
        (3.95, 3.63, 8.10),
    ];
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (b, n, want) in cases {
        let got = 100.0 * amfusion::eval::werr(b, n).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        detail.push(format!("{got:.2}"));
    }
    check(worst <= 0.01, format!("{} (max deviation {worst:.4} pp)", detail.join(", ")))
}

fn all_label_sequences(symbols: usize, max_len: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<TokenId>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for s in 1..symbols {
                let mut q = p.clone();
                q.push(s as TokenId);
                next.push(q);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn ctc_conservation() -> Outcome {
    let mut rng = Rng::new(2);
    let mut worst = 0.0f64;
    let instances = 60;
    for _ in 0..instances {
        let v = rng.range(2, 3);
        let t = rng.range(1, 5);
        let m = random_posteriors(&mut rng, t, v, 4.0);
        let mut total = 0.0;
        for labels in all_label_sequences(v, t) {
            if let Ok(lp) = ctc_label_prob(&m, &labels) {
                total += lp.exp();
            }
        }
        worst = worst.max((total - 1.0).abs());
    }
    check(worst <= 1e-6, format!("{instances} instances, max |sum - 1| = {worst:.2e}"))
}

fn toy_lm(rng: &mut Rng, names: &[&str], order: usize) -> NGramModel {
    let sentences: Vec<Vec<&str>> = (0..rng.range(1, 6))
        .map(|_| (0..rng.range(1, 4)).map(|_| names[rng.range(0, names.len() - 1)]).collect())
        .collect();
    NGramModel::train_add_one(&sentences, names, order).expect("toy LM trains")
}

fn beam_oracle() -> Outcome {
    let mut rng = Rng::new(3);
    let all = ["<blank>", "▁a", "▁b"];
    let (mut agree, mut total, mut with_lm) = (0, 0, 0);
    for case in 0..200 {
        let v = rng.range(2, 3);
        let t = rng.range(1, 5);
        let vocab = Vocabulary::ctc(all[..v].iter().copied()).expect("toy vocabulary");
        let names: Vec<&str> = all[1..v].to_vec();
        let m = random_posteriors(&mut rng, t, v, 5.0);
        let width = (0..=t).map(|k| (v - 1).pow(k as u32)).sum::<usize>();
        let lm = toy_lm(&mut rng, &names, 2);
        let ilm = toy_lm(&mut rng, &names, 1);
        let (l_lm, l_ilm) = if case % 2 == 0 { (0.0, 0.0) } else { (rng.uniform(), rng.uniform()) };
        with_lm += usize::from(l_lm > 0.0);
        let config = BeamConfig::new(width, 1)
            .with_lm(&lm, l_lm)
            .and_then(|c| c.with_ilm(&ilm, l_ilm))
            .map_err(|e| e.to_string())?;
        let got = prefix_beam_search(&m, &vocab, &config, "u").map_err(|e| e.to_string())?;
        let want = brute_force_best(&m, &vocab, Some((&lm, l_lm)), Some((&ilm, l_ilm)));
        agree += usize::from(got.best().tokens == want);
        total += 1;
    }
    check(
        agree == total,
        format!("{agree}/{total} top-1 identical ({with_lm} with LM/ILM attached)"),
    )
}

fn alignment_oracle() -> Outcome {
    let mut rng = Rng::new(4);
    let names = ["x", "y", "z"];
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 150 {
        let phones = rng.range(3, 5);
        let mut entries = Vec::new();
        for w in names {
            for _ in 0..rng.range(1, 2) {
                entries.push(LexiconEntry {
                    word: w.to_string(),
                    probability: Some(0.1 + 0.9 * rng.uniform()),
                    phones: (0..rng.range(1, 2)).map(|_| rng.range(1, phones - 1) as TokenId).collect(),
                });
            }
        }
        let lexicon = Lexicon::from_entries(entries).map_err(|e| e.to_string())?;
        let words: Vec<&str> = (0..rng.range(1, 2)).map(|_| names[rng.range(0, 2)]).collect();
        let silence = (rng.uniform() < 0.5).then_some(0);
        let frames = rng.range(1, 7);
        let real = realizations(&words, &lexicon, silence);
        let combos = alignment_combinations(&real, frames);
        if combos == 0 || combos > 200 {
            continue;
        }
        let m = random_posteriors(&mut rng, frames, phones, 4.0);
        let graph = expand_pronunciations(&words, &lexicon, silence).map_err(|e| e.to_string())?;
        let want = brute_force_alignment(&m, &real);
        let got = viterbi_align(&m, &graph).map(|a| a.score).unwrap_or(f64::NEG_INFINITY);
        let diff = if got == want { 0.0 } else { (got - want).abs() };
        worst = worst.max(diff);
        checked += 1;
    }
    check(worst <= 1e-9, format!("{checked} instances, max |viterbi - brute force| = {worst:.2e}"))
}

fn ranking_identity() -> Outcome {
    let mut rng = Rng::new(5);
    let mut same = 0;
    for _ in 0..1000 {
        let n = rng.range(2, 10);
        let hyps = (0..n)
            .map(|i| {
                let e2e = -20.0 * rng.uniform();
                let ilm = -20.0 * rng.uniform();
                let scores = ScoreBundle {
                    e2e,
                    lm: -20.0 * rng.uniform(),
                    ilm,
                    am: Some(e2e - ilm),
                };
                Hypothesis::new(vec![i as TokenId + 1], scores)
            })
            .collect();
        let list = NBestList::new("u", hyps).map_err(|e| e.to_string())?;
        let am = FusionWeights::new(2.0 * rng.uniform(), rng.uniform(), 0.0).map_err(|e| e.to_string())?;
        let lm = equivalent_lm_weights(&am).map_err(|e| e.to_string())?;
        let order = |w: &FusionWeights| -> Result<Vec<Vec<TokenId>>, String> {
            let r = rerank(&list, w).map_err(|e| e.to_string())?;
            Ok(r.hypotheses().iter().map(|h| h.tokens.clone()).collect())
        };
        same += usize::from(order(&am)? == order(&lm)?);
    }
    check(same == 1000, format!("{same}/1000 permutations identical"))
}

fn arpa_correctness() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/toy_bigram.arpa");
    let lm = NGramModel::load_arpa(path).map_err(|e| e.to_string())?;
    // probabilities worked out by hand from the listed n-grams and backoffs
    let cases: [(&[&str], bool, f64); 5] = [
        (&["a"], false, 0.5),
        (&["a", "b"], false, 0.5 * 0.5 * 0.2),
        (&["a", "c"], true, 0.5 * 0.5 * 0.1),
        (&["c", "a", "b"], true, 0.625 * 0.3 * 0.4 * (0.5 * 0.2) * (2.0 / 3.0 * 0.1)),
        (&["b", "a"], true, 0.25 * 0.6 * 0.2),
    ];
    let mut worst = 0.0f64;
    for (tokens, eos, p) in cases {
        let got = lm.score_sequence(tokens, eos).map_err(|e| e.to_string())?;
        worst = worst.max((got - p.ln()).abs());
    }
    let ppl = lm.perplexity(&["a", "b"]).map_err(|e| e.to_string())?;
    worst = worst.max((ppl - 300f64.powf(1.0 / 3.0)).abs());
    check(worst <= 1e-6, format!("5 sequences + 1 perplexity, max error {worst:.2e}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{:.2}%", 100.0 * x))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "WERR arithmetic", werr_arithmetic()),
        (2, "CTC probability conservation", ctc_conservation()),
        (3, "beam search vs brute force", beam_oracle()),
        (4, "forced alignment vs brute force", alignment_oracle()),
        (5, "AM fusion ranking identity", ranking_identity()),
        (6, "ARPA backoff scoring", arpa_correctness()),
    ];

    let start = Instant::now();
    let config = ExperimentConfig::default();
    let experiment = run_experiment(&config);
    let elapsed = start.elapsed().as_secs_f64();
    match &experiment {
        Ok(report) => {
            let (b, f, o) = (report.baseline.wer(), report.fused.wer(), report.oracle.wer());
            let werr = report.werr();
            let ordered = matches!((o, f, b), (Some(o), Some(f), Some(b)) if o <= f && f <= b);
            results.push((
                7,
                "synthetic mismatch experiment",
                check(
                    werr.is_some_and(|w| w >= 0.05) && ordered && elapsed <= 60.0,
                    format!(
                        "baseline {} fused {} oracle {} WERR {} with {} ({elapsed:.1}s)",
                        pct(b),
                        pct(f),
                        pct(o),
                        pct(werr),
                        report.tuning.weights
                    ),
                ),
            ));
            let low = report.buckets.first().and_then(|r| r.werr);
            let high = report.buckets.last().and_then(|r| r.werr);
            results.push((
                8,
                "perplexity bucket trend",
                check(
                    matches!((low, high), (Some(l), Some(h)) if h > l),
                    format!("lowest-PPL bucket WERR {} vs highest-PPL bucket WERR {}", pct(low), pct(high)),
                ),
            ));
        }
        Err(e) => {
            results.push((7, "synthetic mismatch experiment", Err(e.to_string())));
            results.push((8, "perplexity bucket trend", Err("experiment failed".into())));
        }
    }
    results.push((9, "evaluation oracles", evaluation_oracles(experiment.as_ref().ok())));
    results.push((10, "pipeline determinism", determinism()));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("PASS [{n:>2}] {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{n:>2}] {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        synth: SynthConfig {
            seed,
            vocab_size: 120,
            train_utterances: 300,
            dev_utterances: 20,
            test_utterances: 40,
            lm_text_utterances: 300,
            confusion_rate: 0.02,
            ..SynthConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn corpus_top1_and_oracle(lists: &[NBestList], refs: &[Vec<String>], vocab: &Vocabulary) -> Result<(ErrorCounts, ErrorCounts), String> {
    let mut top = ErrorCounts::default();
    let mut oracle = ErrorCounts::default();
    for (l, r) in lists.iter().zip(refs) {
        let words = detokenize_lossy(&l.best().tokens, vocab).map_err(|e| e.to_string())?;
        top += word_errors(r, &words);
        oracle += oracle_wer(l, r, vocab).map_err(|e| e.to_string())?.1;
    }
    Ok((top, oracle))
}

fn evaluation_oracles(experiment: Option<&amfusion::experiment::ExperimentReport>) -> Outcome {
    let mut rng = Rng::new(9);
    let alphabet = ["a", "b", "c", "d"];
    let mut exact = 0;
    for _ in 0..500 {
        let mut r = random_words(&mut rng, 8, &alphabet);
        if r.is_empty() {
            r.push("a".into());
        }
        let h = random_words(&mut rng, 8, &alphabet);
        let c = wer(&r, &h).map_err(|e| e.to_string())?;
        exact += usize::from(c.wer() == Some(edit_distance(&r, &h) as f64 / r.len() as f64));
    }
    let mut corpora = 0;
    let mut oracle_ok = true;
    if let Some(report) = experiment {
        oracle_ok &= report.oracle.errors() <= report.baseline.errors();
        corpora += 1;
    }
    for seed in 21..24 {
        let config = small_config(seed);
        let corpus = gen_corpus(&config.synth).map_err(|e| e.to_string())?;
        let models = train_models(&corpus, config.lm_order).map_err(|e| e.to_string())?;
        for split in [&corpus.dev, &corpus.test] {
            let lists = decode_and_score(&corpus, &models, &config, split).map_err(|e| e.to_string())?;
            let refs: Vec<Vec<String>> = split.iter().map(|u| u.words.clone()).collect();
            let (top, oracle) = corpus_top1_and_oracle(&lists, &refs, &corpus.wordpieces)?;
            oracle_ok &= oracle.errors() <= top.errors();
            corpora += 1;
        }
    }
    check(
        exact == 500 && oracle_ok,
        format!("{exact}/500 WER values exact; oracle <= top-1 on {corpora} corpora: {oracle_ok}"),
    )
}

/// synth -> decode -> rescore -> score, serialized to bytes.
fn pipeline_artifacts(seed: u64) -> Result<Vec<Vec<u8>>, String> {
    let err = |e: amfusion::Error| e.to_string();
    let config = small_config(seed);
    let corpus = gen_corpus(&config.synth).map_err(err)?;
    let models = train_models(&corpus, config.lm_order).map_err(err)?;
    let mut artifacts = vec![
        corpus.lexicon.to_tsv(&corpus.phonemes).map_err(err)?.into_bytes(),
        corpus.wordpieces.to_text().into_bytes(),
        models.lm.to_arpa().into_bytes(),
        models.ilm.to_arpa().into_bytes(),
    ];
    for u in &corpus.test {
        artifacts.push(corpus.posteriors(u, Mode::E2e).map_err(err)?.to_bytes());
        artifacts.push(corpus.posteriors(u, Mode::Phoneme).map_err(err)?.to_bytes());
    }
    let lists = decode_and_score(&corpus, &models, &config, &corpus.test).map_err(err)?;
    artifacts.push(format_nbest(&lists, &corpus.wordpieces).map_err(err)?.into_bytes());
    let weights = FusionWeights::new(0.5, config.lambda_lm, config.lambda_ilm).map_err(err)?;
    let rescored: Vec<NBestList> = lists.iter().map(|l| rerank(l, &weights)).collect::<Result<_, _>>().map_err(err)?;
    artifacts.push(format_nbest(&rescored, &corpus.wordpieces).map_err(err)?.into_bytes());
    let mut rows = Vec::new();
    for (l, u) in rescored.iter().zip(&corpus.test) {
        let words = detokenize_lossy(&l.best().tokens, &corpus.wordpieces).map_err(err)?;
        rows.push((u.id.clone(), word_errors(&u.words, &words)));
    }
    artifacts.push(format_score_report(&rows).into_bytes());
    Ok(artifacts)
}

fn determinism() -> Outcome {
    let a = pipeline_artifacts(5)?;
    let b = pipeline_artifacts(5)?;
    let bytes: usize = a.iter().map(Vec::len).sum();
    check(a == b, format!("{} artifacts ({bytes} bytes) identical across two runs", a.len()))
}
