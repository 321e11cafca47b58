//! End-to-end synthetic mismatch experiment: generate a corpus, decode with
//! shallow fusion and internal-LM negation, rescore the N-best lists by
//! forced alignment, tune the acoustic-model weight on dev and report test
//! WER, oracle WER and perplexity buckets.

use std::fmt::Write as _;

use crate::aligner::{AlignOptions, OovPolicy};
use crate::decoder::{prefix_beam_search, BeamConfig};
use crate::error::Result;
use crate::eval::{oracle_wer, ppl_buckets, word_errors, BucketReport, BucketUtterance, ErrorCounts};
use crate::fusion::{attach_am_scores, rerank, tune_weights, TuneResult};
use crate::nbest::NBestList;
use crate::ngram::NGramModel;
use crate::synth::{gen_corpus, Corpus, Mode, SynthConfig, Utterance, SILENCE};
use crate::vocab::{detokenize_lossy, tokenize_words, Vocabulary};
use crate::weights::FusionWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub lm_order: usize,
    pub beam_width: usize,
    pub n_best: usize,
    /// Log-posterior below which symbols do not extend prefixes.
    pub prune_below: f64,
    pub lambda_lm: f64,
    pub lambda_ilm: f64,
    /// Candidate acoustic-model weights tried on dev.
    pub am_grid: Vec<f64>,
    pub buckets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig {
                confusion_rate: 0.02,
                ..SynthConfig::default()
            },
            lm_order: 2,
            beam_width: 8,
            n_best: 8,
            prune_below: 1e-4f64.ln(),
            lambda_lm: 0.3,
            lambda_ilm: 0.1,
            am_grid: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            buckets: 5,
        }
    }
}

/// Language models derived from a synthetic corpus.
#[derive(Debug, Clone)]
pub struct CorpusModels {
    /// Wordpiece LM on the LM text plus training transcripts.
    pub lm: NGramModel,
    /// Wordpiece LM on training transcripts only; stands in for the
    /// internal LM and ranks test utterances by perplexity.
    pub ilm: NGramModel,
    /// Word LM on the LM text plus training transcripts.
    pub word_lm: NGramModel,
}

fn token_sentences(utts: &[&Utterance], vocab: &Vocabulary) -> Result<Vec<Vec<String>>> {
    utts.iter()
        .map(|u| {
            let ids = tokenize_words(&u.words, vocab)?;
            Ok(ids.iter().map(|&t| vocab.symbol(t).expect("tokenizer yields known ids").to_string()).collect())
        })
        .collect()
}

pub fn train_models(corpus: &Corpus, order: usize) -> Result<CorpusModels> {
    let vocab = &corpus.wordpieces;
    let pieces: Vec<&str> = vocab.symbols()[1..].iter().map(String::as_str).collect();
    let train: Vec<&Utterance> = corpus.train.iter().collect();
    let external: Vec<&Utterance> = corpus.lm_text.iter().chain(&corpus.train).collect();
    let words: Vec<&str> = corpus.lexicon.words().collect();
    let word_sentences: Vec<Vec<String>> = external.iter().map(|u| u.words.clone()).collect();
    Ok(CorpusModels {
        lm: NGramModel::train_add_one(&token_sentences(&external, vocab)?, &pieces, order)?,
        ilm: NGramModel::train_add_one(&token_sentences(&train, vocab)?, &pieces, order)?,
        word_lm: NGramModel::train_add_one(&word_sentences, &words, order)?,
    })
}

/// Alignment options used for the synthetic phoneme model: optional
/// silence and a floor score for hypotheses that cannot be aligned.
pub fn align_options(corpus: &Corpus) -> AlignOptions {
    AlignOptions {
        silence: corpus.phonemes.id(SILENCE),
        oov: OovPolicy::default_floor(),
        phone_log_priors: None,
    }
}

/// First-pass decoding followed by AM scoring of every hypothesis. The
/// lists keep first-pass order.
pub fn decode_and_score(
    corpus: &Corpus,
    models: &CorpusModels,
    config: &ExperimentConfig,
    utterances: &[Utterance],
) -> Result<Vec<NBestList>> {
    let beam = BeamConfig::new(config.beam_width, config.n_best)
        .with_lm(&models.lm, config.lambda_lm)?
        .with_ilm(&models.ilm, config.lambda_ilm)?
        .with_pruning(config.prune_below);
    let options = align_options(corpus);
    utterances
        .iter()
        .map(|u| {
            let e2e = corpus.posteriors(u, Mode::E2e)?;
            let nbest = prefix_beam_search(&e2e, &corpus.wordpieces, &beam, &u.id)?;
            let phones = corpus.posteriors(u, Mode::Phoneme)?;
            attach_am_scores(&nbest, &phones, &corpus.lexicon, &corpus.wordpieces, &options)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub first_pass: FusionWeights,
    pub tuning: TuneResult,
    pub baseline: ErrorCounts,
    pub fused: ErrorCounts,
    pub oracle: ErrorCounts,
    pub buckets: Vec<BucketReport>,
    /// Test N-best lists in first-pass order, with AM scores attached.
    pub test_nbest: Vec<NBestList>,
}

impl ExperimentReport {
    /// Corpus WERR of fused over baseline; `None` when the baseline is
    /// error-free.
    pub fn werr(&self) -> Option<f64> {
        let (b, f) = (self.baseline.wer()?, self.fused.wer()?);
        (b > 0.0).then(|| (b - f) / b)
    }

    pub fn summary(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{:.2}", 100.0 * x));
        let mut out = String::new();
        writeln!(out, "first_pass\t{}", self.first_pass).unwrap();
        writeln!(out, "tuned\t{}", self.tuning.weights).unwrap();
        writeln!(out, "baseline_wer\t{}", pct(self.baseline.wer())).unwrap();
        writeln!(out, "fused_wer\t{}", pct(self.fused.wer())).unwrap();
        writeln!(out, "oracle_wer\t{}", pct(self.oracle.wer())).unwrap();
        writeln!(out, "werr\t{}", pct(self.werr())).unwrap();
        for b in &self.buckets {
            writeln!(
                out,
                "bucket{}\tppl={:.1}\tbaseline={}\tfused={}\twerr={}",
                b.bucket,
                b.mean_ppl,
                pct(b.baseline.wer()),
                pct(b.fused.wer()),
                pct(b.werr)
            )
            .unwrap();
        }
        out
    }
}

fn references(utts: &[Utterance]) -> impl Iterator<Item = Vec<String>> + '_ {
    utts.iter().map(|u| u.words.clone())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let corpus = gen_corpus(&config.synth)?;
    let models = train_models(&corpus, config.lm_order)?;
    let vocab = &corpus.wordpieces;
    let first_pass = FusionWeights::new(0.0, config.lambda_lm, config.lambda_ilm)?;

    let dev_nbest = decode_and_score(&corpus, &models, config, &corpus.dev)?;
    let dev: Vec<(NBestList, Vec<String>)> = dev_nbest.into_iter().zip(references(&corpus.dev)).collect();
    let grid: Vec<FusionWeights> = config
        .am_grid
        .iter()
        .map(|&a| first_pass.with_am(a))
        .collect::<Result<_>>()?;
    let tuning = tune_weights(&dev, &grid, vocab)?;

    let test_nbest = decode_and_score(&corpus, &models, config, &corpus.test)?;
    let mut baseline = ErrorCounts::default();
    let mut fused = ErrorCounts::default();
    let mut oracle = ErrorCounts::default();
    let mut bucket_input = Vec::with_capacity(corpus.test.len());
    for (nbest, u) in test_nbest.iter().zip(&corpus.test) {
        let base_words = detokenize_lossy(&nbest.best().tokens, vocab)?;
        let fused_words = detokenize_lossy(&rerank(nbest, &tuning.weights)?.best().tokens, vocab)?;
        baseline += word_errors(&u.words, &base_words);
        fused += word_errors(&u.words, &fused_words);
        oracle += oracle_wer(nbest, &u.words, vocab)?.1;
        let lm_tokens = tokenize_words(&u.words, vocab)?
            .iter()
            .map(|&t| vocab.symbol(t).expect("known id").to_string())
            .collect();
        bucket_input.push(BucketUtterance {
            lm_tokens,
            reference: u.words.clone(),
            baseline: base_words,
            fused: fused_words,
        });
    }
    let buckets = ppl_buckets(&bucket_input, &models.ilm, config.buckets)?;
    Ok(ExperimentReport {
        first_pass,
        tuning,
        baseline,
        fused,
        oracle,
        buckets,
        test_nbest,
    })
}
