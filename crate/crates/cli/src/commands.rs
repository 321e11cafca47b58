use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use amfusion::aligner::{AlignOptions, OovPolicy};
use amfusion::decoder::{prefix_beam_search, BeamConfig};
use amfusion::eval::{
    format_bucket_report, format_score_report, normalize_text, oracle_wer, ppl_buckets, word_errors, BucketUtterance,
    ErrorCounts,
};
use amfusion::experiment::train_models;
use amfusion::fusion::{attach_am_scores, default_grid, rerank, substitute_word_lm, tune_weights};
use amfusion::nbest::{format_nbest, load_nbest};
use amfusion::synth::{gen_corpus, Mode, SynthConfig, Utterance};
use amfusion::transcripts::{load_transcripts, save_transcripts};
use amfusion::vocab::{detokenize_lossy, tokenize_words};
use amfusion::{Error, FusionWeights, Lexicon, NBestList, NGramModel, PosteriorMatrix, Result, Vocabulary};
use rayon::prelude::*;

use crate::args::{BucketsArgs, DecodeArgs, Oov, RescoreArgs, ScoreArgs, SynthArgs, TuneArgs};

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// `utt_id\tpath` rows; relative paths resolve against the list's folder.
pub fn read_list(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let base = path.parent().unwrap_or(Path::new(""));
    load_transcripts(path)?
        .into_iter()
        .enumerate()
        .map(|(i, (id, p))| {
            if p.is_empty() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!("list entry {id:?} has no path"),
                });
            }
            Ok((id, base.join(p)))
        })
        .collect()
}

fn top1_rows(lists: &[NBestList], vocab: &Vocabulary) -> Result<Vec<(String, String)>> {
    lists
        .iter()
        .map(|l| Ok((l.utterance().to_string(), detokenize_lossy(&l.best().tokens, vocab)?.join(" "))))
        .collect()
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        vocab_size: args.vocab_size,
        phoneme_count: args.phoneme_count,
        zipf_exponent: args.zipf_exponent,
        train_utterances: args.train_utterances,
        dev_utterances: args.dev_utterances,
        test_utterances: args.test_utterances,
        lm_text_utterances: args.lm_text_utterances,
        min_words: args.min_words,
        max_words: args.max_words,
        min_frames: args.min_frames,
        max_frames: args.max_frames,
        blank_prob: args.blank_prob,
        silence_prob: args.silence_prob,
        accuracy: args.accuracy,
        rare_degradation: args.rare_degradation,
        rare_quantile: args.rare_quantile,
        noise_concentration: args.noise_concentration,
        confusion_rate: args.confusion_rate,
    };
    let pool = pool(args.jobs)?;
    let corpus = gen_corpus(&config)?;
    let models = train_models(&corpus, args.lm_order)?;
    let dir = &args.out_dir;
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e });
    mkdir(&dir.join("e2e"))?;
    mkdir(&dir.join("phoneme"))?;

    corpus.wordpieces.save(dir.join("wordpieces.txt"))?;
    corpus.phonemes.save(dir.join("phonemes.txt"))?;
    corpus.lexicon.save(dir.join("lexicon.tsv"), &corpus.phonemes)?;
    models.lm.save_arpa(dir.join("lm.arpa"))?;
    models.ilm.save_arpa(dir.join("ilm.arpa"))?;
    models.word_lm.save_arpa(dir.join("word_lm.arpa"))?;
    let rows = |utts: &[Utterance]| utts.iter().map(|u| (u.id.clone(), u.text())).collect::<Vec<_>>();
    save_transcripts(dir.join("train.tsv"), &rows(&corpus.train))?;
    save_transcripts(dir.join("lm_text.tsv"), &rows(&corpus.lm_text))?;

    for (name, utts) in [("dev", &corpus.dev), ("test", &corpus.test)] {
        save_transcripts(dir.join(format!("{name}.tsv")), &rows(utts))?;
        pool.install(|| {
            utts.par_iter().try_for_each(|u| {
                corpus.posteriors(u, Mode::E2e)?.save(dir.join("e2e").join(format!("{}.fpm", u.id)))?;
                corpus.posteriors(u, Mode::Phoneme)?.save(dir.join("phoneme").join(format!("{}.fpm", u.id)))
            })
        })?;
        for kind in ["e2e", "phoneme"] {
            let list: Vec<(String, String)> = utts.iter().map(|u| (u.id.clone(), format!("{kind}/{}.fpm", u.id))).collect();
            save_transcripts(dir.join(format!("{name}.{kind}.list")), &list)?;
        }
    }
    eprintln!(
        "wrote {} train, {} dev, {} test utterances to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        dir.display()
    );
    Ok(())
}

pub fn decode(args: &DecodeArgs) -> Result<()> {
    let vocab = Vocabulary::load(&args.vocab)?;
    let lm = args.lm.as_ref().map(NGramModel::load_arpa).transpose()?;
    let ilm = args.ilm.as_ref().map(NGramModel::load_arpa).transpose()?;
    let mut config = BeamConfig::new(args.beam, args.nbest);
    match &lm {
        Some(m) => config = config.with_lm(m, args.lambda_lm)?,
        None => config.weights = FusionWeights::new(0.0, args.lambda_lm, 0.0)?,
    }
    match &ilm {
        Some(m) => config = config.with_ilm(m, args.lambda_ilm)?,
        None => config.weights = FusionWeights::new(0.0, config.weights.lm(), args.lambda_ilm)?,
    }
    if let Some(p) = args.prune_below {
        config = config.with_pruning(p);
    }
    config.validate()?;

    let inputs: Vec<(String, PathBuf)> = match (&args.posteriors, &args.list) {
        (Some(p), _) => {
            let id = args.utt.clone().unwrap_or_else(|| {
                p.file_stem().map_or_else(|| "utt".into(), |s| s.to_string_lossy().into_owned())
            });
            vec![(id, p.clone())]
        }
        (None, Some(list)) => read_list(list)?,
        (None, None) => unreachable!("clap requires one input"),
    };
    let lists: Vec<NBestList> = pool(args.jobs)?.install(|| {
        inputs
            .par_iter()
            .map(|(id, path)| prefix_beam_search(&PosteriorMatrix::load(path)?, &vocab, &config, id))
            .collect::<Result<_>>()
    })?;
    write_output(args.out.as_deref(), &format_nbest(&lists, &vocab)?)?;
    if let Some(p) = &args.text_out {
        save_transcripts(p, &top1_rows(&lists, &vocab)?)?;
    }
    Ok(())
}

pub fn rescore(args: &RescoreArgs) -> Result<()> {
    let vocab = Vocabulary::load(&args.vocab)?;
    let phonemes = Vocabulary::load(&args.phonemes)?;
    let lexicon = Lexicon::load(&args.lexicon, &phonemes)?;
    let weights = FusionWeights::new(args.lambda_am, args.lambda_lm, args.lambda_ilm)?;
    let mut lists = load_nbest(&args.nbest, &vocab)?;
    if let Some(p) = &args.word_lm {
        let word_lm = NGramModel::load_arpa(p)?;
        lists = lists
            .iter()
            .map(|l| substitute_word_lm(l, &word_lm, &vocab))
            .collect::<Result<_>>()?;
    }
    let silence = args
        .silence
        .as_deref()
        .map(|s| phonemes.id(s).ok_or_else(|| Error::VocabMismatch(format!("silence phone {s:?} is not in the inventory"))))
        .transpose()?;
    let options = AlignOptions {
        silence,
        oov: match args.oov {
            Oov::Strict => OovPolicy::Strict,
            Oov::Floor => OovPolicy::Floor { per_frame: args.oov_floor },
        },
        phone_log_priors: None,
    };

    let paths: HashMap<String, PathBuf> = match (&args.phoneme_posteriors, &args.phoneme_list) {
        (Some(p), _) => {
            if lists.len() != 1 {
                return Err(Error::Config(format!(
                    "--phoneme-posteriors covers one utterance but the N-best file has {}; use --phoneme-list",
                    lists.len()
                )));
            }
            HashMap::from([(lists[0].utterance().to_string(), p.clone())])
        }
        (None, Some(list)) => read_list(list)?.into_iter().collect(),
        (None, None) => unreachable!("clap requires one input"),
    };
    let rescored: Vec<NBestList> = pool(args.jobs)?.install(|| {
        lists
            .par_iter()
            .map(|l| {
                let path = paths.get(l.utterance()).ok_or_else(|| Error::MissingUtterance {
                    what: "phoneme posteriors",
                    utterance: l.utterance().to_string(),
                })?;
                let scored = attach_am_scores(l, &PosteriorMatrix::load(path)?, &lexicon, &vocab, &options)?;
                rerank(&scored, &weights)
            })
            .collect::<Result<_>>()
    })?;
    write_output(args.out.as_deref(), &format_nbest(&rescored, &vocab)?)?;
    if let Some(p) = &args.text_out {
        save_transcripts(p, &top1_rows(&rescored, &vocab)?)?;
    }
    Ok(())
}

fn references(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    Ok(load_transcripts(path)?
        .into_iter()
        .map(|(id, text)| (id, normalize_text(&text)))
        .collect())
}

fn reference_for<'a>(refs: &'a HashMap<String, Vec<String>>, utt: &str) -> Result<&'a Vec<String>> {
    refs.get(utt).ok_or_else(|| Error::MissingUtterance {
        what: "reference",
        utterance: utt.to_string(),
    })
}

pub fn tune(args: &TuneArgs) -> Result<()> {
    let vocab = Vocabulary::load(&args.vocab)?;
    let refs = references(&args.reference)?;
    let dev: Vec<(NBestList, Vec<String>)> = load_nbest(&args.nbest, &vocab)?
        .into_iter()
        .map(|l| {
            let r = reference_for(&refs, l.utterance())?.clone();
            Ok((l, r))
        })
        .collect::<Result<_>>()?;
    let axes = [&args.lambda_am_values, &args.lambda_lm_values, &args.lambda_ilm_values];
    let grid = if axes.iter().all(|a| a.is_empty()) {
        default_grid()
    } else {
        let axis = |v: &Vec<f64>| if v.is_empty() { vec![0.0] } else { v.clone() };
        let mut grid = Vec::new();
        for a in axis(axes[0]) {
            for l in axis(axes[1]) {
                for i in axis(axes[2]) {
                    grid.push(FusionWeights::new(a, l, i)?);
                }
            }
        }
        grid
    };
    let result = tune_weights(&dev, &grid, &vocab)?;
    if let Some(p) = &args.report {
        write_output(Some(p), &result.report())?;
    }
    let (a, l, i) = result.weights.as_tuple();
    println!("best\t{a}\t{l}\t{i}\t{:.6}", result.wer());
    Ok(())
}

fn percent(c: &ErrorCounts) -> String {
    c.wer().map_or_else(|| "NA".into(), |w| format!("{:.4}", 100.0 * w))
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let refs = load_transcripts(&args.reference)?;
    let (hyps, lists): (HashMap<String, Vec<String>>, Option<(Vec<NBestList>, Vocabulary)>) = match (&args.hyp, &args.nbest) {
        (Some(h), _) => (references(h)?, None),
        (None, Some(n)) => {
            let vocab = Vocabulary::load(args.vocab.as_ref().expect("clap requires --vocab with --nbest"))?;
            let lists = load_nbest(n, &vocab)?;
            let top = top1_rows(&lists, &vocab)?
                .into_iter()
                .map(|(id, t)| (id, normalize_text(&t)))
                .collect();
            (top, Some((lists, vocab)))
        }
        (None, None) => unreachable!("clap requires one hypothesis source"),
    };
    if let Some(extra) = hyps.keys().filter(|k| !refs.iter().any(|(r, _)| r == *k)).min() {
        return Err(Error::MissingUtterance {
            what: "reference",
            utterance: extra.clone(),
        });
    }
    let mut rows = Vec::with_capacity(refs.len());
    for (id, text) in &refs {
        let hyp = hyps.get(id).ok_or_else(|| Error::MissingUtterance {
            what: "hypothesis",
            utterance: id.clone(),
        })?;
        rows.push((id.clone(), word_errors(&normalize_text(text), hyp)));
    }
    let total: ErrorCounts = rows.iter().map(|(_, c)| *c).sum();
    if total.reference_len == 0 {
        return Err(Error::EmptyReference);
    }
    println!(
        "WER\t{}\tS={}\tD={}\tI={}\tN={}",
        percent(&total),
        total.substitutions,
        total.deletions,
        total.insertions,
        total.reference_len
    );
    if args.oracle {
        let (lists, vocab) = lists.as_ref().expect("clap requires --nbest with --oracle");
        let by_id: HashMap<&str, Vec<String>> = refs.iter().map(|(id, t)| (id.as_str(), normalize_text(t))).collect();
        let mut oracle = ErrorCounts::default();
        for l in lists {
            oracle += oracle_wer(l, &by_id[l.utterance()], vocab)?.1;
        }
        println!("oracle_WER\t{}", percent(&oracle));
    }
    if let Some(p) = &args.report {
        write_output(Some(p), &format_score_report(&rows))?;
    }
    Ok(())
}

pub fn buckets(args: &BucketsArgs) -> Result<()> {
    let refs = load_transcripts(&args.reference)?;
    let baseline = references(&args.baseline)?;
    let fused = references(&args.fused)?;
    let lm = NGramModel::load_arpa(&args.lm)?;
    let vocab = args.vocab.as_ref().map(Vocabulary::load).transpose()?;
    let corpus: Vec<BucketUtterance> = refs
        .iter()
        .map(|(id, text)| {
            let reference = normalize_text(text);
            let lm_tokens = match &vocab {
                Some(v) => tokenize_words(&reference, v)?
                    .iter()
                    .map(|&t| v.symbol(t).expect("tokenizer yields known ids").to_string())
                    .collect(),
                None => reference.clone(),
            };
            let pick = |m: &HashMap<String, Vec<String>>, what| {
                m.get(id).cloned().ok_or_else(|| Error::MissingUtterance {
                    what,
                    utterance: id.clone(),
                })
            };
            Ok(BucketUtterance {
                lm_tokens,
                baseline: pick(&baseline, "baseline hypothesis")?,
                fused: pick(&fused, "fused hypothesis")?,
                reference,
            })
        })
        .collect::<Result<_>>()?;
    let reports = ppl_buckets(&corpus, &lm, args.buckets)?;
    write_output(args.out.as_deref(), &format_bucket_report(&reports))
}
