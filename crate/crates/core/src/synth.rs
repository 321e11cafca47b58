//! Deterministic synthetic corpora with a controllable rare-token mismatch.
//!
//! Words are random consonant-vowel stems with an optional consonant
//! suffix, drawn from a Zipf distribution. Each word becomes the wordpiece
//! `▁stem` plus its suffix piece, and gets one or two random phoneme
//! pronunciations.
//!
//! Posterior matrices place mass `α` on the true symbol of every frame and
//! spread the rest over the other symbols with peaky random weights, drawn
//! once per symbol span. In the wordpiece ("e2e") mode the true mass of
//! rare tokens drops to `α(1 - δ)`; the phoneme matrices ignore `δ`.
//!
//! All randomness comes from ChaCha8 streams. Each utterance and mode gets
//! its own stream, seeded by mixing the corpus seed with the utterance
//! index through SplitMix64, so generation order does not matter.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, LexiconEntry};
use crate::posteriors::PosteriorMatrix;
use crate::vocab::{tokenize_words, TokenId, Vocabulary, BLANK, WORD_BOUNDARY};

pub const SILENCE: &str = "<sil>";
const SUFFIXES: [&str; 4] = ["s", "n", "t", "rk"];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
/// Mass given to every wrong symbol before renormalizing when `α = 1`.
const MASS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of distinct words.
    pub vocab_size: usize,
    /// Number of phonemes, not counting silence.
    pub phoneme_count: usize,
    pub zipf_exponent: f64,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    /// Extra text-only utterances for the external LM.
    pub lm_text_utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Chance of a blank span between two wordpiece spans (always present
    /// between repeats).
    pub blank_prob: f64,
    /// Chance of a silence span at each word boundary in phoneme mode.
    pub silence_prob: f64,
    pub accuracy: f64,
    pub rare_degradation: f64,
    /// Fraction of wordpiece types, by ascending training frequency, that
    /// count as rare.
    pub rare_quantile: f64,
    /// Smaller values concentrate the wrong-symbol mass on fewer symbols.
    pub noise_concentration: f64,
    /// Chance that a word is spoken as a different word. Both posterior
    /// modes see the spoken word, so no acoustic model can recover it.
    pub confusion_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            vocab_size: 400,
            phoneme_count: 30,
            zipf_exponent: 1.0,
            train_utterances: 2000,
            dev_utterances: 200,
            test_utterances: 500,
            lm_text_utterances: 4000,
            min_words: 4,
            max_words: 10,
            min_frames: 2,
            max_frames: 4,
            blank_prob: 0.3,
            silence_prob: 0.2,
            accuracy: 0.8,
            rare_degradation: 0.5,
            rare_quantile: 0.2,
            noise_concentration: 0.003,
            confusion_rate: 0.0,
        }
    }
}

impl SynthConfig {
    /// Wordpiece vocabulary size including blank.
    pub fn wordpiece_count(&self) -> usize {
        1 + self.vocab_size + SUFFIXES.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size == 0 || self.phoneme_count < 2 {
            return bad("need at least one word and two phonemes");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be finite and non-negative");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("word range must satisfy 1 <= min <= max");
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad("frame range must satisfy 1 <= min <= max");
        }
        for (name, p) in [
            ("blank_prob", self.blank_prob),
            ("silence_prob", self.silence_prob),
            ("confusion_rate", self.confusion_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.accuracy > 0.0 && self.accuracy <= 1.0) {
            return bad("accuracy must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.rare_degradation) {
            return bad("rare_degradation must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.rare_quantile) {
            return bad("rare_quantile must lie in [0, 1]");
        }
        if !(self.noise_concentration > 0.0 && self.noise_concentration.is_finite()) {
            return bad("noise_concentration must be positive");
        }
        let v = self.wordpiece_count() as f64;
        if self.accuracy * (1.0 - self.rare_degradation) <= 1.0 / v {
            return Err(Error::Config(format!(
                "rare-token accuracy {} is not above chance 1/{v}",
                self.accuracy * (1.0 - self.rare_degradation)
            )));
        }
        if self.accuracy <= 1.0 / (self.phoneme_count + 1) as f64 {
            return bad("phoneme accuracy is not above chance");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Wordpiece CTC posteriors (blank at id 0).
    E2e,
    /// Phoneme posteriors for forced alignment.
    Phoneme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// Reference transcript.
    pub words: Vec<String>,
    /// What was actually spoken; differs from `words` only through
    /// `confusion_rate`.
    pub spoken: Vec<String>,
    /// Corpus-wide index, used to derive the utterance's random streams.
    pub index: u64,
}

impl Utterance {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: SynthConfig,
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub lm_text: Vec<Utterance>,
    pub lexicon: Lexicon,
    pub wordpieces: Vocabulary,
    pub phonemes: Vocabulary,
    /// Wordpiece ids in the rare quantile.
    pub rare: BTreeSet<TokenId>,
}

impl Corpus {
    pub fn posteriors(&self, utterance: &Utterance, mode: Mode) -> Result<PosteriorMatrix> {
        gen_posteriors(&utterance.spoken, self, mode, utterance.index)
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream(seed: u64, index: u64, tag: u64) -> Rng {
    Rng(ChaCha8Rng::seed_from_u64(splitmix64(
        splitmix64(seed ^ splitmix64(index)) ^ tag,
    )))
}

const TAG_INVENTORY: u64 = 1;
const TAG_WORDS: u64 = 2;
const TAG_E2E: u64 = 3;
const TAG_PHONEME: u64 = 4;

struct Rng(ChaCha8Rng);

impl Rng {
    /// Uniform in [0, 1).
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `lo..=hi`.
    fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.range(0, items.len() - 1)]
    }

    /// Peaky positive weight: `Exp(1) * U^(1/β)`.
    fn noise_weight(&mut self, concentration: f64) -> f64 {
        let e = -libm::log(1.0 - self.uniform());
        e * libm::pow(self.uniform(), 1.0 / concentration)
    }

    /// Index drawn from a cumulative distribution.
    fn draw(&mut self, cdf: &[f64]) -> usize {
        let u = self.uniform() * cdf[cdf.len() - 1];
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }
}

struct WordSpec {
    stem: String,
    suffix: Option<usize>,
}

impl WordSpec {
    fn word(&self) -> String {
        match self.suffix {
            Some(s) => format!("{}{}", self.stem, SUFFIXES[s]),
            None => self.stem.clone(),
        }
    }
}

fn zipf_cdf(n: usize, exponent: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (0..n)
        .map(|r| {
            acc += 1.0 / libm::pow((r + 1) as f64, exponent);
            acc
        })
        .collect()
}

/// Generates the word inventory, lexicon, vocabularies and all splits.
pub fn gen_corpus(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = stream(config.seed, 0, TAG_INVENTORY);

    let mut seen = BTreeSet::new();
    let mut specs = Vec::with_capacity(config.vocab_size);
    while specs.len() < config.vocab_size {
        let syllables = rng.range(1, 3);
        let mut stem = String::new();
        for _ in 0..syllables {
            stem.push(char::from(*rng.pick(CONSONANTS)));
            stem.push(char::from(*rng.pick(VOWELS)));
        }
        if !seen.insert(stem.clone()) {
            continue;
        }
        let suffix = rng.chance(0.3).then(|| rng.range(0, SUFFIXES.len() - 1));
        specs.push(WordSpec { stem, suffix });
    }

    let phones: Vec<TokenId> = (1..=config.phoneme_count as TokenId).collect();
    let random_pron = |rng: &mut Rng, len: usize| -> Vec<TokenId> { (0..len).map(|_| *rng.pick(&phones)).collect() };
    let suffix_prons: Vec<Vec<TokenId>> = SUFFIXES.iter().map(|s| random_pron(&mut rng, s.len())).collect();
    let mut entries = Vec::new();
    for spec in &specs {
        let mut first = random_pron(&mut rng, spec.stem.len());
        if let Some(s) = spec.suffix {
            first.extend_from_slice(&suffix_prons[s]);
        }
        if rng.chance(0.3) {
            let mut second = first.clone();
            let at = rng.range(0, second.len() - 1);
            let old = second[at];
            while second[at] == old {
                second[at] = *rng.pick(&phones);
            }
            entries.push(LexiconEntry { word: spec.word(), probability: Some(0.6), phones: first });
            entries.push(LexiconEntry { word: spec.word(), probability: Some(0.4), phones: second });
        } else {
            entries.push(LexiconEntry { word: spec.word(), probability: Some(1.0), phones: first });
        }
    }
    let lexicon = Lexicon::from_entries(entries)?;

    let mut symbols = vec![BLANK.to_string()];
    symbols.extend(specs.iter().map(|s| format!("{WORD_BOUNDARY}{}", s.stem)));
    symbols.extend(SUFFIXES.iter().map(|s| s.to_string()));
    let wordpieces = Vocabulary::ctc(symbols)?;
    let mut phoneme_symbols = vec![SILENCE.to_string()];
    phoneme_symbols.extend((0..config.phoneme_count).map(|i| format!("p{i}")));
    let phonemes = Vocabulary::new(phoneme_symbols)?;

    let words: Vec<String> = specs.iter().map(WordSpec::word).collect();
    let cdf = zipf_cdf(words.len(), config.zipf_exponent);
    let mut next_index = 1u64;
    let mut split = |prefix: &str, count: usize| -> Vec<Utterance> {
        (0..count)
            .map(|i| {
                let index = next_index;
                next_index += 1;
                let mut rng = stream(config.seed, index, TAG_WORDS);
                let len = rng.range(config.min_words, config.max_words);
                let drawn: Vec<usize> = (0..len).map(|_| rng.draw(&cdf)).collect();
                let spoken = drawn
                    .iter()
                    .map(|&w| {
                        if words.len() > 1 && rng.chance(config.confusion_rate) {
                            loop {
                                let other = rng.draw(&cdf);
                                if other != w {
                                    return words[other].clone();
                                }
                            }
                        }
                        words[w].clone()
                    })
                    .collect();
                Utterance {
                    id: format!("{prefix}{i:05}"),
                    words: drawn.iter().map(|&w| words[w].clone()).collect(),
                    spoken,
                    index,
                }
            })
            .collect()
    };
    let train = split("train", config.train_utterances);
    let dev = split("dev", config.dev_utterances);
    let test = split("test", config.test_utterances);
    let lm_text = split("lm", config.lm_text_utterances);

    let mut counts: BTreeMap<TokenId, usize> = (1..wordpieces.len() as TokenId).map(|t| (t, 0)).collect();
    for u in &train {
        for t in tokenize_words(&u.words, &wordpieces)? {
            *counts.get_mut(&t).expect("all tokens are counted") += 1;
        }
    }
    let mut by_count: Vec<(usize, TokenId)> = counts.into_iter().map(|(t, c)| (c, t)).collect();
    by_count.sort();
    let n_rare = libm::floor(config.rare_quantile * by_count.len() as f64) as usize;
    let rare = by_count[..n_rare].iter().map(|&(_, t)| t).collect();

    Ok(Corpus {
        config: config.clone(),
        train,
        dev,
        test,
        lm_text,
        lexicon,
        wordpieces,
        phonemes,
        rare,
    })
}

/// Posteriors for one transcript. `index` selects the random stream, so a
/// transcript with the same index always yields the same matrix.
pub fn gen_posteriors<S: AsRef<str>>(words: &[S], corpus: &Corpus, mode: Mode, index: u64) -> Result<PosteriorMatrix> {
    let config = &corpus.config;
    // (symbol, mass on it)
    let mut spans: Vec<(TokenId, f64)> = Vec::new();
    let symbols;
    let mut rng;
    match mode {
        Mode::E2e => {
            symbols = corpus.wordpieces.len();
            rng = stream(config.seed, index, TAG_E2E);
            let tokens = tokenize_words(words, &corpus.wordpieces).map_err(|e| match e {
                Error::Untokenizable(w) => Error::OovWord(w),
                e => e,
            })?;
            let degraded = config.accuracy * (1.0 - config.rare_degradation);
            let mut prev = None;
            for t in tokens {
                if Some(t) == prev || (prev.is_some() && rng.chance(config.blank_prob)) {
                    spans.push((0, config.accuracy));
                }
                let mass = if corpus.rare.contains(&t) { degraded } else { config.accuracy };
                spans.push((t, mass));
                prev = Some(t);
            }
        }
        Mode::Phoneme => {
            symbols = corpus.phonemes.len();
            rng = stream(config.seed, index, TAG_PHONEME);
            let silence = corpus.phonemes.id(SILENCE).expect("silence is in the phoneme set");
            for (i, w) in words.iter().enumerate() {
                let w = w.as_ref();
                let prons = corpus.lexicon.get(w).ok_or_else(|| Error::OovWord(w.to_string()))?;
                if i > 0 && rng.chance(config.silence_prob) {
                    spans.push((silence, config.accuracy));
                }
                let mut u = rng.uniform();
                let mut chosen = &prons[prons.len() - 1];
                for p in prons {
                    if u < p.prior {
                        chosen = p;
                        break;
                    }
                    u -= p.prior;
                }
                spans.extend(chosen.phones.iter().map(|&p| (p, config.accuracy)));
            }
        }
    }
    if spans.is_empty() {
        return Err(Error::EmptyWords);
    }

    let mut values = Vec::new();
    let mut probs = vec![0.0f64; symbols];
    for (truth, mass) in spans {
        let frames = rng.range(config.min_frames, config.max_frames);
        for (s, p) in probs.iter_mut().enumerate() {
            *p = if s == truth as usize { 0.0 } else { rng.noise_weight(config.noise_concentration) };
        }
        let noise: f64 = probs.iter().sum();
        for (s, p) in probs.iter_mut().enumerate() {
            *p = if s == truth as usize {
                mass
            } else {
                (1.0 - mass) * *p / noise + MASS_FLOOR
            };
        }
        let z: f64 = probs.iter().sum();
        for _ in 0..frames {
            values.extend(probs.iter().map(|p| libm::log(p / z) as f32));
        }
    }
    PosteriorMatrix::new(values.len() / symbols, symbols, values)
}
