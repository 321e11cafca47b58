//! Brute-force reference implementations shared by the oracle and
//! acceptance suites. Everything here enumerates instead of searching.

#![allow(dead_code)]

use std::collections::BTreeMap;

use amfusion::lexicon::Lexicon;
use amfusion::ngram::NGramModel;
use amfusion::posteriors::PosteriorMatrix;
use amfusion::vocab::{TokenId, Vocabulary};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Random normalized posteriors; rows are drawn from softmax of uniform
/// logits scaled by `sharpness`.
pub fn random_posteriors(rng: &mut Rng, frames: usize, symbols: usize, sharpness: f64) -> PosteriorMatrix {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let logits: Vec<f64> = (0..symbols).map(|_| sharpness * rng.uniform()).collect();
            let z = logits.iter().fold(f64::NEG_INFINITY, |acc, &l| log_add(acc, l));
            logits.iter().map(|l| l - z).collect()
        })
        .collect();
    PosteriorMatrix::from_rows(&rows).unwrap()
}

/// Every frame path, collapsed: label sequence -> log probability.
pub fn ctc_enumerate(m: &PosteriorMatrix) -> BTreeMap<Vec<TokenId>, f64> {
    let (t_max, v) = (m.frames(), m.symbols());
    let mut out = BTreeMap::new();
    let total = v.pow(t_max as u32);
    for code in 0..total {
        let mut c = code;
        let mut path = Vec::with_capacity(t_max);
        for _ in 0..t_max {
            path.push(c % v);
            c /= v;
        }
        let score: f64 = path.iter().enumerate().map(|(t, &s)| m.get(t, s)).sum();
        let mut labels = Vec::new();
        let mut prev = None;
        for &s in &path {
            if s != 0 && Some(s) != prev {
                labels.push(s as TokenId);
            }
            prev = Some(s);
        }
        let e = out.entry(labels).or_insert(f64::NEG_INFINITY);
        *e = log_add(*e, score);
    }
    out
}

/// Argmax of `e2e + lambda_lm * lm - lambda_ilm * ilm` over all collapsed
/// label sequences; ties go to the lexicographically smaller sequence.
pub fn brute_force_best(
    m: &PosteriorMatrix,
    vocab: &Vocabulary,
    lm: Option<(&NGramModel, f64)>,
    ilm: Option<(&NGramModel, f64)>,
) -> Vec<TokenId> {
    let score_with = |model: Option<(&NGramModel, f64)>, labels: &[TokenId]| -> f64 {
        model.map_or(0.0, |(model, lambda)| {
            if lambda == 0.0 {
                return 0.0;
            }
            let words: Vec<&str> = labels.iter().map(|&t| vocab.symbol(t).unwrap()).collect();
            lambda * model.score_sequence(&words, false).unwrap()
        })
    };
    let mut best: Option<(f64, Vec<TokenId>)> = None;
    for (labels, e2e) in ctc_enumerate(m) {
        let s = e2e + score_with(lm, &labels) - score_with(ilm, &labels);
        // BTreeMap iterates in ascending order, so strict > keeps the
        // smaller sequence on ties
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, labels));
        }
    }
    best.unwrap().1
}

/// Every phone sequence the words can be realized as, with its summed log
/// pronunciation prior. Optional silence can fill each of the `n + 1` gaps.
pub fn realizations(words: &[&str], lexicon: &Lexicon, silence: Option<TokenId>) -> Vec<(Vec<TokenId>, f64)> {
    let mut partial: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let with_silence = |partial: Vec<(Vec<TokenId>, f64)>| -> Vec<(Vec<TokenId>, f64)> {
        match silence {
            None => partial,
            Some(s) => partial
                .into_iter()
                .flat_map(|(p, w)| {
                    let mut sil = p.clone();
                    sil.push(s);
                    [(p, w), (sil, w)]
                })
                .collect(),
        }
    };
    partial = with_silence(partial);
    for word in words {
        let prons = lexicon.get(word).unwrap();
        partial = partial
            .into_iter()
            .flat_map(|(p, w)| {
                prons.iter().map(move |pron| {
                    let mut next = p.clone();
                    next.extend_from_slice(&pron.phones);
                    (next, w + pron.prior.ln())
                })
            })
            .collect();
        partial = with_silence(partial);
    }
    partial
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of (realization, segmentation) pairs for `frames` frames.
pub fn alignment_combinations(realizations: &[(Vec<TokenId>, f64)], frames: usize) -> u128 {
    realizations
        .iter()
        .map(|(p, _)| if p.is_empty() { 0 } else { binomial(frames - 1, p.len() - 1) })
        .sum()
}

/// Best score over every realization and every split of the frames into
/// non-empty consecutive segments, one per phone.
pub fn brute_force_alignment(m: &PosteriorMatrix, realizations: &[(Vec<TokenId>, f64)]) -> f64 {
    fn segment(m: &PosteriorMatrix, phones: &[TokenId], start: usize, acc: f64, best: &mut f64) {
        let frames = m.frames();
        if phones.is_empty() {
            if start == frames && acc > *best {
                *best = acc;
            }
            return;
        }
        let rest = phones.len() - 1;
        let mut score = acc;
        for end in start + 1..=frames - rest {
            score += m.get(end - 1, phones[0] as usize);
            segment(m, &phones[1..], end, score, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    for (phones, prior) in realizations {
        if !phones.is_empty() && phones.len() <= m.frames() {
            segment(m, phones, 0, *prior, &mut best);
        }
    }
    best
}

/// Plain Levenshtein distance between word sequences.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

pub fn random_words(rng: &mut Rng, max_len: usize, alphabet: &[&str]) -> Vec<String> {
    let len = rng.range(0, max_len);
    (0..len).map(|_| alphabet[rng.range(0, alphabet.len() - 1)].to_string()).collect()
}
