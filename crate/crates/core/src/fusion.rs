//! Log-linear score combination and second-pass N-best re-ranking.
//!
//! The fused score of a hypothesis is
//!
//! ```text
//! e2e + lambda_am * am + lambda_lm * lm - lambda_ilm * ilm
//! ```
//!
//! With `lambda_am = lambda_ilm = 0` this is plain shallow fusion; with
//! `lambda_am = 0` it is shallow fusion with internal-LM negation.

use std::fmt::Write as _;

use crate::aligner::{am_score, AlignOptions};
use crate::error::{Error, Result};
use crate::eval::{word_errors, ErrorCounts};
use crate::lexicon::Lexicon;
use crate::nbest::{Hypothesis, NBestList, ScoreBundle};
use crate::ngram::NGramModel;
use crate::posteriors::PosteriorMatrix;
use crate::vocab::{detokenize, detokenize_lossy, Vocabulary};
use crate::weights::FusionWeights;

/// Combines the components of `bundle`. Terms with a zero weight are
/// skipped entirely, so an absent or infinite component never leaks in.
pub fn fuse_scores(bundle: &ScoreBundle, weights: &FusionWeights) -> Result<f64> {
    let mut total = bundle.e2e;
    if weights.am() != 0.0 {
        let am = bundle.am.ok_or(Error::MissingComponent("am"))?;
        total += weights.am() * am;
    }
    if weights.lm() != 0.0 {
        total += weights.lm() * bundle.lm;
    }
    if weights.ilm() != 0.0 {
        total -= weights.ilm() * bundle.ilm;
    }
    Ok(total)
}

/// Stable re-sort by fused score, best first. Equal scores keep their
/// incoming order.
pub fn rerank(nbest: &NBestList, weights: &FusionWeights) -> Result<NBestList> {
    let mut scored: Vec<(f64, Hypothesis)> = nbest
        .hypotheses()
        .iter()
        .map(|h| Ok((fuse_scores(&h.scores, weights)?, h.clone())))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    NBestList::new(nbest.utterance(), scored.into_iter().map(|(_, h)| h).collect())
}

/// Adds a forced-alignment AM score to every hypothesis, keeping the order.
pub fn attach_am_scores(
    nbest: &NBestList,
    posteriors: &PosteriorMatrix,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    options: &AlignOptions,
) -> Result<NBestList> {
    let mut scored = nbest.clone();
    for h in scored.hypotheses_mut() {
        am_score(h, posteriors, lexicon, vocab, options)?;
    }
    Ok(scored)
}

/// [`attach_am_scores`] followed by [`rerank`].
pub fn rescore_nbest(
    nbest: &NBestList,
    posteriors: &PosteriorMatrix,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    weights: &FusionWeights,
    options: &AlignOptions,
) -> Result<NBestList> {
    rerank(&attach_am_scores(nbest, posteriors, lexicon, vocab, options)?, weights)
}

/// Replaces the `lm` slot with a word-level LM score of the detokenized
/// hypothesis (with `</s>`), for second-pass LM rescoring. Hypotheses that
/// do not detokenize or contain unknown words get `-inf`.
pub fn substitute_word_lm(nbest: &NBestList, word_lm: &NGramModel, vocab: &Vocabulary) -> Result<NBestList> {
    let mut out = nbest.clone();
    for h in out.hypotheses_mut() {
        h.scores.lm = match detokenize(&h.tokens, vocab) {
            Ok(words) => match word_lm.score_sequence(&words, true) {
                Ok(s) => s,
                Err(Error::OovToken(_)) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            },
            Err(Error::DanglingContinuation(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
    }
    Ok(out)
}

/// The internal-LM-negation weights whose ranking matches acoustic-model
/// fusion with `weights` when `am = e2e - ilm`:
/// `(0, lambda_lm / (1 + lambda_am), lambda_am / (1 + lambda_am))`.
pub fn equivalent_lm_weights(weights: &FusionWeights) -> Result<FusionWeights> {
    if weights.ilm() != 0.0 {
        return Err(Error::Weights("equivalence needs lambda_ilm = 0".into()));
    }
    let scale = 1.0 + weights.am();
    FusionWeights::new(0.0, weights.lm() / scale, weights.am() / scale)
}

/// Default tuning grid: each weight in {0, 0.1, ..., 1.0}, at most two of
/// them non-zero at once.
pub fn default_grid() -> Vec<FusionWeights> {
    let steps: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    let mut grid = Vec::new();
    for &a in &steps {
        for &l in &steps {
            for &i in &steps {
                if [a, l, i].iter().filter(|&&v| v != 0.0).count() <= 2 {
                    grid.push(FusionWeights::new(a, l, i).expect("grid values are valid"));
                }
            }
        }
    }
    grid
}

/// Grid search outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub weights: FusionWeights,
    pub errors: ErrorCounts,
    /// Every grid point with its corpus errors, in grid order.
    pub table: Vec<(FusionWeights, ErrorCounts)>,
}

impl TuneResult {
    pub fn wer(&self) -> f64 {
        self.errors.wer().unwrap_or(0.0)
    }

    /// `lambda_am\tlambda_lm\tlambda_ilm\twer` per grid point.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (w, e) in &self.table {
            let (a, l, i) = w.as_tuple();
            writeln!(out, "{a}\t{l}\t{i}\t{:.6}", e.wer().unwrap_or(0.0)).unwrap();
        }
        out
    }
}

/// Corpus errors of the top hypothesis of every list after re-ranking.
pub fn corpus_errors(
    dev: &[(NBestList, Vec<String>)],
    weights: &FusionWeights,
    vocab: &Vocabulary,
) -> Result<ErrorCounts> {
    let mut total = ErrorCounts::default();
    for (nbest, reference) in dev {
        let best = rerank(nbest, weights)?;
        let words = detokenize_lossy(&best.best().tokens, vocab)?;
        total += word_errors(reference, &words);
    }
    Ok(total)
}

/// Picks the grid point with the lowest corpus WER on `dev`. Ties go to
/// the lexicographically smaller `(lambda_am, lambda_lm, lambda_ilm)`.
pub fn tune_weights(
    dev: &[(NBestList, Vec<String>)],
    grid: &[FusionWeights],
    vocab: &Vocabulary,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if dev.is_empty() || dev.iter().all(|(_, r)| r.is_empty()) {
        return Err(Error::EmptyReference);
    }
    let mut table = Vec::with_capacity(grid.len());
    for w in grid {
        table.push((*w, corpus_errors(dev, w, vocab)?));
    }
    let (weights, errors) = *table
        .iter()
        .min_by(|(wa, ea), (wb, eb)| {
            ea.errors().cmp(&eb.errors()).then_with(|| {
                let (a, b) = (wa.as_tuple(), wb.as_tuple());
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.total_cmp(&b.2))
            })
        })
        .expect("grid is non-empty");
    Ok(TuneResult { weights, errors, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(e2e: f64, am: Option<f64>, lm: f64, ilm: f64) -> ScoreBundle {
        ScoreBundle { e2e, lm, ilm, am }
    }

    #[test]
    fn fuse_examples() {
        let b = bundle(-1.0, Some(-2.0), -3.0, -4.0);
        let w = FusionWeights::new(0.5, 0.3, 0.2).unwrap();
        assert!((fuse_scores(&b, &w).unwrap() - -2.1).abs() < 1e-12);
        assert_eq!(fuse_scores(&b, &FusionWeights::zero()).unwrap(), -1.0);
        let shallow = FusionWeights::new(0.0, 0.7, 0.0).unwrap();
        assert!((fuse_scores(&b, &shallow).unwrap() - (-1.0 + 0.7 * -3.0)).abs() < 1e-12);
    }

    #[test]
    fn missing_am_is_an_error_only_when_weighted() {
        let b = bundle(-1.0, None, f64::NEG_INFINITY, -4.0);
        assert!(matches!(
            fuse_scores(&b, &FusionWeights::new(0.1, 0.0, 0.0).unwrap()),
            Err(Error::MissingComponent("am"))
        ));
        assert_eq!(fuse_scores(&b, &FusionWeights::new(0.0, 0.0, 1.0).unwrap()).unwrap(), 3.0);
    }

    #[test]
    fn equivalent_weights_examples() {
        let w = equivalent_lm_weights(&FusionWeights::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(w.as_tuple(), (0.0, 0.0, 0.5));
        let w = equivalent_lm_weights(&FusionWeights::new(0.0, 0.4, 0.0).unwrap()).unwrap();
        assert_eq!(w.as_tuple(), (0.0, 0.4, 0.0));
        assert!(equivalent_lm_weights(&FusionWeights::new(0.0, 0.4, 0.1).unwrap()).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_grid();
        // 11^3 minus the 10^3 points with all three axes non-zero
        assert_eq!(grid.len(), 1331 - 1000);
        assert_eq!(grid[0], FusionWeights::zero());
    }

    #[test]
    fn rerank_is_stable_on_ties() {
        let hyps = vec![
            Hypothesis::new(vec![2], bundle(-1.0, None, 0.0, 0.0)),
            Hypothesis::new(vec![1], bundle(-1.0, None, 0.0, 0.0)),
            Hypothesis::new(vec![3], bundle(-0.5, None, 0.0, 0.0)),
        ];
        let list = NBestList::new("u", hyps).unwrap();
        let out = rerank(&list, &FusionWeights::zero()).unwrap();
        let order: Vec<u32> = out.hypotheses().iter().map(|h| h.tokens[0]).collect();
        assert_eq!(order, vec![3, 2, 1]);
    }
}
