//! First pass: CTC prefix beam search with shallow fusion.
//!
//! Each prefix carries the CTC mass of alignments ending in blank and in a
//! non-blank symbol, plus running external-LM and internal-LM scores. The
//! LM terms are charged once per emitted token (never for blanks or for a
//! repeated symbol that collapses), so a prefix is ranked by
//!
//! ```text
//! logsumexp(blank, non-blank) + lambda_lm * lm - lambda_ilm * ilm
//! ```
//!
//! No `</s>` term is added: the first pass only ever sees prefixes.
//! After every frame the candidates are cut back to the `beam_width` best,
//! ties going to the lexicographically smaller token sequence.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fusion::fuse_scores;
use crate::logmath::{log_add, log_sum_exp};
use crate::nbest::{Hypothesis, NBestList, ScoreBundle};
use crate::ngram::NGramModel;
use crate::posteriors::PosteriorMatrix;
use crate::vocab::{TokenId, Vocabulary};
use crate::weights::FusionWeights;

#[derive(Debug, Clone, Copy)]
pub struct BeamConfig<'m> {
    pub beam_width: usize,
    pub n_best: usize,
    /// `lambda_am` is ignored in the first pass.
    pub weights: FusionWeights,
    pub lm: Option<&'m NGramModel>,
    pub ilm: Option<&'m NGramModel>,
    /// Symbols whose frame log-posterior falls below this are not used to
    /// extend prefixes. `-inf` (the default) keeps the search exhaustive.
    pub prune_below: f64,
}

impl<'m> BeamConfig<'m> {
    /// Pure CTC search without language models.
    pub fn new(beam_width: usize, n_best: usize) -> Self {
        Self {
            beam_width,
            n_best,
            weights: FusionWeights::zero(),
            lm: None,
            ilm: None,
            prune_below: f64::NEG_INFINITY,
        }
    }

    pub fn with_pruning(mut self, log_threshold: f64) -> Self {
        self.prune_below = log_threshold;
        self
    }

    pub fn with_lm(mut self, lm: &'m NGramModel, lambda: f64) -> Result<Self> {
        self.lm = Some(lm);
        self.weights = FusionWeights::new(self.weights.am(), lambda, self.weights.ilm())?;
        Ok(self)
    }

    pub fn with_ilm(mut self, ilm: &'m NGramModel, lambda: f64) -> Result<Self> {
        self.ilm = Some(ilm);
        self.weights = FusionWeights::new(self.weights.am(), self.weights.lm(), lambda)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_best == 0 {
            return Err(Error::Config("n_best must be at least 1".into()));
        }
        if self.beam_width < self.n_best {
            return Err(Error::Config(format!(
                "beam_width {} is smaller than n_best {}",
                self.beam_width, self.n_best
            )));
        }
        if self.weights.lm() > 0.0 && self.lm.is_none() {
            return Err(Error::Config("lambda_lm > 0 requires an external LM".into()));
        }
        if self.weights.ilm() > 0.0 && self.ilm.is_none() {
            return Err(Error::Config("lambda_ilm > 0 requires an internal LM".into()));
        }
        Ok(())
    }
}

/// An LM whose ids have been matched against the decoder vocabulary.
struct BoundLm<'m> {
    model: &'m NGramModel,
    /// decoder token id -> LM id (blank maps to nothing)
    map: Vec<u32>,
}

impl<'m> BoundLm<'m> {
    fn bind(model: &'m NGramModel, vocab: &Vocabulary, role: &str) -> Result<Self> {
        let mut map = Vec::with_capacity(vocab.len());
        for (id, sym) in vocab.symbols().iter().enumerate() {
            if vocab.blank() == Some(id as TokenId) {
                map.push(u32::MAX);
                continue;
            }
            let lm_id = model.token_id(sym).map_err(|_| {
                Error::VocabMismatch(format!("{role} has no entry for token {sym:?}"))
            })?;
            map.push(lm_id);
        }
        Ok(Self { model, map })
    }

    fn extend(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        let keep = self.model.order() - 1;
        let mut context = self.model.start_context();
        let tail = &prefix[prefix.len().saturating_sub(keep)..];
        context.extend(tail.iter().map(|&t| self.map[t as usize]));
        self.model.cond_logprob(&context, self.map[token as usize])
    }
}

#[derive(Debug, Clone, Copy)]
struct PrefixState {
    blank: f64,
    non_blank: f64,
    lm: f64,
    ilm: f64,
}

impl PrefixState {
    fn new(lm: f64, ilm: f64) -> Self {
        Self {
            blank: f64::NEG_INFINITY,
            non_blank: f64::NEG_INFINITY,
            lm,
            ilm,
        }
    }

    fn total(&self) -> f64 {
        log_add(self.blank, self.non_blank)
    }

    fn bundle(&self) -> ScoreBundle {
        ScoreBundle {
            e2e: self.total(),
            lm: self.lm,
            ilm: self.ilm,
            am: None,
        }
    }
}

/// Higher fused score first, then the lexicographically smaller prefix.
fn rank(a: (f64, &[TokenId]), b: (f64, &[TokenId])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Runs prefix beam search over a CTC posterior matrix (blank at id 0).
pub fn prefix_beam_search(
    posteriors: &PosteriorMatrix,
    vocab: &Vocabulary,
    config: &BeamConfig<'_>,
    utterance: &str,
) -> Result<NBestList> {
    config.validate()?;
    let blank = vocab
        .blank()
        .ok_or_else(|| Error::VocabMismatch("decoder vocabulary has no blank at id 0".into()))?;
    if posteriors.symbols() != vocab.len() {
        return Err(Error::VocabMismatch(format!(
            "posteriors have {} symbols, vocabulary has {}",
            posteriors.symbols(),
            vocab.len()
        )));
    }
    if vocab.len() < 2 {
        return Err(Error::VocabMismatch("CTC needs blank plus at least one symbol".into()));
    }
    let lm = config.lm.map(|m| BoundLm::bind(m, vocab, "external LM")).transpose()?;
    let ilm = config.ilm.map(|m| BoundLm::bind(m, vocab, "internal LM")).transpose()?;
    let weights = config.weights.without_am();
    let fused = |s: &PrefixState| fuse_scores(&s.bundle(), &weights).expect("first-pass bundles are complete");

    let mut beam: Vec<(Vec<TokenId>, PrefixState)> = vec![(
        Vec::new(),
        PrefixState {
            blank: 0.0,
            ..PrefixState::new(0.0, 0.0)
        },
    )];

    for t in 0..posteriors.frames() {
        let row = posteriors.row(t);
        let mut next: BTreeMap<Vec<TokenId>, PrefixState> = BTreeMap::new();
        for (prefix, state) in &beam {
            let total = state.total();
            let stay = next
                .entry(prefix.clone())
                .or_insert_with(|| PrefixState::new(state.lm, state.ilm));
            stay.blank = log_add(stay.blank, total + f64::from(row[blank as usize]));
            let last = prefix.last().copied();
            for (c, &y) in row.iter().enumerate() {
                let c = c as TokenId;
                if c == blank {
                    continue;
                }
                let y = f64::from(y);
                if y < config.prune_below && Some(c) != last {
                    continue;
                }
                if Some(c) == last {
                    let stay = next.get_mut(prefix).expect("inserted above");
                    stay.non_blank = log_add(stay.non_blank, state.non_blank + y);
                }
                let mut extended = prefix.clone();
                extended.push(c);
                let entry = next.entry(extended).or_insert_with(|| {
                    let lm_step = lm.as_ref().map_or(0.0, |m| m.extend(prefix, c));
                    let ilm_step = ilm.as_ref().map_or(0.0, |m| m.extend(prefix, c));
                    PrefixState::new(state.lm + lm_step, state.ilm + ilm_step)
                });
                let source = if Some(c) == last { state.blank } else { total };
                entry.non_blank = log_add(entry.non_blank, source + y);
            }
        }
        let mut scored: Vec<(f64, Vec<TokenId>, PrefixState)> =
            next.into_iter()
                .filter(|(_, s)| s.total() > f64::NEG_INFINITY)
                .map(|(p, s)| (fused(&s), p, s))
                .collect();
        scored.sort_by(|a, b| rank((a.0, &a.1), (b.0, &b.1)));
        scored.truncate(config.beam_width);
        beam = scored.into_iter().map(|(_, p, s)| (p, s)).collect();
    }

    let hypotheses = beam
        .into_iter()
        .take(config.n_best)
        .map(|(tokens, state)| Hypothesis::new(tokens, state.bundle()))
        .collect();
    NBestList::new(utterance, hypotheses)
}

/// Exact CTC log-probability of `labels` (forward algorithm over every
/// alignment that collapses to them). Blank is id 0.
pub fn ctc_label_prob(posteriors: &PosteriorMatrix, labels: &[TokenId]) -> Result<f64> {
    let blank = 0usize;
    let frames = posteriors.frames();
    if let Some(&bad) = labels
        .iter()
        .find(|&&l| l as usize == blank || l as usize >= posteriors.symbols())
    {
        return Err(Error::InvalidToken(bad));
    }
    let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
    let required = labels.len() + repeats;
    if required > frames {
        return Err(Error::LabelsTooLong { required, frames });
    }
    // extended sequence: blank, l1, blank, l2, ..., blank
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(labels.iter().flat_map(|&l| [l as usize, blank]))
        .collect();
    let n = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; n];
    alpha[0] = posteriors.get(0, ext[0]);
    if n > 1 {
        alpha[1] = posteriors.get(0, ext[1]);
    }
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..frames {
        for s in 0..n {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = acc + posteriors.get(t, ext[s]);
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    Ok(if n > 1 {
        log_sum_exp([alpha[n - 1], alpha[n - 2]])
    } else {
        alpha[0]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_ab() -> Vocabulary {
        Vocabulary::ctc(["<blank>", "a"]).unwrap()
    }

    #[test]
    fn single_frame_enumeration() {
        let m = PosteriorMatrix::from_rows(&[[0.4f64.ln(), 0.6f64.ln()]]).unwrap();
        let nbest = prefix_beam_search(&m, &vocab_ab(), &BeamConfig::new(2, 2), "u").unwrap();
        let h = nbest.hypotheses();
        assert_eq!(h[0].tokens, vec![1]);
        assert!((h[0].scores.e2e - f64::from(0.6f32.ln())).abs() < 1e-6);
        assert_eq!(h[1].tokens, Vec::<TokenId>::new());
        assert!((h[1].scores.e2e - f64::from(0.4f32.ln())).abs() < 1e-6);
        assert_eq!(h[0].scores.am, None);
    }

    #[test]
    fn ctc_examples() {
        let m = PosteriorMatrix::from_rows(&[[0.4f64.ln(), 0.6f64.ln()]]).unwrap();
        assert!((ctc_label_prob(&m, &[1]).unwrap() - m.get(0, 1)).abs() < 1e-12);
        let half = 0.5f64.ln();
        let u = PosteriorMatrix::from_rows(&[[half, half], [half, half]]).unwrap();
        // aa, a-, -a collapse to "a"
        assert!((ctc_label_prob(&u, &[1]).unwrap() - 0.75f64.ln()).abs() < 1e-6);
        let empty = ctc_label_prob(&u, &[]).unwrap();
        assert!((empty - (u.get(0, 0) + u.get(1, 0))).abs() < 1e-12);
    }

    #[test]
    fn repeated_labels_need_a_separating_blank() {
        let half = 0.5f64.ln();
        let u = PosteriorMatrix::from_rows(&[[half, half], [half, half]]).unwrap();
        assert!(matches!(
            ctc_label_prob(&u, &[1, 1]),
            Err(Error::LabelsTooLong { required: 3, frames: 2 })
        ));
        assert!(ctc_label_prob(&u, &[1, 1, 1]).is_err());
    }

    #[test]
    fn config_errors() {
        let m = PosteriorMatrix::from_rows(&[[0.4f64.ln(), 0.6f64.ln()]]).unwrap();
        let v = vocab_ab();
        assert!(prefix_beam_search(&m, &v, &BeamConfig::new(1, 2), "u").is_err());
        assert!(prefix_beam_search(&m, &v, &BeamConfig::new(1, 0), "u").is_err());
        let mut cfg = BeamConfig::new(2, 1);
        cfg.weights = FusionWeights::new(0.0, 0.5, 0.0).unwrap();
        assert!(prefix_beam_search(&m, &v, &cfg, "u").is_err());
        let wide = Vocabulary::ctc(["<blank>", "a", "b"]).unwrap();
        assert!(matches!(
            prefix_beam_search(&m, &wide, &BeamConfig::new(2, 1), "u"),
            Err(Error::VocabMismatch(_))
        ));
    }

    #[test]
    fn lm_vocabulary_must_cover_decoder_tokens() {
        let m = PosteriorMatrix::from_rows(&[[0.4f64.ln(), 0.6f64.ln()]]).unwrap();
        let lm = NGramModel::train_add_one(&[vec!["b"]], &["b"], 1).unwrap();
        let cfg = BeamConfig::new(2, 1).with_lm(&lm, 0.5).unwrap();
        assert!(matches!(
            prefix_beam_search(&m, &vocab_ab(), &cfg, "u"),
            Err(Error::VocabMismatch(_))
        ));
    }
}
