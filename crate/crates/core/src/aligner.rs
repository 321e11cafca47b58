//! Second-pass acoustic scoring by forced alignment.
//!
//! A word sequence is expanded through the lexicon into a [`PronGraph`]:
//! one chain of phone states per pronunciation, optional silence states
//! between words and at both ends. [`viterbi_align`] then finds the best
//! source-to-sink path together with the best monotone segmentation of the
//! frames, where every visited phone state occupies at least one frame and
//! every frame is consumed. The score is
//!
//! ```text
//! sum over frames of ln P(phone | frame) + sum of ln P(pronunciation | word)
//! ```
//!
//! i.e. the max-approximation `max_P P(P | Y) P(X | P)` with the phone
//! posteriors standing in for likelihoods.

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::nbest::Hypothesis;
use crate::posteriors::PosteriorMatrix;
use crate::vocab::{detokenize, TokenId, Vocabulary};

/// What a graph state stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Phone {
        word: usize,
        pronunciation: usize,
        position: usize,
    },
    /// Optional silence in slot `slot` (0 = before the first word).
    Silence { slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PronState {
    pub phone: TokenId,
    pub kind: StateKind,
}

/// Pronunciation DAG with an implicit single source and sink.
///
/// States are numbered in topological order. Arcs leaving the source are
/// in `starts`, arcs into the sink come from `finals` (weight 0). Arc
/// weights carry `ln P(pronunciation | word)` on the arc that enters the
/// first phone of a pronunciation and 0 elsewhere.
#[derive(Debug, Clone)]
pub struct PronGraph {
    states: Vec<PronState>,
    starts: Vec<(usize, f64)>,
    preds: Vec<Vec<(usize, f64)>>,
    finals: Vec<usize>,
}

impl PronGraph {
    pub fn states(&self) -> &[PronState] {
        &self.states
    }

    pub fn starts(&self) -> &[(usize, f64)] {
        &self.starts
    }

    pub fn predecessors(&self, state: usize) -> &[(usize, f64)] {
        &self.preds[state]
    }

    pub fn finals(&self) -> &[usize] {
        &self.finals
    }

    /// Number of distinct source-to-sink paths.
    pub fn path_count(&self) -> u128 {
        let mut ways = vec![0u128; self.states.len()];
        for &(s, _) in &self.starts {
            ways[s] += 1;
        }
        for s in 0..self.states.len() {
            for &(p, _) in &self.preds[s] {
                ways[s] += ways[p];
            }
        }
        self.finals.iter().map(|&f| ways[f]).sum()
    }

    /// Fewest phone states on any source-to-sink path.
    pub fn min_path_len(&self) -> usize {
        let mut dist = vec![usize::MAX; self.states.len()];
        for &(s, _) in &self.starts {
            dist[s] = 1;
        }
        for s in 0..self.states.len() {
            for &(p, _) in &self.preds[s] {
                if dist[p] != usize::MAX {
                    dist[s] = dist[s].min(dist[p] + 1);
                }
            }
        }
        self.finals.iter().map(|&f| dist[f]).min().unwrap_or(usize::MAX)
    }

    /// Summed arc weights along a frame-level state sequence, or `None`
    /// when the sequence is not a complete path through the graph.
    pub fn path_log_prior(&self, frame_states: &[usize]) -> Option<f64> {
        let first = *frame_states.first()?;
        let mut total = self.starts.iter().find(|(s, _)| *s == first)?.1;
        for w in frame_states.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            total += self.preds[w[1]].iter().find(|(p, _)| *p == w[0])?.1;
        }
        self.finals.contains(frame_states.last()?).then_some(total)
    }

    fn push(&mut self, phone: TokenId, kind: StateKind) -> usize {
        self.states.push(PronState { phone, kind });
        self.preds.push(Vec::new());
        self.states.len() - 1
    }

    /// Connects every frontier node (None = source) to `target`.
    fn connect(&mut self, frontier: &[Option<usize>], target: usize, weight: f64) {
        for &from in frontier {
            match from {
                None => self.starts.push((target, weight)),
                Some(p) => self.preds[target].push((p, weight)),
            }
        }
    }
}

/// Expands `words` into a pronunciation graph. `silence` enables optional
/// silence (with the given phone) before, between and after the words.
pub fn expand_pronunciations<S: AsRef<str>>(
    words: &[S],
    lexicon: &Lexicon,
    silence: Option<TokenId>,
) -> Result<PronGraph> {
    if words.is_empty() {
        return Err(Error::EmptyWords);
    }
    let mut g = PronGraph {
        states: Vec::new(),
        starts: Vec::new(),
        preds: Vec::new(),
        finals: Vec::new(),
    };
    let mut frontier: Vec<Option<usize>> = vec![None];
    let add_silence = |g: &mut PronGraph, frontier: &mut Vec<Option<usize>>, slot: usize| {
        if let Some(phone) = silence {
            let s = g.push(phone, StateKind::Silence { slot });
            g.connect(frontier, s, 0.0);
            frontier.push(Some(s));
        }
    };
    add_silence(&mut g, &mut frontier, 0);
    for (wi, word) in words.iter().enumerate() {
        let word = word.as_ref();
        let prons = lexicon
            .get(word)
            .ok_or_else(|| Error::OovWord(word.to_string()))?;
        let mut next_frontier = Vec::with_capacity(prons.len());
        for (pi, pron) in prons.iter().enumerate() {
            let mut prev = None;
            for (pos, &phone) in pron.phones.iter().enumerate() {
                let s = g.push(
                    phone,
                    StateKind::Phone {
                        word: wi,
                        pronunciation: pi,
                        position: pos,
                    },
                );
                match prev {
                    None => g.connect(&frontier, s, pron.prior.ln()),
                    Some(p) => g.preds[s].push((p, 0.0)),
                }
                prev = Some(s);
            }
            next_frontier.push(prev);
        }
        frontier = next_frontier;
        add_silence(&mut g, &mut frontier, wi + 1);
    }
    g.finals = frontier.into_iter().flatten().collect();
    Ok(g)
}

/// Best path through a graph, frame by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub score: f64,
    /// Phone id assigned to each frame.
    pub phones: Vec<TokenId>,
    /// Graph state occupied at each frame.
    pub states: Vec<usize>,
}

pub fn viterbi_align(posteriors: &PosteriorMatrix, graph: &PronGraph) -> Result<Alignment> {
    viterbi_align_with(posteriors, graph, None)
}

/// Viterbi alignment; `phone_log_priors`, when given, is subtracted from
/// every frame score (posterior-to-likelihood conversion).
pub fn viterbi_align_with(
    posteriors: &PosteriorMatrix,
    graph: &PronGraph,
    phone_log_priors: Option<&[f64]>,
) -> Result<Alignment> {
    let frames = posteriors.frames();
    let required = graph.min_path_len();
    if frames < required {
        return Err(Error::TooShort { required, frames });
    }
    if let Some(bad) = graph
        .states
        .iter()
        .find(|s| s.phone as usize >= posteriors.symbols())
    {
        return Err(Error::VocabMismatch(format!(
            "phone id {} outside a {}-symbol posterior matrix",
            bad.phone,
            posteriors.symbols()
        )));
    }
    if let Some(p) = phone_log_priors {
        if p.len() != posteriors.symbols() {
            return Err(Error::VocabMismatch("phone prior length differs from posterior width".into()));
        }
    }
    let emit = |t: usize, s: usize| {
        let phone = graph.states[s].phone as usize;
        posteriors.get(t, phone) - phone_log_priors.map_or(0.0, |p| p[phone])
    };

    let n = graph.states.len();
    const NONE: u32 = u32::MAX;
    let mut back = vec![NONE; frames * n];
    let mut score = vec![f64::NEG_INFINITY; n];
    for &(s, w) in &graph.starts {
        score[s] = w + emit(0, s);
    }
    let mut next = vec![f64::NEG_INFINITY; n];
    for t in 1..frames {
        for s in 0..n {
            let mut best = score[s];
            let mut from = s as u32;
            for &(p, w) in &graph.preds[s] {
                let cand = score[p] + w;
                if cand > best {
                    best = cand;
                    from = p as u32;
                }
            }
            next[s] = best + emit(t, s);
            back[t * n + s] = from;
        }
        std::mem::swap(&mut score, &mut next);
    }
    let (mut state, best) = graph
        .finals
        .iter()
        .map(|&f| (f, score[f]))
        .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if state == usize::MAX {
        return Err(Error::TooShort { required, frames });
    }
    let mut states = vec![0usize; frames];
    for t in (0..frames).rev() {
        states[t] = state;
        if t > 0 {
            state = back[t * n + state] as usize;
        }
    }
    let phones = states.iter().map(|&s| graph.states[s].phone).collect();
    Ok(Alignment {
        score: best,
        phones,
        states,
    })
}

/// What to do with hypotheses that cannot be aligned (OOV words, a
/// dangling wordpiece, no words at all, too few frames).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OovPolicy {
    Strict,
    /// Score the hypothesis as `frames * per_frame`.
    Floor { per_frame: f64 },
}

impl OovPolicy {
    /// `Floor` with `ln 1e-4` per frame.
    pub fn default_floor() -> Self {
        OovPolicy::Floor {
            per_frame: 1e-4f64.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOptions {
    /// Phone used for optional silence; `None` disables silence arcs.
    pub silence: Option<TokenId>,
    pub oov: OovPolicy,
    /// Per-phone log priors to divide out of the posteriors. Off by default.
    pub phone_log_priors: Option<Vec<f64>>,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            silence: None,
            oov: OovPolicy::Strict,
            phone_log_priors: None,
        }
    }
}

/// Force-aligns a hypothesis against phone posteriors, stores the result in
/// its `am` slot and returns it.
pub fn am_score(
    hypothesis: &mut Hypothesis,
    posteriors: &PosteriorMatrix,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    options: &AlignOptions,
) -> Result<f64> {
    let score = compute_am(&hypothesis.tokens, posteriors, lexicon, vocab, options)?;
    hypothesis.scores.am = Some(score);
    Ok(score)
}

fn compute_am(
    tokens: &[TokenId],
    posteriors: &PosteriorMatrix,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    options: &AlignOptions,
) -> Result<f64> {
    let attempt = || -> Result<f64> {
        let words = detokenize(tokens, vocab)?;
        let graph = expand_pronunciations(&words, lexicon, options.silence)?;
        Ok(viterbi_align_with(posteriors, &graph, options.phone_log_priors.as_deref())?.score)
    };
    match (attempt(), options.oov) {
        (Ok(score), _) => Ok(score),
        (
            Err(Error::OovWord(_) | Error::DanglingContinuation(_) | Error::EmptyWords | Error::TooShort { .. }),
            OovPolicy::Floor { per_frame },
        ) => Ok(posteriors.frames() as f64 * per_frame),
        (Err(e), _) => Err(e),
    }
}
