//! Hypotheses, N-best lists and the N-best text format.
//!
//! One line per hypothesis, tab-separated:
//!
//! ```text
//! utt_id  rank  e2e  lm  ilm  am  text
//! ```
//!
//! `rank` is 1-based; `am` is `NA` before the second pass; `text` is the
//! hypothesis' token symbols joined by single spaces (empty for the empty
//! hypothesis). Scores are printed in shortest round-trip form, so a
//! write/read cycle reproduces them exactly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Component log-scores of one hypothesis. `-inf` marks an impossible one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreBundle {
    pub e2e: f64,
    pub lm: f64,
    pub ilm: f64,
    /// External acoustic model score, filled in by the second pass.
    pub am: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub scores: ScoreBundle,
}

impl Hypothesis {
    pub fn new(tokens: Vec<TokenId>, scores: ScoreBundle) -> Self {
        Self { tokens, scores }
    }
}

/// Hypotheses of one utterance, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    utterance: String,
    hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    pub fn new(utterance: impl Into<String>, hypotheses: Vec<Hypothesis>) -> Result<Self> {
        let utterance = utterance.into();
        if hypotheses.is_empty() {
            return Err(Error::EmptyNBest(utterance));
        }
        let mut seen = HashSet::with_capacity(hypotheses.len());
        for h in &hypotheses {
            if !seen.insert(h.tokens.as_slice()) {
                return Err(Error::DuplicateHypothesis(utterance));
            }
        }
        Ok(Self {
            utterance,
            hypotheses,
        })
    }

    pub fn utterance(&self) -> &str {
        &self.utterance
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn best(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }

    pub fn into_hypotheses(self) -> Vec<Hypothesis> {
        self.hypotheses
    }

    pub(crate) fn hypotheses_mut(&mut self) -> &mut [Hypothesis] {
        &mut self.hypotheses
    }
}

fn parse_score(field: &str, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::malformed(line, format!("bad {name} score {field:?}")))?;
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::malformed(line, format!("{name} score must be finite or -inf")));
    }
    Ok(v)
}

/// Renders lists in the N-best text format.
pub fn format_nbest(lists: &[NBestList], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for list in lists {
        for (rank, h) in list.hypotheses.iter().enumerate() {
            let s = &h.scores;
            let am = s.am.map_or_else(|| "NA".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                list.utterance,
                rank + 1,
                s.e2e,
                s.lm,
                s.ilm,
                am,
                vocab.render(&h.tokens)?
            )
            .unwrap();
        }
    }
    Ok(out)
}

/// Parses the N-best text format. Rows of one utterance must be contiguous
/// and ranked 1, 2, 3, ...
pub fn parse_nbest(text: &str, vocab: &Vocabulary) -> Result<Vec<NBestList>> {
    let mut lists: Vec<NBestList> = Vec::new();
    let mut current: Option<(String, Vec<Hypothesis>)> = None;
    let mut finished: HashSet<String> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::malformed(line, format!("expected 7 fields, found {}", fields.len())));
        }
        let utt = fields[0];
        let rank: usize = fields[1]
            .parse()
            .map_err(|_| Error::malformed(line, format!("bad rank {:?}", fields[1])))?;
        let am = match fields[5] {
            "NA" => None,
            f => Some(parse_score(f, line, "am")?),
        };
        let scores = ScoreBundle {
            e2e: parse_score(fields[2], line, "e2e")?,
            lm: parse_score(fields[3], line, "lm")?,
            ilm: parse_score(fields[4], line, "ilm")?,
            am,
        };
        let tokens = vocab.lookup_all(fields[6])?;
        if tokens.iter().any(|&t| vocab.blank() == Some(t)) {
            return Err(Error::malformed(line, "hypothesis contains the blank symbol"));
        }
        let same = current.as_ref().is_some_and(|(u, _)| u == utt);
        if !same {
            if let Some((u, hyps)) = current.take() {
                finished.insert(u.clone());
                lists.push(NBestList::new(u, hyps)?);
            }
            if finished.contains(utt) {
                return Err(Error::malformed(line, format!("rows of {utt} are not contiguous")));
            }
            current = Some((utt.to_string(), Vec::new()));
        }
        let (_, hyps) = current.as_mut().unwrap();
        if rank != hyps.len() + 1 {
            return Err(Error::malformed(line, format!("expected rank {}, found {rank}", hyps.len() + 1)));
        }
        hyps.push(Hypothesis::new(tokens, scores));
    }
    if let Some((u, hyps)) = current {
        lists.push(NBestList::new(u, hyps)?);
    }
    Ok(lists)
}

pub fn load_nbest(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<NBestList>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nbest(&text, vocab)
}

pub fn save_nbest(path: impl AsRef<Path>, lists: &[NBestList], vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_nbest(lists, vocab)?).map_err(|e| Error::io(path, e))
}
