//! Word error rate, oracle WER, relative WER reduction and perplexity
//! bucket analysis.
//!
//! Corpus WER always sums error counts before dividing.

use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::nbest::NBestList;
use crate::ngram::NGramModel;
use crate::vocab::{detokenize_lossy, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`, undefined for an empty reference.
    pub fn wer(&self) -> Option<f64> {
        (self.reference_len > 0).then(|| self.errors() as f64 / self.reference_len as f64)
    }
}

impl Add for ErrorCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            reference_len: self.reference_len + o.reference_len,
        }
    }
}

impl AddAssign for ErrorCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ErrorCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Lowercases and splits on whitespace.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Unit-cost edit alignment of `hypothesis` against `reference`.
///
/// Among the minimal alignments, the one with the most substitutions is
/// counted; that fixes the deletions and insertions too, so swapping the
/// sides swaps D and I and keeps S. The backtrace then takes a substitution
/// (or match), a deletion, an insertion, in that order. An empty reference
/// is allowed here, for corpus aggregation.
pub fn word_errors<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> ErrorCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    // (edits, -substitutions), minimized lexicographically
    let mut cost = vec![(0usize, 0isize); (n + 1) * width];
    for i in 0..=n {
        cost[i * width] = (i, 0);
    }
    for (j, c) in cost.iter_mut().enumerate().take(width) {
        *c = (j, 0);
    }
    let differ = |i: usize, j: usize| usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
    let diag = |c: (usize, isize), d: usize| (c.0 + d, c.1 - d as isize);
    let gap = |c: (usize, isize)| (c.0 + 1, c.1);
    for i in 1..=n {
        for j in 1..=m {
            cost[i * width + j] = diag(cost[(i - 1) * width + j - 1], differ(i, j))
                .min(gap(cost[(i - 1) * width + j]))
                .min(gap(cost[i * width + j - 1]));
        }
    }
    let mut counts = ErrorCounts {
        reference_len: n,
        ..ErrorCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let d = differ(i, j);
            if here == diag(cost[(i - 1) * width + j - 1], d) {
                counts.substitutions += d;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == gap(cost[(i - 1) * width + j]) {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Single-pair WER counts; the reference must be non-empty.
pub fn wer<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> Result<ErrorCounts> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(word_errors(reference, hypothesis))
}

/// Index and counts of the hypothesis closest to the reference; ties go to
/// the higher-ranked hypothesis.
pub fn oracle_wer<R: AsRef<str>>(
    nbest: &NBestList,
    reference: &[R],
    vocab: &Vocabulary,
) -> Result<(usize, ErrorCounts)> {
    let mut best: Option<(usize, ErrorCounts)> = None;
    for (i, h) in nbest.hypotheses().iter().enumerate() {
        let words = detokenize_lossy(&h.tokens, vocab)?;
        let counts = word_errors(reference, &words);
        if best.is_none_or(|(_, b)| counts.errors() < b.errors()) {
            best = Some((i, counts));
        }
    }
    Ok(best.expect("N-best lists are never empty"))
}

/// Relative WER reduction `(baseline - new) / baseline`.
pub fn werr(baseline_wer: f64, new_wer: f64) -> Result<f64> {
    if baseline_wer == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((baseline_wer - new_wer) / baseline_wer)
}

/// One utterance for perplexity bucketing.
#[derive(Debug, Clone)]
pub struct BucketUtterance {
    /// Reference as the bucket LM's tokens (e.g. wordpieces).
    pub lm_tokens: Vec<String>,
    pub reference: Vec<String>,
    pub baseline: Vec<String>,
    pub fused: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketReport {
    pub bucket: usize,
    pub size: usize,
    pub mean_ppl: f64,
    pub baseline: ErrorCounts,
    pub fused: ErrorCounts,
    /// `None` when the bucket's baseline has no errors.
    pub werr: Option<f64>,
}

/// Sorts utterances by reference perplexity (ascending, stable), splits them
/// into `k` contiguous buckets (the first `len % k` get one extra) and
/// reports per-bucket corpus WER and WERR.
pub fn ppl_buckets(corpus: &[BucketUtterance], bucket_lm: &NGramModel, k: usize) -> Result<Vec<BucketReport>> {
    if k == 0 || corpus.len() < k {
        return Err(Error::CorpusTooSmall {
            size: corpus.len(),
            buckets: k,
        });
    }
    let mut scored: Vec<(f64, &BucketUtterance)> = corpus
        .iter()
        .map(|u| Ok((bucket_lm.perplexity(&u.lm_tokens)?, u)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let base = corpus.len() / k;
    let extra = corpus.len() % k;
    let mut reports = Vec::with_capacity(k);
    let mut start = 0;
    for bucket in 0..k {
        let size = base + usize::from(bucket < extra);
        let members = &scored[start..start + size];
        start += size;
        let baseline: ErrorCounts = members.iter().map(|(_, u)| word_errors(&u.reference, &u.baseline)).sum();
        let fused: ErrorCounts = members.iter().map(|(_, u)| word_errors(&u.reference, &u.fused)).sum();
        let werr = match (baseline.wer(), fused.wer()) {
            (Some(b), Some(f)) if b > 0.0 => Some(werr(b, f)?),
            _ => None,
        };
        reports.push(BucketReport {
            bucket,
            size,
            mean_ppl: members.iter().map(|(p, _)| p).sum::<f64>() / size as f64,
            baseline,
            fused,
            werr,
        });
    }
    Ok(reports)
}

/// `utt_id\tS\tD\tI\tN\twer` per row.
pub fn format_score_report<S: AsRef<str>>(rows: &[(S, ErrorCounts)]) -> String {
    let mut out = String::new();
    for (utt, c) in rows {
        let wer = c.wer().map_or_else(|| "NA".to_string(), |w| format!("{w:.6}"));
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            utt.as_ref(),
            c.substitutions,
            c.deletions,
            c.insertions,
            c.reference_len,
            wer
        )
        .unwrap();
    }
    out
}

/// `bucket\tmean_ppl\tbaseline_wer\tfused_wer\twerr` per bucket.
pub fn format_bucket_report(reports: &[BucketReport]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    let mut out = String::new();
    for r in reports {
        writeln!(
            out,
            "{}\t{:.6}\t{}\t{}\t{}",
            r.bucket,
            r.mean_ppl,
            fmt(r.baseline.wer()),
            fmt(r.fused.wer()),
            fmt(r.werr)
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbest::{Hypothesis, ScoreBundle};

    fn w(s: &str) -> Vec<String> {
        normalize_text(s)
    }

    #[test]
    fn wer_examples() {
        let c = wer(&w("a b c"), &w("a b c")).unwrap();
        assert_eq!((c.substitutions, c.deletions, c.insertions, c.reference_len), (0, 0, 0, 3));
        assert_eq!(c.wer(), Some(0.0));
        let c = wer(&w("a b c"), &w("a x c")).unwrap();
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 0, 0));
        assert!((c.wer().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let c = wer(&w("a b"), &w("")).unwrap();
        assert_eq!((c.substitutions, c.deletions, c.insertions), (0, 2, 0));
        assert_eq!(c.wer(), Some(1.0));
        assert!(matches!(wer(&w(""), &w("a")), Err(Error::EmptyReference)));
    }

    #[test]
    fn backtrace_prefers_substitution() {
        // "a b" vs "c": either S+D or D+S; never I
        let c = word_errors(&w("a b"), &w("c"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 1, 0));
        let c = word_errors(&w(""), &w("x y"));
        assert_eq!((c.insertions, c.reference_len), (2, 0));
        assert_eq!(c.wer(), None);
    }

    #[test]
    fn swapped_sides_count_the_same_substitutions() {
        // two cost-6 alignments exist, with 1 and with 3 substitutions
        let r = ["b", "a", "a", "a", "c", "b", "b"];
        let h = ["c", "b", "c", "a"];
        let (x, y) = (word_errors(&r, &h), word_errors(&h, &r));
        assert_eq!((x.substitutions, x.deletions, x.insertions), (3, 3, 0));
        assert_eq!((y.substitutions, y.deletions, y.insertions), (3, 0, 3));
    }

    #[test]
    fn normalization_is_lowercase_whitespace() {
        assert_eq!(normalize_text("  Hello\tWORLD \n"), vec!["hello", "world"]);
    }

    #[test]
    fn werr_examples() {
        assert!((werr(3.63, 3.11).unwrap() * 100.0 - 14.33).abs() < 0.01);
        assert!((werr(4.82, 4.70).unwrap() * 100.0 - 2.49).abs() < 0.01);
        assert_eq!(werr(2.5, 2.5).unwrap(), 0.0);
        assert!(matches!(werr(0.0, 1.0), Err(Error::ZeroBaseline)));
    }

    fn vocab() -> Vocabulary {
        Vocabulary::ctc(["<blank>", "▁a", "▁b", "▁c", "▁x", "▁y"]).unwrap()
    }

    fn list(seqs: &[&[u32]]) -> NBestList {
        NBestList::new(
            "u",
            seqs.iter()
                .map(|s| Hypothesis::new(s.to_vec(), ScoreBundle::default()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_picks_fewest_errors() {
        let v = vocab();
        let r = w("a b c");
        // errors 2, 1, 3
        let nb = list(&[&[1, 4, 5], &[1, 2, 4], &[4, 5, 4]]);
        let (i, c) = oracle_wer(&nb, &r, &v).unwrap();
        assert_eq!((i, c.errors()), (1, 1));
        let nb = list(&[&[4], &[1, 2, 3]]);
        assert_eq!(oracle_wer(&nb, &r, &v).unwrap().1.errors(), 0);
        let nb = list(&[&[1, 4, 3]]);
        assert_eq!(oracle_wer(&nb, &r, &v).unwrap().1, word_errors(&r, &w("a x c")));
    }

    #[test]
    fn oracle_ties_go_to_higher_rank() {
        let v = vocab();
        let nb = list(&[&[1, 4, 3], &[1, 2, 5]]);
        assert_eq!(oracle_wer(&nb, &w("a b c"), &v).unwrap().0, 0);
    }

    fn uniform_lm() -> NGramModel {
        NGramModel::train_add_one::<&str, &str>(&[], &["a", "b"], 1).unwrap()
    }

    fn utt(reference: &str, baseline: &str, fused: &str) -> BucketUtterance {
        BucketUtterance {
            lm_tokens: w(reference),
            reference: w(reference),
            baseline: w(baseline),
            fused: w(fused),
        }
    }

    #[test]
    fn buckets_split_evenly_and_keep_input_order_on_ties() {
        let lm = uniform_lm();
        let corpus: Vec<BucketUtterance> = (0..10)
            .map(|i| utt("a b", if i % 2 == 0 { "a" } else { "a b" }, "a b"))
            .collect();
        let reports = ppl_buckets(&corpus, &lm, 5).unwrap();
        assert_eq!(reports.iter().map(|r| r.size).collect::<Vec<_>>(), vec![2; 5]);
        // each bucket holds one erroneous and one clean baseline
        for r in &reports {
            assert_eq!(r.baseline.errors(), 1);
            assert_eq!(r.werr, Some(1.0));
        }
        let reports = ppl_buckets(&corpus[..7], &lm, 3).unwrap();
        assert_eq!(reports.iter().map(|r| r.size).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert!(matches!(
            ppl_buckets(&corpus[..2], &lm, 3),
            Err(Error::CorpusTooSmall { size: 2, buckets: 3 })
        ));
    }

    #[test]
    fn reports_render_tab_separated() {
        let c = word_errors(&w("a b c"), &w("a x"));
        let text = format_score_report(&[("u1", c)]);
        assert_eq!(text, "u1\t1\t1\t0\t3\t0.666667\n");
    }
}
