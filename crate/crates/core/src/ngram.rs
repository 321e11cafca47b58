//! Backoff n-gram language models in ARPA format.
//!
//! Probabilities are stored as natural logs; ARPA's base-10 values are
//! converted at load and converted back on write. A conditional probability
//! resolves with the usual backoff rule: use `P(w | h)` when the n-gram
//! `h w` is listed, otherwise `bow(h) * P(w | h')` where `h'` drops the
//! oldest word of `h` and `bow(h)` is 1 when `h` is not listed.
//!
//! The same type serves as the external LM, as the internal-LM proxy
//! trained on E2E transcripts, and as the LM used for perplexity buckets.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::LN_10;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Highest supported order.
pub const MAX_ORDER: usize = 8;

/// Base-10 log-probability ARPA files conventionally give `<s>`.
const BOS_LOG10: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    logprob: f64,
    backoff: f64,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    words: Vec<String>,
    ids: HashMap<String, u32>,
    /// `tables[k]` holds the (k+1)-grams.
    tables: Vec<HashMap<Vec<u32>, Entry>>,
    bos: Option<u32>,
    eos: Option<u32>,
    unk: Option<u32>,
    map_unk: bool,
}

impl NGramModel {
    fn empty(order: usize) -> Self {
        Self {
            order,
            words: Vec::new(),
            ids: HashMap::new(),
            tables: vec![HashMap::new(); order],
            bos: None,
            eos: None,
            unk: None,
            map_unk: false,
        }
    }

    fn add_word(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_string());
        self.ids.insert(word.to_string(), id);
        match word {
            BOS => self.bos = Some(id),
            EOS => self.eos = Some(id),
            UNK => self.unk = Some(id),
            _ => {}
        }
        id
    }

    pub fn load_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_arpa(&text)
    }

    pub fn parse_arpa(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .peekable();

        // skip anything before \data\
        loop {
            match lines.next() {
                Some((_, "\\data\\")) => break,
                Some(_) => continue,
                None => return Err(Error::malformed(0, "missing \\data\\ header")),
            }
        }
        let mut declared: Vec<usize> = Vec::new();
        while let Some(&(line, l)) = lines.peek() {
            let Some(spec) = l.strip_prefix("ngram ") else { break };
            let (n, count) = spec
                .split_once('=')
                .ok_or_else(|| Error::malformed(line, "expected `ngram N=count`"))?;
            let n: usize = n.trim().parse().map_err(|_| Error::malformed(line, "bad order"))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| Error::malformed(line, "bad count"))?;
            if n != declared.len() + 1 {
                return Err(Error::malformed(line, "orders must be listed as 1, 2, 3, ..."));
            }
            declared.push(count);
            lines.next();
        }
        let order = declared.len();
        if order == 0 || order > MAX_ORDER {
            return Err(Error::malformed(0, format!("order must be in 1..={MAX_ORDER}, got {order}")));
        }

        let mut model = Self::empty(order);
        let mut seen_end = false;
        let mut expected_section = 1;
        while let Some((line, l)) = lines.next() {
            if l == "\\end\\" {
                seen_end = true;
                break;
            }
            let n: usize = l
                .strip_prefix('\\')
                .and_then(|s| s.strip_suffix("-grams:"))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::malformed(line, format!("expected section header, found {l:?}")))?;
            if n != expected_section || n > order {
                return Err(Error::malformed(line, format!("unexpected section \\{n}-grams:")));
            }
            expected_section += 1;
            let mut found = 0;
            while let Some(&(line, l)) = lines.peek() {
                if l.starts_with('\\') {
                    break;
                }
                lines.next();
                found += 1;
                model.parse_entry(n, line, l)?;
            }
            if found != declared[n - 1] {
                return Err(Error::CountMismatch {
                    order: n,
                    declared: declared[n - 1],
                    found,
                });
            }
        }
        if expected_section != order + 1 {
            return Err(Error::malformed(0, format!("missing \\{expected_section}-grams: section")));
        }
        if !seen_end {
            return Err(Error::malformed(0, "missing \\end\\"));
        }
        Ok(model)
    }

    fn parse_entry(&mut self, n: usize, line: usize, l: &str) -> Result<()> {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != n + 1 && fields.len() != n + 2 {
            return Err(Error::malformed(line, format!("expected {} or {} fields", n + 1, n + 2)));
        }
        let parse = |s: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::malformed(line, format!("bad number {s:?}")))?;
            if !v.is_finite() {
                return Err(Error::malformed(line, format!("non-finite number {s:?}")));
            }
            Ok(v)
        };
        let logprob = parse(fields[0])?;
        if logprob > 0.0 {
            return Err(Error::malformed(line, "log-probability must be <= 0"));
        }
        let backoff = match fields.get(n + 1) {
            Some(s) => parse(s)?,
            None => 0.0,
        };
        let words = &fields[1..=n];
        let key: Vec<u32> = if n == 1 {
            vec![self.add_word(words[0])]
        } else {
            let mut key = Vec::with_capacity(n);
            for w in words {
                let id = *self
                    .ids
                    .get(*w)
                    .ok_or_else(|| Error::UnseenContext(words.join(" ")))?;
                key.push(id);
            }
            if !self.tables[n - 2].contains_key(&key[..n - 1]) {
                return Err(Error::UnseenContext(words.join(" ")));
            }
            key
        };
        let entry = Entry {
            logprob: logprob * LN_10,
            backoff: backoff * LN_10,
        };
        if self.tables[n - 1].insert(key, entry).is_some() {
            return Err(Error::malformed(line, format!("duplicate {n}-gram")));
        }
        Ok(())
    }

    /// Serializes to ARPA text; entries are sorted by their word strings.
    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for (k, table) in self.tables.iter().enumerate() {
            writeln!(out, "ngram {}={}", k + 1, table.len()).unwrap();
        }
        for (k, table) in self.tables.iter().enumerate() {
            writeln!(out, "\n\\{}-grams:", k + 1).unwrap();
            let mut rows: Vec<(Vec<&str>, &Entry)> = table
                .iter()
                .map(|(key, e)| (key.iter().map(|&id| self.words[id as usize].as_str()).collect(), e))
                .collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (words, e) in rows {
                write!(out, "{}\t{}", e.logprob / LN_10, words.join(" ")).unwrap();
                if k + 1 < self.order {
                    write!(out, "\t{}", e.backoff / LN_10).unwrap();
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn save_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_arpa()).map_err(|e| Error::io(path, e))
    }

    /// Enables mapping of out-of-vocabulary tokens to `<unk>` (when the
    /// model lists one). Off by default: unknown tokens are an error.
    pub fn with_unk_mapping(mut self, on: bool) -> Self {
        self.map_unk = on;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ids.contains_key(word)
    }

    pub fn eos(&self) -> Option<u32> {
        self.eos
    }

    /// Number of listed n-grams of order `n` (1-based).
    pub fn count(&self, n: usize) -> usize {
        self.tables.get(n.wrapping_sub(1)).map_or(0, HashMap::len)
    }

    /// Internal id for `token`, honoring the `<unk>` mapping flag.
    pub fn token_id(&self, token: &str) -> Result<u32> {
        match self.ids.get(token) {
            Some(&id) => Ok(id),
            None => match (self.map_unk, self.unk) {
                (true, Some(unk)) => Ok(unk),
                _ => Err(Error::OovToken(token.to_string())),
            },
        }
    }

    /// Ids of every word that can be predicted (everything but `<s>`).
    pub fn predictable_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.words.len() as u32).filter(move |&id| Some(id) != self.bos)
    }

    /// History a sentence starts from: `[<s>]`, or empty if the model has no `<s>`.
    pub fn start_context(&self) -> Vec<u32> {
        self.bos.into_iter().collect()
    }

    /// `ln P(word | context)` with backoff. Only the last `order - 1` ids of
    /// `context` matter. Unknown ids give `-inf`.
    pub fn cond_logprob(&self, context: &[u32], word: u32) -> f64 {
        let hist = &context[context.len().saturating_sub(self.order - 1)..];
        let mut key = [0u32; MAX_ORDER];
        let mut backoff = 0.0;
        for start in 0..=hist.len() {
            let h = &hist[start..];
            let n = h.len();
            key[..n].copy_from_slice(h);
            key[n] = word;
            if let Some(e) = self.tables[n].get(&key[..=n]) {
                return backoff + e.logprob;
            }
            if n > 0 {
                if let Some(e) = self.tables[n - 1].get(h) {
                    backoff += e.backoff;
                }
            }
        }
        f64::NEG_INFINITY
    }

    /// Sum of conditional log-probabilities of `ids` starting from `<s>`.
    pub fn score_ids(&self, ids: &[u32], include_eos: bool) -> Result<f64> {
        let mut context = self.start_context();
        let mut total = 0.0;
        for &id in ids {
            total += self.cond_logprob(&context, id);
            context.push(id);
        }
        if include_eos {
            let eos = self.eos.ok_or_else(|| Error::OovToken(EOS.to_string()))?;
            total += self.cond_logprob(&context, eos);
        }
        Ok(total)
    }

    /// Natural-log probability of a token sequence, `<s>`-initial context,
    /// optionally including the final `</s>` event.
    pub fn score_sequence<S: AsRef<str>>(&self, tokens: &[S], include_eos: bool) -> Result<f64> {
        let ids = tokens
            .iter()
            .map(|t| self.token_id(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        self.score_ids(&ids, include_eos)
    }

    /// `exp(-score / (len + 1))`, the `+1` counting the `</s>` event.
    pub fn perplexity<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        let score = self.score_sequence(tokens, true)?;
        Ok((-score / (tokens.len() + 1) as f64).exp())
    }

    /// Minimal count-based trainer with add-one discounting.
    ///
    /// Every listed n-gram `h w` gets `(c(h w) + 1) / (c(h) + |V|)`, where
    /// `|V|` counts every predictable word (`</s>` included, `<s>` excluded).
    /// The remaining mass of each history is handed to the lower order
    /// through its backoff weight, so every conditional distribution sums
    /// to one. Unigrams are add-one estimates over `|V|`. Words listed in
    /// `vocabulary` are included even when unseen.
    pub fn train_add_one<S: AsRef<str>, T: AsRef<str>>(
        sentences: &[Vec<S>],
        vocabulary: &[T],
        order: usize,
    ) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Config(format!("order must be in 1..={MAX_ORDER}")));
        }
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for w in vocabulary {
            names.insert(w.as_ref());
        }
        for s in sentences {
            for w in s {
                names.insert(w.as_ref());
            }
        }
        names.remove(BOS);
        names.remove(EOS);

        let mut model = Self::empty(order);
        let bos = model.add_word(BOS);
        let eos = model.add_word(EOS);
        for w in &names {
            model.add_word(w);
        }
        let predictable: Vec<u32> = model.predictable_ids().collect();
        let vsize = predictable.len() as f64;

        // counts[k] maps (k+1)-grams to counts; context_counts[k] maps k-gram histories
        let mut counts: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        let mut context_counts: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        let mut events = 0u64;
        for s in sentences {
            let mut seq = vec![bos];
            seq.extend(s.iter().map(|w| model.ids[w.as_ref()]));
            seq.push(eos);
            for i in 1..seq.len() {
                events += 1;
                for k in 1..=order.min(i + 1) {
                    *counts[k - 1].entry(seq[i + 1 - k..=i].to_vec()).or_default() += 1;
                    if k > 1 {
                        *context_counts[k - 1].entry(seq[i + 1 - k..i].to_vec()).or_default() += 1;
                    }
                }
            }
        }

        let denom = events as f64 + vsize;
        for &w in &predictable {
            let c = counts[0].get(&vec![w]).copied().unwrap_or(0) as f64;
            model.tables[0].insert(
                vec![w],
                Entry {
                    logprob: ((c + 1.0) / denom).ln(),
                    backoff: 0.0,
                },
            );
        }
        model.tables[0].insert(
            vec![bos],
            Entry {
                logprob: BOS_LOG10 * LN_10,
                backoff: 0.0,
            },
        );

        for k in 2..=order {
            let mut by_history: HashMap<&[u32], Vec<(u32, u64)>> = HashMap::new();
            for (gram, &c) in &counts[k - 1] {
                by_history.entry(&gram[..k - 1]).or_default().push((gram[k - 1], c));
            }
            let mut histories: Vec<&[u32]> = by_history.keys().copied().collect();
            histories.sort();
            let mut backoffs = Vec::with_capacity(histories.len());
            for h in histories {
                let seen = &by_history[h];
                let ch = context_counts[k - 1][h] as f64;
                let mut seen_ids = Vec::with_capacity(seen.len());
                for &(w, c) in seen {
                    let mut gram = h.to_vec();
                    gram.push(w);
                    model.tables[k - 1].insert(
                        gram,
                        Entry {
                            logprob: ((c as f64 + 1.0) / (ch + vsize)).ln(),
                            backoff: 0.0,
                        },
                    );
                    seen_ids.push(w);
                }
                let unseen = predictable.len() - seen.len();
                let backoff = if unseen == 0 {
                    0.0
                } else {
                    seen_ids.sort_unstable();
                    let lower_mass: f64 = predictable
                        .iter()
                        .filter(|w| seen_ids.binary_search(w).is_err())
                        .map(|&w| model.cond_logprob(&h[1..], w).exp())
                        .sum();
                    let leftover = unseen as f64 / (ch + vsize);
                    (leftover / lower_mass).ln()
                };
                backoffs.push((h.to_vec(), backoff));
            }
            for (h, backoff) in backoffs {
                model
                    .tables[k - 2]
                    .get_mut(&h)
                    .expect("history of a counted n-gram is itself counted")
                    .backoff = backoff;
            }
        }
        Ok(model)
    }
}
