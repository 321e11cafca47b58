//! Symbol inventories and the wordpiece/word bridge.
//!
//! A [`Vocabulary`] is an ordered list of symbols whose ids are their
//! zero-based positions. CTC vocabularies reserve id 0 for [`BLANK`].
//! Tokens that begin with [`WORD_BOUNDARY`] (U+2581) open a new word; every
//! other token continues the word in progress.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Index of a symbol inside a [`Vocabulary`].
pub type TokenId = u32;

/// The CTC blank symbol, always id 0 in a CTC vocabulary.
pub const BLANK: &str = "<blank>";

/// Marker that opens a new word in wordpiece vocabularies.
pub const WORD_BOUNDARY: char = '\u{2581}';

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from unique, non-empty, whitespace-free symbols.
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::Vocabulary("empty vocabulary".into()));
        }
        let mut ids = HashMap::with_capacity(symbols.len());
        for (i, sym) in symbols.iter().enumerate() {
            if sym.is_empty() || sym.chars().any(char::is_whitespace) {
                return Err(Error::Vocabulary(format!(
                    "symbol {i} ({sym:?}) is empty or contains whitespace"
                )));
            }
            if ids.insert(sym.clone(), i as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate symbol {sym:?}")));
            }
        }
        Ok(Self { symbols, ids })
    }

    /// Like [`Vocabulary::new`], additionally requiring `<blank>` at id 0.
    pub fn ctc<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let vocab = Self::new(symbols)?;
        if !vocab.is_ctc() {
            return Err(Error::Vocabulary(format!(
                "CTC vocabulary must start with {BLANK:?}"
            )));
        }
        Ok(vocab)
    }

    pub fn is_ctc(&self) -> bool {
        self.symbols[0] == BLANK
    }

    pub fn blank(&self) -> Option<TokenId> {
        self.is_ctc().then_some(0)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.ids.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Parses the one-symbol-per-line text format. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sym in &self.symbols {
            out.push_str(sym);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Symbols of `tokens` joined by single spaces.
    pub fn render(&self, tokens: &[TokenId]) -> Result<String> {
        let mut parts = Vec::with_capacity(tokens.len());
        for &t in tokens {
            parts.push(self.symbol(t).ok_or(Error::InvalidToken(t))?);
        }
        Ok(parts.join(" "))
    }

    /// Inverse of [`Vocabulary::render`].
    pub fn lookup_all(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|s| {
                self.id(s)
                    .ok_or_else(|| Error::VocabMismatch(format!("symbol {s:?} not in vocabulary")))
            })
            .collect()
    }
}

fn checked_symbol(vocab: &Vocabulary, id: TokenId) -> Result<&str> {
    if vocab.blank() == Some(id) {
        return Err(Error::InvalidToken(id));
    }
    vocab.symbol(id).ok_or(Error::InvalidToken(id))
}

/// Joins wordpieces into words.
///
/// Each token that starts with U+2581 opens a new word (marker stripped);
/// other tokens are appended to the current word. A sequence whose first
/// token is a continuation is rejected.
pub fn detokenize(tokens: &[TokenId], vocab: &Vocabulary) -> Result<Vec<String>> {
    let mut words: Vec<String> = Vec::new();
    for &t in tokens {
        let sym = checked_symbol(vocab, t)?;
        match sym.strip_prefix(WORD_BOUNDARY) {
            Some(rest) => words.push(rest.to_string()),
            None => match words.last_mut() {
                Some(w) => w.push_str(sym),
                None => return Err(Error::DanglingContinuation(sym.to_string())),
            },
        }
    }
    Ok(words)
}

/// Like [`detokenize`], but a leading continuation simply opens a word.
/// Used when scoring arbitrary decoder output against references.
pub fn detokenize_lossy(tokens: &[TokenId], vocab: &Vocabulary) -> Result<Vec<String>> {
    let mut words: Vec<String> = Vec::new();
    for &t in tokens {
        let sym = checked_symbol(vocab, t)?;
        match sym.strip_prefix(WORD_BOUNDARY) {
            Some(rest) => words.push(rest.to_string()),
            None => match words.last_mut() {
                Some(w) => w.push_str(sym),
                None => words.push(sym.to_string()),
            },
        }
    }
    Ok(words)
}

/// Greedy longest-match wordpiece tokenization.
///
/// Each word is matched first against boundary tokens (`▁prefix`) and then
/// against continuation tokens until it is consumed.
pub fn tokenize_words<S: AsRef<str>>(words: &[S], vocab: &Vocabulary) -> Result<Vec<TokenId>> {
    let mut out = Vec::new();
    let mut key = String::new();
    for word in words {
        let word = word.as_ref();
        let mut rest = word;
        let mut first = true;
        while !rest.is_empty() {
            let mut matched = None;
            // char boundaries, longest first
            let mut ends: Vec<usize> = rest.char_indices().map(|(i, _)| i).skip(1).collect();
            ends.push(rest.len());
            for &end in ends.iter().rev() {
                key.clear();
                if first {
                    key.push(WORD_BOUNDARY);
                }
                key.push_str(&rest[..end]);
                if let Some(id) = vocab.id(&key) {
                    if vocab.blank() != Some(id) {
                        matched = Some((id, end));
                        break;
                    }
                }
            }
            match matched {
                Some((id, end)) => {
                    out.push(id);
                    rest = &rest[end..];
                    first = false;
                }
                None => return Err(Error::Untokenizable(word.to_string())),
            }
        }
        if first {
            return Err(Error::Untokenizable(word.to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wp_vocab() -> Vocabulary {
        Vocabulary::ctc(["<blank>", "▁foo", "▁he", "llo", "▁world", "▁hell", "o"]).unwrap()
    }

    fn ids(v: &Vocabulary, syms: &[&str]) -> Vec<TokenId> {
        syms.iter().map(|s| v.id(s).unwrap()).collect()
    }

    #[test]
    fn detokenize_examples() {
        let v = wp_vocab();
        assert_eq!(detokenize(&ids(&v, &["▁foo"]), &v).unwrap(), vec!["foo"]);
        assert_eq!(
            detokenize(&ids(&v, &["▁he", "llo", "▁world"]), &v).unwrap(),
            vec!["hello", "world"]
        );
        assert!(detokenize(&[], &v).unwrap().is_empty());
    }

    #[test]
    fn dangling_continuation_is_rejected() {
        let v = wp_vocab();
        let err = detokenize(&ids(&v, &["llo", "▁foo"]), &v).unwrap_err();
        assert!(matches!(err, Error::DanglingContinuation(ref s) if s == "llo"));
        assert_eq!(
            detokenize_lossy(&ids(&v, &["llo", "▁foo"]), &v).unwrap(),
            vec!["llo", "foo"]
        );
    }

    #[test]
    fn blank_is_not_a_token() {
        let v = wp_vocab();
        assert!(matches!(detokenize(&[0], &v), Err(Error::InvalidToken(0))));
        assert!(matches!(detokenize(&[99], &v), Err(Error::InvalidToken(99))));
    }

    #[test]
    fn vocabulary_validation() {
        assert!(Vocabulary::new(Vec::<String>::new()).is_err());
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::new(["a b"]).is_err());
        assert!(Vocabulary::ctc(["a", "<blank>"]).is_err());
        let v = Vocabulary::parse("<blank>\na\n\nb\n").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.blank(), Some(0));
        assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn greedy_prefers_longest_piece() {
        let v = wp_vocab();
        // "▁hell"+"o" beats "▁he"+"llo" under longest match
        assert_eq!(tokenize_words(&["hello"], &v).unwrap(), ids(&v, &["▁hell", "o"]));
        assert!(matches!(
            tokenize_words(&["xyz"], &v),
            Err(Error::Untokenizable(_))
        ));
    }

    proptest! {
        #[test]
        fn detokenize_inverts_greedy_tokenization(
            words in prop::collection::vec(
                prop::sample::select(vec!["foo", "hello", "world", "hell", "he", "helloo"]),
                0..8,
            )
        ) {
            let v = wp_vocab();
            let tokens = tokenize_words(&words, &v).unwrap();
            let back = detokenize(&tokens, &v).unwrap();
            prop_assert_eq!(back, words);
        }
    }
}
