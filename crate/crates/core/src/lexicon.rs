//! Pronunciation lexicon with per-word pronunciation priors.
//!
//! Text format, one pronunciation per line, tab-separated:
//!
//! ```text
//! word<TAB>phone phone phone
//! word<TAB>probability<TAB>phone phone phone
//! ```
//!
//! Priors of a word are normalized to sum to one at load; a word whose lines
//! carry no probability gets a uniform prior.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct Pronunciation {
    pub phones: Vec<TokenId>,
    /// `P(pronunciation | word)`, in `(0, 1]`.
    pub prior: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Pronunciation>>,
}

/// One unnormalized lexicon line.
#[derive(Debug, Clone)]
pub struct LexiconEntry {
    pub word: String,
    pub probability: Option<f64>,
    pub phones: Vec<TokenId>,
}

impl Lexicon {
    /// Validates and normalizes raw entries. Line numbers in errors are
    /// 1-based positions within `entries`.
    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<(Option<f64>, Vec<TokenId>)>> = BTreeMap::new();
        for (i, e) in entries.into_iter().enumerate() {
            let line = i + 1;
            if e.phones.is_empty() {
                return Err(Error::EmptyPronunciation { line, word: e.word });
            }
            if let Some(p) = e.probability {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::ProbabilityRange { line, value: p });
                }
            }
            grouped.entry(e.word).or_default().push((e.probability, e.phones));
        }
        let mut out = BTreeMap::new();
        for (word, prons) in grouped {
            let given = prons.iter().filter(|(p, _)| p.is_some()).count();
            let priors: Vec<f64> = if given == 0 {
                vec![1.0 / prons.len() as f64; prons.len()]
            } else if given == prons.len() {
                let z: f64 = prons.iter().map(|(p, _)| p.unwrap()).sum();
                prons.iter().map(|(p, _)| p.unwrap() / z).collect()
            } else {
                return Err(Error::MixedPriors(word));
            };
            let list = prons
                .into_iter()
                .zip(priors)
                .map(|((_, phones), prior)| Pronunciation { phones, prior })
                .collect();
            out.insert(word, list);
        }
        Ok(Self { entries: out })
    }

    pub fn parse(text: &str, phonemes: &Vocabulary) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let (word, probability, phones) = match fields.as_slice() {
                [w, ph] => (*w, None, *ph),
                [w, p, ph] => {
                    let value: f64 = p
                        .trim()
                        .parse()
                        .map_err(|_| Error::malformed(line, format!("bad probability {p:?}")))?;
                    (*w, Some(value), *ph)
                }
                _ => return Err(Error::malformed(line, "expected 2 or 3 tab-separated fields")),
            };
            let word = word.trim();
            if word.is_empty() {
                return Err(Error::malformed(line, "empty word"));
            }
            if let Some(value) = probability {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(Error::ProbabilityRange { line, value });
                }
            }
            let mut ids = Vec::new();
            for sym in phones.split_whitespace() {
                ids.push(phonemes.id(sym).ok_or_else(|| Error::UnknownPhoneme {
                    line,
                    symbol: sym.to_string(),
                })?);
            }
            if ids.is_empty() {
                return Err(Error::EmptyPronunciation {
                    line,
                    word: word.to_string(),
                });
            }
            entries.push(LexiconEntry {
                word: word.to_string(),
                probability,
                phones: ids,
            });
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>, phonemes: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, phonemes)
    }

    /// Serializes with an explicit probability column.
    pub fn to_tsv(&self, phonemes: &Vocabulary) -> Result<String> {
        let mut out = String::new();
        for (word, prons) in &self.entries {
            for p in prons {
                out.push_str(word);
                out.push('\t');
                out.push_str(&p.prior.to_string());
                out.push('\t');
                out.push_str(&phonemes.render(&p.phones)?);
                out.push('\n');
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>, phonemes: &Vocabulary) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv(phonemes)?).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, word: &str) -> Option<&[Pronunciation]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Flattens back into entries carrying the normalized priors.
    pub fn entries(&self) -> Vec<LexiconEntry> {
        self.entries
            .iter()
            .flat_map(|(w, prons)| {
                prons.iter().map(move |p| LexiconEntry {
                    word: w.clone(),
                    probability: Some(p.prior),
                    phones: p.phones.clone(),
                })
            })
            .collect()
    }
}
