//! `utt_id\ttext` transcript files.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses transcript lines, keeping file order. Blank lines are skipped;
/// the text may be empty.
pub fn parse_transcripts(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, words) = line.split_once('\t').unwrap_or((line, ""));
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::malformed(i + 1, "empty utterance id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::malformed(i + 1, format!("duplicate utterance id {id:?}")));
        }
        out.push((id.to_string(), words.trim().to_string()));
    }
    Ok(out)
}

pub fn format_transcripts<I: AsRef<str>, T: AsRef<str>>(rows: &[(I, T)]) -> String {
    rows.iter()
        .map(|(id, text)| format!("{}\t{}\n", id.as_ref(), text.as_ref()))
        .collect()
}

pub fn load_transcripts(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    parse_transcripts(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_transcripts<I: AsRef<str>, T: AsRef<str>>(path: impl AsRef<Path>, rows: &[(I, T)]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_transcripts(rows)).map_err(|e| Error::io(path, e))
}
