use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports.
///
/// The variants are grouped loosely by the module that raises them; the CLI
/// maps all of them to the "data error" exit status.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    // posterior matrices
    #[error("bad magic: expected \"FPM1\"")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unnormalized posteriors: frame {frame} has logsumexp {logsumexp}")]
    Unnormalized { frame: usize, logsumexp: f64 },
    #[error("non-finite value at frame {frame}, symbol {symbol}")]
    NonFinite { frame: usize, symbol: usize },
    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    // vocabularies and text
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("invalid token id {0}")]
    InvalidToken(u32),
    #[error("dangling continuation: token {0:?} does not open a word")]
    DanglingContinuation(String),
    #[error("word {0:?} cannot be covered by the vocabulary")]
    Untokenizable(String),

    // lexicon
    #[error("line {line}: unknown phoneme symbol {symbol:?}")]
    UnknownPhoneme { line: usize, symbol: String },
    #[error("line {line}: empty pronunciation for {word:?}")]
    EmptyPronunciation { line: usize, word: String },
    #[error("line {line}: probability outside (0,1]: {value}")]
    ProbabilityRange { line: usize, value: f64 },
    #[error("word {0:?} mixes pronunciations with and without probabilities")]
    MixedPriors(String),

    // n-gram models
    #[error("count mismatch for {order}-grams: header says {declared}, section has {found}")]
    CountMismatch {
        order: usize,
        declared: usize,
        found: usize,
    },
    #[error("n-gram referencing unseen context: {0}")]
    UnseenContext(String),
    #[error("line {line}: malformed: {message}")]
    Malformed { line: usize, message: String },
    #[error("OOV token {0:?} and the model has no <unk> mapping")]
    OovToken(String),
    #[error("cannot compute perplexity of an empty sequence")]
    EmptySequence,

    // decoding and alignment
    #[error("vocab mismatch: {0}")]
    VocabMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sequence too long to align: needs {required} frames, have {frames}")]
    LabelsTooLong { required: usize, frames: usize },
    #[error("OOV word: {0}")]
    OovWord(String),
    #[error("empty word sequence")]
    EmptyWords,
    #[error("utterance too short to align: needs {required} frames, have {frames}")]
    TooShort { required: usize, frames: usize },

    // fusion and evaluation
    #[error("missing required score component: {0}")]
    MissingComponent(&'static str),
    #[error("invalid fusion weights: {0}")]
    Weights(String),
    #[error("empty weight grid")]
    EmptyGrid,
    #[error("empty reference")]
    EmptyReference,
    #[error("WERR undefined for zero baseline WER")]
    ZeroBaseline,
    #[error("corpus of {size} utterances is smaller than {buckets} buckets")]
    CorpusTooSmall { size: usize, buckets: usize },
    #[error("duplicate hypothesis in N-best list for {0}")]
    DuplicateHypothesis(String),
    #[error("N-best list for {0} is empty")]
    EmptyNBest(String),
    #[error("no {what} for utterance {utterance}")]
    MissingUtterance { what: &'static str, utterance: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            message: message.into(),
        }
    }
}
