//! Acoustic-model fusion for end-to-end speech recognition.
//!
//! A CTC wordpiece model decodes with an n-gram LM (optionally negating an
//! internal LM estimate). Its N-best lists are then rescored by forced
//! alignment against a separately trained phoneme acoustic model, and the
//! scores are combined log-linearly. The crate also ships a synthetic data
//! generator that reproduces the rare-word mismatch this helps with.

pub mod aligner;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod lexicon;
pub mod logmath;
pub mod nbest;
pub mod ngram;
pub mod posteriors;
pub mod synth;
pub mod transcripts;
pub mod vocab;
pub mod weights;

pub use error::{Error, Result};
pub use lexicon::Lexicon;
pub use nbest::{Hypothesis, NBestList, ScoreBundle};
pub use ngram::NGramModel;
pub use posteriors::PosteriorMatrix;
pub use vocab::{TokenId, Vocabulary};
pub use weights::FusionWeights;
