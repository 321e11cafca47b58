use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "amfusion", version, about = "Two-pass CTC decoding with acoustic-model fusion")]
pub struct Cli {
    /// Read "key = value" defaults from a file; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with posteriors, lexicon and LMs.
    Synth(SynthArgs),
    /// First-pass prefix beam search with optional LM fusion.
    Decode(DecodeArgs),
    /// Add forced-alignment AM scores to N-best lists and re-rank them.
    Rescore(RescoreArgs),
    /// Grid-search fusion weights on a dev set.
    Tune(TuneArgs),
    /// Word error rate of hypotheses against references.
    Score(ScoreArgs),
    /// WER and WERR per reference-perplexity bucket.
    Buckets(BucketsArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 30)]
    pub phoneme_count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub zipf_exponent: f64,
    #[arg(long, default_value_t = 2000)]
    pub train_utterances: usize,
    #[arg(long, default_value_t = 200)]
    pub dev_utterances: usize,
    #[arg(long, default_value_t = 500)]
    pub test_utterances: usize,
    #[arg(long, default_value_t = 4000)]
    pub lm_text_utterances: usize,
    #[arg(long, default_value_t = 4)]
    pub min_words: usize,
    #[arg(long, default_value_t = 10)]
    pub max_words: usize,
    #[arg(long, default_value_t = 2)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 4)]
    pub max_frames: usize,
    #[arg(long, default_value_t = 0.3)]
    pub blank_prob: f64,
    #[arg(long, default_value_t = 0.2)]
    pub silence_prob: f64,
    #[arg(long, default_value_t = 0.8)]
    pub accuracy: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rare_degradation: f64,
    #[arg(long, default_value_t = 0.2)]
    pub rare_quantile: f64,
    #[arg(long, default_value_t = 0.003)]
    pub noise_concentration: f64,
    #[arg(long, default_value_t = 0.0)]
    pub confusion_rate: f64,
    /// Order of the generated n-gram LMs.
    #[arg(long, default_value_t = 2)]
    pub lm_order: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
#[command(group(ArgGroup::new("input").required(true).args(["posteriors", "list"])))]
pub struct DecodeArgs {
    /// One FPM1 posterior file.
    #[arg(long, value_name = "FILE")]
    pub posteriors: Option<PathBuf>,
    /// List file of "utt_id<TAB>path" rows.
    #[arg(long, value_name = "FILE")]
    pub list: Option<PathBuf>,
    /// Utterance id for --posteriors (default: the file stem).
    #[arg(long)]
    pub utt: Option<String>,
    /// Wordpiece vocabulary, blank first.
    #[arg(long, value_name = "FILE")]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    #[arg(long, default_value_t = 10)]
    pub nbest: usize,
    /// External LM (ARPA).
    #[arg(long, value_name = "FILE")]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_lm: f64,
    /// Internal LM estimate (ARPA) to subtract.
    #[arg(long, value_name = "FILE")]
    pub ilm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_ilm: f64,
    /// Natural-log posterior below which a symbol never extends a prefix.
    #[arg(long, allow_negative_numbers = true)]
    pub prune_below: Option<f64>,
    /// N-best output (default: stdout).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write top-1 transcripts here.
    #[arg(long, value_name = "FILE")]
    pub text_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oov {
    /// Fail on hypotheses that cannot be aligned.
    Strict,
    /// Give them a per-frame floor score.
    Floor,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
#[command(group(ArgGroup::new("phones").required(true).args(["phoneme_posteriors", "phoneme_list"])))]
pub struct RescoreArgs {
    #[arg(long, value_name = "FILE")]
    pub nbest: PathBuf,
    /// Phoneme posteriors for a single-utterance N-best file.
    #[arg(long, value_name = "FILE")]
    pub phoneme_posteriors: Option<PathBuf>,
    /// List file of "utt_id<TAB>path" phoneme posterior rows.
    #[arg(long, value_name = "FILE")]
    pub phoneme_list: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub lexicon: PathBuf,
    /// Phoneme inventory, one symbol per line.
    #[arg(long, value_name = "FILE")]
    pub phonemes: PathBuf,
    /// Wordpiece vocabulary of the N-best file.
    #[arg(long, value_name = "FILE")]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_am: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_lm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_ilm: f64,
    /// Phoneme allowed as optional silence between words.
    #[arg(long)]
    pub silence: Option<String>,
    #[arg(long, value_enum, default_value_t = Oov::Strict)]
    pub oov: Oov,
    /// Per-frame natural-log score used by --oov floor.
    #[arg(long, allow_negative_numbers = true, default_value_t = -9.210340371976184)]
    pub oov_floor: f64,
    /// Replace the lm scores with this word-level LM (ARPA) first.
    #[arg(long, value_name = "FILE")]
    pub word_lm: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub text_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TuneArgs {
    /// N-best lists with AM scores.
    #[arg(long, value_name = "FILE")]
    pub nbest: PathBuf,
    /// Reference transcripts.
    #[arg(long = "ref", value_name = "FILE")]
    pub reference: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub vocab: PathBuf,
    /// Candidate values; axes left out are fixed at 0. Without any of the
    /// three, the default grid is searched.
    #[arg(long, value_delimiter = ',')]
    pub lambda_am_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_lm_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_ilm_values: Vec<f64>,
    /// Per-grid-point WER table.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
#[command(group(ArgGroup::new("hyps").required(true).args(["hyp", "nbest"])))]
pub struct ScoreArgs {
    #[arg(long = "ref", value_name = "FILE")]
    pub reference: PathBuf,
    /// Hypothesis transcripts.
    #[arg(long, value_name = "FILE")]
    pub hyp: Option<PathBuf>,
    /// Score the top hypothesis of each N-best list instead.
    #[arg(long, value_name = "FILE", requires = "vocab")]
    pub nbest: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// Also report oracle WER (needs --nbest).
    #[arg(long, requires = "nbest")]
    pub oracle: bool,
    /// Per-utterance report.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BucketsArgs {
    #[arg(long = "ref", value_name = "FILE")]
    pub reference: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub baseline: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub fused: PathBuf,
    /// LM (ARPA) that ranks references by perplexity.
    #[arg(long, value_name = "FILE")]
    pub lm: PathBuf,
    /// Wordpiece vocabulary; when given, references are tokenized before
    /// scoring with the LM.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub buckets: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
