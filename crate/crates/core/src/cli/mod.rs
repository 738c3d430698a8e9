//! Command-line front end: `train`, `evaluate`, `predict`, `correct` and
//! `synth`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod config;

pub use commands::*;
pub use config::RunConfig;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use crate::correction::Mlp2Config;
use crate::corpus::{read_rct_path, write_rct};
use crate::docmodel::DecodeMode;
use crate::error::{Error, Result};
use crate::eval::report;
use crate::layers::EmbeddingMode;
use crate::synth::{generate, SynthConfig};
use crate::ModelRng;

#[derive(Debug, Parser)]
#[command(name = "ssn", version, about = "Sentence role classification for structured abstracts")]
pub struct Cli {
    /// Directory with train.txt, dev.txt and test.txt used when a corpus
    /// path is not given.
    #[arg(long, env = "SSN_DATA_DIR", global = true)]
    pub data_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint directory.
    Train(TrainArgs),
    /// Score a model (or a predictions file) against a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Label a corpus with a trained model.
    Predict(PredictArgs),
    /// Train the pair-correction network and compare base and corrected
    /// metrics.
    Correct(CorrectArgs),
    /// Write a synthetic labeled corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbeddingChoice {
    Frozen,
    Finetune,
    Random,
}

impl From<EmbeddingChoice> for EmbeddingMode {
    fn from(c: EmbeddingChoice) -> Self {
        match c {
            EmbeddingChoice::Frozen => EmbeddingMode::PretrainedFrozen,
            EmbeddingChoice::Finetune => EmbeddingMode::PretrainedFinetune,
            EmbeddingChoice::Random => EmbeddingMode::RandomFinetune,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeChoice {
    /// Viterbi with the CRF, rule-constrained without it.
    Auto,
    Viterbi,
    Rules,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Checkpoint directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Word vectors in word2vec text format.
    #[arg(long)]
    pub embedding_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EmbeddingChoice::Frozen)]
    pub embeddings: EmbeddingChoice,
    /// Use the last BLSTM states instead of self-attention.
    #[arg(long)]
    pub no_attention: bool,
    /// Train with per-sentence cross-entropy and decode with order rules.
    #[arg(long)]
    pub no_crf: bool,
    /// Drop the CRF start and end scores.
    #[arg(long)]
    pub no_start_end: bool,
    #[arg(long, value_enum, default_value_t = DecodeChoice::Auto)]
    pub decode: DecodeChoice,
    /// Attention projection size.
    #[arg(long = "a", default_value_t = 100)]
    pub attention_dim: usize,
    /// Number of attention aspects.
    #[arg(long = "r", default_value_t = 8)]
    pub aspects: usize,
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub doc_hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub emission_hidden: usize,
    /// Word vector size.
    #[arg(long, default_value_t = 200)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Epochs without validation F1 improvement before stopping.
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    /// Do not echo log lines to stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long, required_unless_present = "predictions")]
    pub model: Option<PathBuf>,
    /// Labeled corpus to score against.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Score this labeled predictions file instead of running a model.
    #[arg(long, conflicts_with = "model")]
    pub predictions: Option<PathBuf>,
    /// Write the confusion matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Append the five label scores to every sentence line.
    #[arg(long)]
    pub scores: bool,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Directory for the correction checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub mlp_hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub mlp_lr: f64,
    #[arg(long, default_value_t = 200)]
    pub mlp_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub mlp_patience: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub abstracts: usize,
    #[arg(long, default_value_t = 5)]
    pub min_sentences: usize,
    #[arg(long, default_value_t = 8)]
    pub max_sentences: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

fn resolve(explicit: Option<PathBuf>, data_dir: Option<&Path>, file: &str, flag: &str) -> Result<PathBuf> {
    explicit
        .or_else(|| data_dir.map(|d| d.join(file)))
        .ok_or_else(|| Error::Config(format!("no {flag} given and SSN_DATA_DIR is not set")))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("writing output", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

impl TrainArgs {
    pub fn to_config(&self, data_dir: Option<&Path>) -> Result<RunConfig> {
        let train = resolve(self.train.clone(), data_dir, "train.txt", "--train")?;
        let dev = self
            .dev
            .clone()
            .or_else(|| data_dir.map(|d| d.join("dev.txt")).filter(|p| p.exists()));
        let mut c = RunConfig::new(train, self.out.clone());
        c.dev = dev;
        c.embedding_file = self.embedding_file.clone();
        c.attention = !self.no_attention;
        c.crf = !self.no_crf;
        c.embedding_mode = self.embeddings.into();
        c.embedding_dim = self.dim;
        c.min_count = self.min_count;
        c.hidden = self.hidden;
        c.attention_dim = self.attention_dim;
        c.num_aspects = self.aspects;
        c.doc_hidden = self.doc_hidden;
        c.emission_hidden = self.emission_hidden;
        c.start_end = !self.no_start_end;
        c.dropout = self.dropout;
        c.decode = match self.decode {
            DecodeChoice::Auto => DecodeMode::Head,
            DecodeChoice::Viterbi => DecodeMode::Viterbi,
            DecodeChoice::Rules => DecodeMode::Rules,
        };
        c.seed = self.seed;
        c.learning_rate = self.lr;
        c.epochs = self.epochs;
        c.patience = self.patience;
        c.validate()?;
        Ok(c)
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let data_dir = cli.data_dir.as_deref();
    match cli.command {
        Command::Train(args) => {
            let config = args.to_config(data_dir)?;
            let train = read_rct_path(&config.train)?;
            let dev = config.dev.as_deref().map(read_rct_path).transpose()?;
            let mut sink: Box<dyn Write> = if args.quiet { Box::new(io::sink()) } else { Box::new(&mut *out) };
            let outcome = train_model(&config, &train, dev.as_deref(), &mut *sink)?;
            drop(sink);
            save_model_dir(&config.out_dir, &outcome, &config)
        }
        Command::Evaluate(args) => {
            let corpus = resolve(args.corpus, data_dir, "test.txt", "--corpus")?;
            let gold = read_rct_path(&corpus)?;
            let cm = match (&args.model, &args.predictions) {
                (Some(dir), _) => {
                    let (model, vocab) = load_model_dir(dir)?;
                    evaluate_model(&model, &vocab, &gold)?.0
                }
                (None, Some(pred)) => {
                    let predicted = read_rct_path(pred)?;
                    let labels = predicted
                        .iter()
                        .map(|a| {
                            a.gold_labels()
                                .ok_or_else(|| Error::Data(format!("predictions for {} are incomplete", a.id)))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    confusion_of(&gold, &labels)?
                }
                (None, None) => return Err(Error::Config("give --model or --predictions".into())),
            };
            let r = report(&cm)?;
            if let Some(csv) = &args.csv {
                write_file(csv, &cm.to_csv())?;
            }
            if args.json {
                write_out(out, &(r.to_key_values() + "\n"))
            } else {
                write_out(out, &r.to_table())
            }
        }
        Command::Predict(args) => {
            let (model, vocab) = load_model_dir(&args.model)?;
            let input = read_rct_path(&args.input)?;
            let predictions = predict_all(&model, &vocab, &input)?;
            let text = format_predictions(&input, &predictions, args.scores);
            match &args.output {
                Some(path) => write_file(path, &text),
                None => write_out(out, &text),
            }
        }
        Command::Correct(args) => {
            let (model, vocab) = load_model_dir(&args.model)?;
            let dev = read_rct_path(&resolve(args.dev, data_dir, "dev.txt", "--dev")?)?;
            let test = read_rct_path(&resolve(args.test, data_dir, "test.txt", "--test")?)?;
            let config = Mlp2Config {
                hidden: args.mlp_hidden,
                learning_rate: args.mlp_lr,
                max_epochs: args.mlp_epochs,
                patience: args.mlp_patience,
                ..Mlp2Config::default()
            };
            let outcome = run_correction(&model, &vocab, &dev, &test, &config, args.seed)?;
            if let Some(dir) = &args.out {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
                outcome.mlp.to_checkpoint().save(&dir.join(CORRECTION_FILE))?;
            }
            write_out(out, &format_correction(&outcome))
        }
        Command::Synth(args) => {
            let config = SynthConfig {
                abstracts: args.abstracts,
                min_sentences: args.min_sentences,
                max_sentences: args.max_sentences,
                ..SynthConfig::default()
            };
            let docs = generate(&config, &mut ModelRng::seed_from_u64(args.seed))?;
            write_file(&args.out, &write_rct(&docs))
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
