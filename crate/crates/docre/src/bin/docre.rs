use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use docre::cli::{self, RunConfig};

#[derive(Parser)]
#[command(name = "docre", about = "Document-level relation extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each one overrides the matching
/// config-file key.
#[derive(Args)]
struct CommonArgs {
    /// JSON config file with flat keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    val_data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    val_cache: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    data_format: Option<String>,
    #[arg(long)]
    min_freq: Option<usize>,
    /// all, none, or sampled:K
    #[arg(long)]
    negative_policy: Option<String>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    dropout_p: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    grad_clip_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    freeze_encoder: Option<bool>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig, docre::DocreError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! override_opt {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    config.$field = Some(v.clone());
                })*
            };
        }
        macro_rules! override_val {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() {
                    config.$field = v;
                })*
            };
        }
        override_opt!(data, val_data, schema, vocab, cache, val_cache, checkpoint, output_dir);
        override_val!(
            data_format, min_freq, negative_policy, d_model, n_layers, n_heads, d_ff,
            max_len, dropout_p, batch_size, epochs, learning_rate, grad_clip_norm, seed,
            freeze_encoder
        );
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary file from training data
    Vocab(CommonArgs),
    /// Encode documents into the instance cache
    Prepare(CommonArgs),
    /// Train a model from a prepared cache
    Train(CommonArgs),
    /// Evaluate a checkpoint on a prepared cache
    Eval(CommonArgs),
    /// Classify one entity pair in free text
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        text: String,
        #[arg(long)]
        head: String,
        #[arg(long)]
        tail: String,
    },
}

fn run(cli: Cli) -> Result<(), docre::DocreError> {
    match cli.command {
        Command::Vocab(args) => cli::cmd_vocab(&args.resolve()?),
        Command::Prepare(args) => cli::cmd_prepare(&args.resolve()?),
        Command::Train(args) => cli::cmd_train(&args.resolve()?),
        Command::Eval(args) => cli::cmd_eval(&args.resolve()?),
        Command::Predict {
            common,
            text,
            head,
            tail,
        } => cli::cmd_predict(&common.resolve()?, &text, &head, &tail),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
