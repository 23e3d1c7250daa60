//! `omnict`: preprocessing, tokenization, gradient checking, training and evaluation.
//!
//! Exit codes: 0 success, 1 I/O, 2 validation or format, 3 numerical check failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use omnict_core::{ErrorClass, Modality};

#[derive(Parser)]
#[command(name = "omnict", version, about = "CT tokenization, toy training and benchmark scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputFormat {
    Nifti,
    Raw,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModalityArg {
    Slice,
    Volume,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Self {
        match m {
            ModalityArg::Slice => Modality::Slice,
            ModalityArg::Volume => Modality::Volume,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Window, normalise and resample a volume (and optional mask).
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: InputFormat,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true,
              default_values_t = [-1000.0f32, 1000.0])]
        window: Vec<f32>,
        #[arg(long, num_args = 3, value_names = ["D", "H", "W"], default_values_t = [32usize, 384, 384])]
        size: Vec<usize>,
    },
    /// Turn a preprocessed volume or slice stack into projected tokens.
    Tokenize {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, requires = "organ")]
        mask: Option<PathBuf>,
        #[arg(long, requires = "mask")]
        organ: Option<u8>,
        #[arg(long, value_enum)]
        modality: ModalityArg,
        #[arg(long, conflicts_with = "checkpoint")]
        config: Option<PathBuf>,
        /// Take the encoder, projection and config from a training checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Seeds the encoder and projection; ignored with --checkpoint.
        #[arg(long, env = "OMNICT_SEED")]
        seed: Option<u64>,
    },
    /// Compare analytic gradients with central differences on a small instance.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "OMNICT_SEED")]
        seed: Option<u64>,
        /// Also write the report and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the projection (stage 1) or projection, decoder and text table (stage 2).
    Train {
        #[arg(long)]
        stage: u8,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        /// Start from this checkpoint instead of fresh parameters.
        #[arg(long, conflicts_with = "config")]
        init: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "OMNICT_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        freeze_text_embed: bool,
        #[arg(long)]
        lr_adapter: Option<f64>,
        #[arg(long)]
        lr_llm: Option<f64>,
    },
    /// Score predictions and write a stratified report.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON object {"bleu", "rouge_l", "token_f1"} overriding the equal weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Write the synthetic eight-pair training set and its config.
    DemoData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "OMNICT_SEED")]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> omnict_core::Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            format,
            out,
            mask,
            window,
            size,
        } => commands::preprocess(&input, format, mask.as_deref(), &out, (window[0], window[1]), [size[0], size[1], size[2]]),
        Command::Tokenize {
            volume,
            mask,
            organ,
            modality,
            config,
            checkpoint,
            out,
            seed,
        } => commands::tokenize(commands::TokenizeArgs {
            volume: &volume,
            mask: mask.as_deref().zip(organ),
            modality: modality.into(),
            config: config.as_deref(),
            checkpoint: checkpoint.as_deref(),
            out: &out,
            seed,
        }),
        Command::Gradcheck { config, seed, out } => commands::gradcheck(config.as_deref(), seed, out.as_deref()),
        Command::Train {
            stage,
            data,
            out,
            steps,
            batch_size,
            init,
            config,
            seed,
            freeze_text_embed,
            lr_adapter,
            lr_llm,
        } => commands::train(commands::TrainArgs {
            stage,
            data: &data,
            out: &out,
            steps,
            batch_size,
            init: init.as_deref(),
            config: config.as_deref(),
            seed,
            freeze_text_embed,
            lr_adapter,
            lr_llm,
        }),
        Command::Evaluate { pred, out, weights } => commands::evaluate(&pred, &out, weights.as_deref()),
        Command::DemoData { out, seed } => commands::demo_data(&out, seed.unwrap_or(0)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Io => 1,
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
