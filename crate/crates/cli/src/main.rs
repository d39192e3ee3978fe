//! `pidd`: synthetic data, masks, training, reconstruction and evaluation
//! for dual-discriminator parallel-imaging GAN reconstruction.

mod commands;
mod png;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pidd_core::Error;

#[derive(Parser, Debug)]
#[command(name = "pidd", version, about = "Parallel-imaging MRI reconstruction with a dual-discriminator GAN")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-coil phantom dataset with train/val/test splits
    Phantom(PhantomArgs),
    /// Generate a k-space undersampling mask
    Mask(MaskArgs),
    /// Train a model, or run the residual-learning ablation with --ablate
    Train(TrainArgs),
    /// Reconstruct images with a trained checkpoint
    Recon(ReconArgs),
    /// Score zero-filled, TV or model reconstructions on a dataset split
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of phantoms [default: 200]
    #[arg(long)]
    pub count: Option<usize>,
    /// Image size in pixels (square) [default: 64]
    #[arg(long)]
    pub size: Option<usize>,
    /// Receiver coils [default: 4]
    #[arg(long)]
    pub coils: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fewest inner ellipses [default: 4]
    #[arg(long)]
    pub ellipses_min: Option<usize>,
    /// Most inner ellipses [default: 8]
    #[arg(long)]
    pub ellipses_max: Option<usize>,
    /// Train/val/test ratios as a:b:c [default: 5:2:3]
    #[arg(long)]
    pub ratios: Option<String>,
    /// Key-value config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// gaussian2d, gaussian1d or poisson2d [default: gaussian2d]
    #[arg(long)]
    pub kind: Option<String>,
    /// Fraction of k-space acquired [default: 0.3]
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Mask height (and width unless --width is given) [default: 256]
    #[arg(long)]
    pub size: Option<usize>,
    /// Mask width
    #[arg(long)]
    pub width: Option<usize>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output container path; a .meta sidecar is written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key-value config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest or dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoint, config and logs
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// PIDD, PISD or nPIDD
    #[arg(long)]
    pub mode: Option<String>,
    /// Batch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Maximum number of epochs
    #[arg(long)]
    pub epochs_max: Option<usize>,
    /// Stop after this many steps (0 = no cap)
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Noise level N/(N+S) added to acquired samples
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Train the GRLR, GRnLR, nGRLR and nGRnLR variants with early stopping off
    #[arg(long)]
    pub ablate: bool,
    /// Any training key as key=value; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Key-value config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconArgs {
    /// Training output directory holding best.pidt and config.txt
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset manifest/directory, or a single image container
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split to reconstruct when --data is a dataset [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// Sensitivity maps container for a single image
    #[arg(long)]
    pub maps: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Noise level N/(N+S) added to acquired samples [default: 0]
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Use a fully sampled mask instead of the training mask
    #[arg(long)]
    pub fully_sampled: bool,
    /// Key-value config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset manifest or dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split to score [default: test]
    #[arg(long)]
    pub split: Option<String>,
    /// zf, tv or model [default: zf]
    #[arg(long)]
    pub method: Option<String>,
    /// Training output directory (for --method model)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Mask kind [default: gaussian2d, or the checkpoint's]
    #[arg(long)]
    pub mask_kind: Option<String>,
    /// Mask fraction [default: 0.3, or the checkpoint's]
    #[arg(long)]
    pub mask_fraction: Option<f64>,
    /// Mask seed [default: 0, or the checkpoint's]
    #[arg(long)]
    pub mask_seed: Option<u64>,
    /// Noise level N/(N+S) [default: 0, or the checkpoint's]
    #[arg(long)]
    pub noise_level: Option<f64>,
    /// Seed for noise draws [default: 0, or the checkpoint's]
    #[arg(long)]
    pub seed: Option<u64>,
    /// TV weight [default: 0.001]
    #[arg(long)]
    pub tv_lambda: Option<f64>,
    /// TV iterations [default: 100]
    #[arg(long)]
    pub tv_iters: Option<usize>,
    /// Output CSV path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key-value config file; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) => EXIT_USAGE,
        Error::Format { .. } | Error::Layout(_) => EXIT_FORMAT,
        Error::Numeric(_) | Error::StepSize(_) | Error::UndefinedReference(_) => EXIT_NUMERIC,
        Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Phantom(a) => commands::phantom(a),
        Command::Mask(a) => commands::mask(a),
        Command::Train(a) => commands::train(a),
        Command::Recon(a) => commands::recon(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
