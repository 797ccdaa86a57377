mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emotion_forge::dataset::TaskMode;

/// Facial expression recognition pipeline: align, augment, train, evaluate, infer.
#[derive(Debug, Parser)]
#[command(name = "emotion-forge", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align every PGM in a directory that has a .lm68 landmark sidecar.
    Align {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the 28 brightness/blur variants of every input image.
    Augment {
        /// Directory of PGM images (ignored when --manifest is given).
        input: Option<PathBuf>,
        /// Augment the images a manifest lists and write a matching manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Confusion matrix, accuracy and (regression) RMSE of a model on a manifest.
    Eval {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Defaults to the model's head.
        #[arg(long)]
        mode: Option<TaskMode>,
    },
    /// Score a single image.
    Infer {
        image: PathBuf,
        /// Landmark file; defaults to the image's .lm68 sidecar.
        #[arg(long)]
        landmarks: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mode: Option<TaskMode>,
    },
    /// Score a frame sequence with temporal smoothing.
    Stream {
        /// Directory of numbered PGM frames; without it, frame paths are read from stdin.
        frames: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mode: Option<TaskMode>,
        #[arg(long, default_value_t = emotion_forge::stream::DEFAULT_ALPHA)]
        alpha: f64,
        /// Write records here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub manifest: PathBuf,
    /// Validation manifest, scored at every checkpoint.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value = "classification")]
    pub mode: TaskMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50_000)]
    pub iterations: u64,
    #[arg(long, default_value_t = 1_000)]
    pub checkpoint_every: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log path; defaults to the model path with a .history extension.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Save a resumable checkpoint here at every checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint instead of a fresh initialisation.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

fn configure_threads() -> Result<(), commands::Failure> {
    let Ok(value) = std::env::var("EMOTION_FORGE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        commands::Failure::Usage(format!(
            "EMOTION_FORGE_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    if threads == 0 {
        return Err(commands::Failure::Usage(
            "EMOTION_FORGE_THREADS must be at least 1".into(),
        ));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| commands::Failure::Internal(e.into()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
