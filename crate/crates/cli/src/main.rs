//! `mocap`: ingest, augment, train, evaluate, generate and render motion-capture sequences.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mocap_core::classifier::Task;
use mocap_core::gan::GanKind;
use mocap_core::render::ExportFormat;
use serde::de::DeserializeOwned;

use config::Sampling;

/// Bad invocation detected after argument parsing (missing input, bad config file).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

#[derive(Parser)]
#[command(name = "mocap", version, about = "Motion-capture analysis and synthesis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load trial CSV + JSON pairs, trim to the bowl's motion and resample to 32 frames.
    Ingest(IngestArgs),
    /// Expand a sequence archive with random rotations, scalings and translations.
    Augment(AugmentArgs),
    /// Train the three-branch classifier on one labelling task.
    TrainClassifier(TrainClassifierArgs),
    /// Score a trained classifier on an archive.
    EvalClassifier(EvalClassifierArgs),
    /// Train a DCGAN or (conditional) WGAN-GP sequence generator.
    TrainGan(TrainGanArgs),
    /// Sample sequences from a trained generator.
    Generate(GenerateArgs),
    /// Export skeleton geometry for a sequence CSV or archive.
    Render(RenderArgs),
    /// Print label frequencies of a trial directory.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of trial files.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory (sequences.json, config.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bowl speed (m/s) that counts as motion [default: 0.05].
    #[arg(long)]
    speed_threshold: Option<f64>,
    /// Consecutive frames above the threshold that start or end the motion [default: 12].
    #[arg(long)]
    hold_frames: Option<usize>,
    /// Frame selection [default: centered].
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence archive.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output size as a multiple of the input, originals included [default: 10].
    #[arg(long)]
    factor: Option<usize>,
    /// Largest horizontal shift in metres [default: 0.2].
    #[arg(long)]
    translate: Option<f64>,
    /// Smallest scale factor [default: 0.85].
    #[arg(long)]
    scale_min: Option<f64>,
    /// Largest scale factor [default: 1.15].
    #[arg(long)]
    scale_max: Option<f64>,
    /// Smallest rotation in degrees [default: 0].
    #[arg(long)]
    rotate_min: Option<f64>,
    /// Largest rotation in degrees [default: 60].
    #[arg(long)]
    rotate_max: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence archive from `ingest` (not normalized).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// weight, balance or strategy [default: weight].
    #[arg(long, value_parser = serde_enum::<Task>)]
    task: Option<Task>,
    /// [default: 400]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Training-set augmentation factor [default: 10].
    #[arg(long)]
    augment_factor: Option<usize>,
    /// Validation samples [default: 50 for weight, 100 otherwise].
    #[arg(long)]
    validation_size: Option<usize>,
    /// JSON network layout (filters, spacings, kernel, pool, dense units, dropout).
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalClassifierArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint written by `train-classifier`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sequence archive (not normalized).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optional directory for evaluation.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainGanArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence archive from `ingest --sampling uniform` (not normalized).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// dcgan, wgan-gp or cond-wgan-gp [default: wgan-gp].
    #[arg(long, value_parser = serde_enum::<GanKind>)]
    kind: Option<GanKind>,
    /// [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    batch: Option<usize>,
    /// Critic updates per generator update [default: 15].
    #[arg(long)]
    critic_steps: Option<usize>,
    /// Gradient-penalty weight [default: 10].
    #[arg(long)]
    gp_lambda: Option<f64>,
    /// DCGAN real-label target [default: 0.9].
    #[arg(long)]
    real_label: Option<f64>,
    /// Batch normalization in the generator, on or off [default: off].
    #[arg(long, value_parser = on_off)]
    gen_batchnorm: Option<bool>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Augmentation factor applied before training [default: 27].
    #[arg(long)]
    augment_factor: Option<usize>,
    /// Stop after this many generator updates.
    #[arg(long)]
    max_generator_steps: Option<usize>,
    /// Generated samples for the diversity check, 0 to skip [default: 500].
    #[arg(long)]
    diversity_samples: Option<usize>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator checkpoint written by `train-gan`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of sequences [default: 1].
    #[arg(long)]
    count: Option<usize>,
    /// Condition for conditional models, e.g. weight=heavy,balance=balanced.
    #[arg(long)]
    label: Option<String>,
    /// Also export skeleton geometry for each sequence.
    #[arg(long)]
    render: bool,
    /// jsonl or svg [default: jsonl].
    #[arg(long)]
    format: Option<ExportFormat>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence CSV or archive.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// jsonl or svg [default: jsonl].
    #[arg(long)]
    format: Option<ExportFormat>,
    /// JSON bone list replacing the default skeleton.
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of trial files.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optional directory for stats.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Augment(a) => commands::augment(a),
        Command::TrainClassifier(a) => commands::train_classifier(a),
        Command::EvalClassifier(a) => commands::eval_classifier(a),
        Command::TrainGan(a) => commands::train_gan(a),
        Command::Generate(a) => commands::generate(a),
        Command::Render(a) => commands::render(a),
        Command::Stats(a) => commands::stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
