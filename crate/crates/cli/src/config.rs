//! Resolved run configurations. Each subcommand starts from its defaults,
//! overlays an optional JSON config file, then overlays command-line flags.
//! The result is written to the output directory as `config.json`, which can
//! be passed back with `--config` to repeat the run.

use std::path::{Path, PathBuf};

use anyhow::Context;
use mocap_core::augment::AugmentSpec;
use mocap_core::classifier::{HierarchicalNetSpec, Task};
use mocap_core::gan::{CriticSpec, GanKind, GeneratorSpec};
use mocap_core::render::{ExportFormat, RenderStyle};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())).into())
        }
    }
}

pub fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, UsageError> {
    value.as_deref().ok_or_else(|| UsageError(format!("{flag} is required (flag or config file)")))
}

/// Copies every `Some` flag value over the matching config field.
macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = v.into(); } )+
    };
}
pub(crate) use overlay;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Every 12th frame (or closer) around the middle of the trimmed trial.
    #[default]
    Centered,
    /// 32 frames spread over the whole trimmed trial.
    Uniform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub speed_threshold: f64,
    pub hold_frames: usize,
    pub sampling: Sampling,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let trim = mocap_core::dataset::TrimConfig::default();
        Self { input: None, out: None, speed_threshold: trim.speed_threshold, hold_frames: trim.hold_frames, sampling: Sampling::Centered }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub augment: AugmentSpec,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { input: None, out: None, augment: AugmentSpec::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainClassifierConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: Task,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment_factor: usize,
    /// Task default when absent (50 for weight, 100 otherwise).
    pub validation_size: Option<usize>,
    pub net: HierarchicalNetSpec,
}

impl Default for TrainClassifierConfig {
    fn default() -> Self {
        let train = mocap_core::classifier::ClassifierTrainConfig::default();
        Self {
            input: None,
            out: None,
            task: Task::Weight,
            epochs: train.epochs,
            batch: train.batch,
            learning_rate: train.learning_rate,
            seed: 0,
            augment_factor: AugmentSpec::default().factor,
            validation_size: None,
            net: HierarchicalNetSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalClassifierConfig {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainGanConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub kind: GanKind,
    pub epochs: usize,
    pub batch: usize,
    pub critic_steps: usize,
    pub gp_lambda: f64,
    pub real_label: f64,
    pub gen_batchnorm: bool,
    pub seed: u64,
    pub augment_factor: usize,
    pub max_generator_steps: Option<usize>,
    pub generator_learning_rate: Option<f64>,
    pub critic_learning_rate: Option<f64>,
    pub diversity_samples: usize,
    /// Derived from `kind` when absent.
    pub generator: Option<GeneratorSpec>,
    /// Derived from `kind` when absent.
    pub critic: Option<CriticSpec>,
}

impl Default for TrainGanConfig {
    fn default() -> Self {
        let spec = mocap_core::gan::GanTrainSpec::default();
        Self {
            input: None,
            out: None,
            kind: spec.kind,
            epochs: spec.epochs,
            batch: spec.batch,
            critic_steps: spec.critic_steps,
            gp_lambda: spec.gp_lambda,
            real_label: spec.real_label,
            gen_batchnorm: spec.generator_batchnorm,
            seed: 0,
            augment_factor: 27,
            max_generator_steps: None,
            generator_learning_rate: None,
            critic_learning_rate: None,
            diversity_samples: spec.diversity_samples,
            generator: None,
            critic: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub count: usize,
    /// `weight=<heavy|heavier|heaviest>,balance=<balanced|unbalanced>`; conditional models only.
    pub label: Option<String>,
    pub render: bool,
    pub format: ExportFormat,
    pub seed: u64,
    pub style: RenderStyle,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            model: None,
            out: None,
            count: 1,
            label: None,
            render: false,
            format: ExportFormat::Jsonl,
            seed: 0,
            style: RenderStyle::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: ExportFormat,
    pub topology: Option<PathBuf>,
    pub style: RenderStyle,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { input: None, out: None, format: ExportFormat::Jsonl, topology: None, style: RenderStyle::default() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}
