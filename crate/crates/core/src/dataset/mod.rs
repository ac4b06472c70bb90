//! Trials, fixed-length motion sequences, normalization and marker clusters.

mod archive;
mod clusters;
mod io;
mod normalize;
mod preprocess;

use serde::{Deserialize, Serialize};

pub use archive::{SequenceArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use clusters::{cluster_split, ClusterView, CLUSTER_MARKERS, CLUSTER_WIDTHS};
pub use io::{
    column_names, load_trial, load_trials, read_sequence_csv, write_sequence_csv, write_trial, LoadReport,
};
pub use normalize::{apply_zscore, fit_normalizer, invert_zscore, NormStats};
pub use preprocess::{
    bowl_speeds, centered_indices, resample_centered, resample_uniform, trim_to_motion, uniform_indices,
    TrimConfig, CENTERED_STRIDE,
};

/// Frames per sequence after resampling.
pub const SEQ_LEN: usize = 32;
/// Tracked markers: 15 on the body plus the bowl.
pub const MARKER_COUNT: usize = 16;
/// Coordinates per frame (x, y, z for every marker).
pub const FEATURES: usize = 3 * MARKER_COUNT;
/// Capture rate of the recording system, Hz.
pub const DEFAULT_FRAME_RATE: f64 = 119.88;

/// Marker slots in column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(usize)]
pub enum Marker {
    HeadFrontLeft,
    HeadFrontRight,
    HeadBackLeft,
    HeadBackRight,
    ShoulderLeft,
    ShoulderRight,
    C7,
    WaistFrontLeft,
    WaistFrontRight,
    WaistBackLeft,
    WaistBackRight,
    HandLeft,
    HandRight,
    FootLeft,
    FootRight,
    Bowl,
}

impl Marker {
    pub const ALL: [Marker; MARKER_COUNT] = [
        Marker::HeadFrontLeft,
        Marker::HeadFrontRight,
        Marker::HeadBackLeft,
        Marker::HeadBackRight,
        Marker::ShoulderLeft,
        Marker::ShoulderRight,
        Marker::C7,
        Marker::WaistFrontLeft,
        Marker::WaistFrontRight,
        Marker::WaistBackLeft,
        Marker::WaistBackRight,
        Marker::HandLeft,
        Marker::HandRight,
        Marker::FootLeft,
        Marker::FootRight,
        Marker::Bowl,
    ];
    pub const HEAD: [Marker; 4] =
        [Marker::HeadFrontLeft, Marker::HeadFrontRight, Marker::HeadBackLeft, Marker::HeadBackRight];
    pub const SHOULDERS: [Marker; 2] = [Marker::ShoulderLeft, Marker::ShoulderRight];
    pub const WAIST: [Marker; 4] =
        [Marker::WaistFrontLeft, Marker::WaistFrontRight, Marker::WaistBackLeft, Marker::WaistBackRight];

    pub fn index(self) -> usize {
        self as usize
    }

    /// First of the three feature columns belonging to this marker.
    pub fn column(self) -> usize {
        3 * self.index()
    }

    pub fn name(self) -> &'static str {
        match self {
            Marker::HeadFrontLeft => "head_front_left",
            Marker::HeadFrontRight => "head_front_right",
            Marker::HeadBackLeft => "head_back_left",
            Marker::HeadBackRight => "head_back_right",
            Marker::ShoulderLeft => "shoulder_left",
            Marker::ShoulderRight => "shoulder_right",
            Marker::C7 => "c7",
            Marker::WaistFrontLeft => "waist_front_left",
            Marker::WaistFrontRight => "waist_front_right",
            Marker::WaistBackLeft => "waist_back_left",
            Marker::WaistBackRight => "waist_back_right",
            Marker::HandLeft => "hand_left",
            Marker::HandRight => "hand_right",
            Marker::FootLeft => "foot_left",
            Marker::FootRight => "foot_right",
            Marker::Bowl => "bowl",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BowlSize {
    Small,
    Medium,
    Large,
    Largest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u32", try_from = "u32")]
pub enum Weight {
    Heavy,
    Heavier,
    Heaviest,
}

impl Weight {
    pub const ALL: [Weight; 3] = [Weight::Heavy, Weight::Heavier, Weight::Heaviest];

    pub fn grams(self) -> u32 {
        match self {
            Weight::Heavy => 640,
            Weight::Heavier => 1140,
            Weight::Heaviest => 1640,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Weight::Heavy => "heavy",
            Weight::Heavier => "heavier",
            Weight::Heaviest => "heaviest",
        }
    }
}

impl From<Weight> for u32 {
    fn from(w: Weight) -> u32 {
        w.grams()
    }
}

impl TryFrom<u32> for Weight {
    type Error = String;

    fn try_from(g: u32) -> Result<Self, String> {
        match g {
            640 => Ok(Weight::Heavy),
            1140 => Ok(Weight::Heavier),
            1640 => Ok(Weight::Heaviest),
            other => Err(format!("no weight condition of {other} g")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Balanced,
    Unbalanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Facing,
    Left,
    Right,
}

/// Observed transport strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Unimanual, left hand.
    A,
    /// Unimanual, right hand.
    B,
    /// Left-to-right hand-off.
    C,
    /// Right-to-left hand-off.
    D,
    /// Left hand to bimanual.
    E,
    /// Right hand to bimanual.
    F,
    /// Bimanual.
    G,
    /// Bimanual to right hand.
    H,
    /// Bimanual to left hand.
    I,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::A,
        Strategy::B,
        Strategy::C,
        Strategy::D,
        Strategy::E,
        Strategy::F,
        Strategy::G,
        Strategy::H,
        Strategy::I,
    ];

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }
}

/// Recording conditions and observed strategy of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub participant: String,
    pub bowl_size: BowlSize,
    #[serde(rename = "weight_g")]
    pub weight: Weight,
    pub balance: Balance,
    pub orientation: Orientation,
    pub strategy: Strategy,
    pub frame_rate: f64,
}

impl TrialMeta {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.bowl_size == BowlSize::Largest && self.weight == Weight::Heavy {
            return Err(DatasetError::InvalidCondition("largest bowl cannot be in the heavy condition".into()));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(DatasetError::InvalidCondition(format!("frame rate {}", self.frame_rate)));
        }
        Ok(())
    }
}

/// One frame: x, y, z for each marker in [`Marker`] order, metres.
pub type Frame = [f64; FEATURES];

/// One raw recording.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    /// File stem the trial was loaded from.
    pub id: String,
    pub meta: TrialMeta,
    pub frames: Vec<Frame>,
}

impl Trial {
    pub fn new(id: impl Into<String>, meta: TrialMeta, frames: Vec<Frame>) -> Result<Self, DatasetError> {
        meta.validate()?;
        if let Some((i, _)) = frames.iter().enumerate().find(|(_, f)| f.iter().any(|v| !v.is_finite())) {
            return Err(DatasetError::NonFinite { frame: i });
        }
        Ok(Self { id: id.into(), meta, frames })
    }

    pub fn marker(&self, frame: usize, m: Marker) -> [f64; 3] {
        let c = m.column();
        let f = &self.frames[frame];
        [f[c], f[c + 1], f[c + 2]]
    }
}

/// A fixed 32 × 48 window: the unit of training and generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    data: Vec<f64>,
    pub normalized: bool,
    pub labels: Option<TrialMeta>,
}

impl MotionSequence {
    pub fn new(data: Vec<f64>, normalized: bool, labels: Option<TrialMeta>) -> Result<Self, DatasetError> {
        if data.len() != SEQ_LEN * FEATURES {
            return Err(DatasetError::Shape(format!(
                "sequence needs {} values, got {}",
                SEQ_LEN * FEATURES,
                data.len()
            )));
        }
        Ok(Self { data, normalized, labels })
    }

    pub fn from_frames(frames: &[Frame], normalized: bool, labels: Option<TrialMeta>) -> Result<Self, DatasetError> {
        if frames.len() != SEQ_LEN {
            return Err(DatasetError::Shape(format!("sequence needs {SEQ_LEN} frames, got {}", frames.len())));
        }
        Self::new(frames.iter().flatten().copied().collect(), normalized, labels)
    }

    /// Row-major `SEQ_LEN × FEATURES` values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * FEATURES..(t + 1) * FEATURES]
    }

    pub fn marker(&self, t: usize, m: Marker) -> [f64; 3] {
        let i = t * FEATURES + m.column();
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_marker(&mut self, t: usize, m: Marker, p: [f64; 3]) {
        let i = t * FEATURES + m.column();
        self.data[i..i + 3].copy_from_slice(&p);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{file}:{line}: {message}")]
    Malformed { file: String, line: usize, message: String },
    #[error("unknown value {value:?} for field `{field}`")]
    UnknownValue { field: String, value: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("trial has no C7 marker column")]
    MissingC7,
    #[error("non-finite coordinate in frame {frame}")]
    NonFinite { frame: usize },
    #[error("invalid condition: {0}")]
    InvalidCondition(String),
    #[error("bowl never reaches the motion threshold")]
    NoMotion,
    #[error("only {frames} frames available, at least {needed} required")]
    TooShort { frames: usize, needed: usize },
    #[error("feature {0} has zero variance")]
    DegenerateFeature(usize),
    #[error("empty input set")]
    Empty,
    #[error("state error: {0}")]
    State(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("archive: {0}")]
    Archive(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DatasetError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.display().to_string(), source }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn meta() -> TrialMeta {
        TrialMeta {
            participant: "p01".into(),
            bowl_size: BowlSize::Medium,
            weight: Weight::Heavier,
            balance: Balance::Balanced,
            orientation: Orientation::Facing,
            strategy: Strategy::G,
            frame_rate: DEFAULT_FRAME_RATE,
        }
    }

    /// Deterministic, non-degenerate frame content.
    pub fn frame(t: usize, salt: f64) -> Frame {
        let mut f = [0.0; FEATURES];
        for (j, v) in f.iter_mut().enumerate() {
            *v = ((t as f64) * 0.013 + (j as f64) * 0.71 + salt).sin() + 0.01 * j as f64;
        }
        f
    }

    pub fn sequence(salt: f64) -> MotionSequence {
        let frames: Vec<Frame> = (0..SEQ_LEN).map(|t| frame(t, salt)).collect();
        MotionSequence::from_frames(&frames, false, Some(meta())).unwrap()
    }
}
