use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetError, MotionSequence, FEATURES, SEQ_LEN};
use crate::numerics::Tensor;

/// Per-feature z-score statistics fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Stores the statistics as `norm/mean` and `norm/std` checkpoint tensors.
    pub fn insert_into(&self, extra: &mut BTreeMap<String, Tensor>) {
        extra.insert("norm/mean".into(), Tensor::from_fn(&[self.mean.len()], |i| self.mean[i]));
        extra.insert("norm/std".into(), Tensor::from_fn(&[self.std.len()], |i| self.std[i]));
    }

    pub fn from_extra(extra: &BTreeMap<String, Tensor>) -> Option<Self> {
        let mean = extra.get("norm/mean")?.data().to_vec();
        let std = extra.get("norm/std")?.data().to_vec();
        Some(Self { mean, std })
    }
}

/// Neumaier-compensated sum, insensitive to summation order for practical inputs.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and population standard deviation of every feature over all frames of `train`.
pub fn fit_normalizer(train: &[MotionSequence]) -> Result<NormStats, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::Empty);
    }
    if train.iter().any(|s| s.normalized) {
        return Err(DatasetError::State("cannot fit statistics on normalized sequences".into()));
    }
    let count = (train.len() * SEQ_LEN) as f64;
    let column = |f: usize| train.iter().flat_map(move |s| (0..SEQ_LEN).map(move |t| s.data()[t * FEATURES + f]));
    let mut mean = Vec::with_capacity(FEATURES);
    let mut std = Vec::with_capacity(FEATURES);
    for f in 0..FEATURES {
        let m = compensated_sum(column(f)) / count;
        let var = compensated_sum(column(f).map(|v| (v - m) * (v - m))) / count;
        let s = var.sqrt();
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(DatasetError::DegenerateFeature(f));
        }
        mean.push(m);
        std.push(s);
    }
    Ok(NormStats { mean, std })
}

fn check_stats(stats: &NormStats) -> Result<(), DatasetError> {
    if stats.mean.len() != FEATURES || stats.std.len() != FEATURES {
        return Err(DatasetError::Shape(format!("statistics must have {FEATURES} features")));
    }
    if let Some(f) = stats.std.iter().position(|&s| !(s > 0.0)) {
        return Err(DatasetError::DegenerateFeature(f));
    }
    Ok(())
}

pub fn apply_zscore(seq: &MotionSequence, stats: &NormStats) -> Result<MotionSequence, DatasetError> {
    if seq.normalized {
        return Err(DatasetError::State("sequence is already normalized".into()));
    }
    check_stats(stats)?;
    let mut out = seq.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let f = i % FEATURES;
        *v = (*v - stats.mean[f]) / stats.std[f];
    }
    out.normalized = true;
    Ok(out)
}

pub fn invert_zscore(seq: &MotionSequence, stats: &NormStats) -> Result<MotionSequence, DatasetError> {
    if !seq.normalized {
        return Err(DatasetError::State("sequence is not normalized".into()));
    }
    check_stats(stats)?;
    let mut out = seq.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let f = i % FEATURES;
        *v = *v * stats.std[f] + stats.mean[f];
    }
    out.normalized = false;
    Ok(out)
}
