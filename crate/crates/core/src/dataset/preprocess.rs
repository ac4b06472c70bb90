use serde::{Deserialize, Serialize};

use super::{DatasetError, Marker, MotionSequence, Trial, SEQ_LEN};

/// Preferred spacing between sampled frames for the classifier windows.
pub const CENTERED_STRIDE: usize = 12;

/// Bowl-motion detection parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimConfig {
    /// m/s
    pub speed_threshold: f64,
    pub hold_frames: usize,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self { speed_threshold: 0.05, hold_frames: 12 }
    }
}

/// Per-frame bowl speed in m/s. Uses backward differences; frame 0 copies frame 1.
pub fn bowl_speeds(trial: &Trial) -> Vec<f64> {
    let n = trial.frames.len();
    let mut out = vec![0.0; n];
    for t in 1..n {
        let a = trial.marker(t - 1, Marker::Bowl);
        let b = trial.marker(t, Marker::Bowl);
        let d = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
        out[t] = d * trial.meta.frame_rate;
    }
    if n > 1 {
        out[0] = out[1];
    }
    out
}

fn first_sustained(moving: impl Iterator<Item = (usize, bool)>, hold: usize) -> Option<usize> {
    let mut run = 0;
    let mut start = 0;
    for (i, m) in moving {
        if m {
            if run == 0 {
                start = i;
            }
            run += 1;
            if run >= hold {
                return Some(start);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Keeps the span from the first to the last frame at which the bowl moves at or above the
/// threshold for `hold_frames` consecutive frames.
pub fn trim_to_motion(trial: &Trial, cfg: TrimConfig) -> Result<Trial, DatasetError> {
    let speeds = bowl_speeds(trial);
    let hold = cfg.hold_frames.max(1);
    let moving = |i: usize| speeds[i] >= cfg.speed_threshold;
    let n = speeds.len();
    let first = first_sustained((0..n).map(|i| (i, moving(i))), hold).ok_or(DatasetError::NoMotion)?;
    let last = first_sustained((0..n).rev().map(|i| (i, moving(i))), hold).ok_or(DatasetError::NoMotion)?;
    let kept = last + 1 - first;
    if kept < SEQ_LEN {
        return Err(DatasetError::TooShort { frames: kept, needed: SEQ_LEN });
    }
    Ok(Trial { id: trial.id.clone(), meta: trial.meta.clone(), frames: trial.frames[first..=last].to_vec() })
}

/// Indices of the centered window: stride 12 when it fits, otherwise the largest stride that does.
pub fn centered_indices(n: usize) -> Result<Vec<usize>, DatasetError> {
    if n < SEQ_LEN {
        return Err(DatasetError::TooShort { frames: n, needed: SEQ_LEN });
    }
    let stride = ((n - 1) / (SEQ_LEN - 1)).clamp(1, CENTERED_STRIDE);
    let span = (SEQ_LEN - 1) * stride;
    let center = n / 2;
    let start = center.saturating_sub(span / 2).min(n - 1 - span);
    Ok((0..SEQ_LEN).map(|i| start + i * stride).collect())
}

/// `round(i * (n - 1) / 31)` for i in 0..32, halves rounded up, in exact integer arithmetic.
pub fn uniform_indices(n: usize) -> Result<Vec<usize>, DatasetError> {
    if n < SEQ_LEN {
        return Err(DatasetError::TooShort { frames: n, needed: SEQ_LEN });
    }
    let d = SEQ_LEN - 1;
    Ok((0..SEQ_LEN).map(|i| (2 * i * (n - 1) + d) / (2 * d)).collect())
}

fn select(trial: &Trial, idx: &[usize]) -> Result<MotionSequence, DatasetError> {
    let frames: Vec<_> = idx.iter().map(|&i| trial.frames[i]).collect();
    MotionSequence::from_frames(&frames, false, Some(trial.meta.clone()))
}

pub fn resample_centered(trial: &Trial) -> Result<MotionSequence, DatasetError> {
    select(trial, &centered_indices(trial.frames.len())?)
}

pub fn resample_uniform(trial: &Trial) -> Result<MotionSequence, DatasetError> {
    select(trial, &uniform_indices(trial.frames.len())?)
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures, Frame, FEATURES};
    use super::*;
    use proptest::prelude::*;

    fn bowl_trial(positions: &[f64]) -> Trial {
        let frames: Vec<Frame> = positions
            .iter()
            .map(|&x| {
                let mut f = [0.1; FEATURES];
                f[Marker::Bowl.column()] = x;
                f
            })
            .collect();
        Trial::new("t", fixtures::meta(), frames).unwrap()
    }

    #[test]
    fn trims_to_known_motion_window() {
        // 1-based frames 101..=500 move at 0.5 m/s; everything else is still.
        let dt = 1.0 / fixtures::meta().frame_rate;
        let mut x = 0.0;
        let mut pos = Vec::new();
        for frame in 1..=700 {
            if (101..=500).contains(&frame) {
                x += 0.5 * dt;
            }
            pos.push(x);
        }
        let t = bowl_trial(&pos);
        let trimmed = trim_to_motion(&t, TrimConfig::default()).unwrap();
        assert_eq!(trimmed.frames.len(), 400);
        assert_eq!(trimmed.frames[0], t.frames[100]);
        assert_eq!(trimmed.frames[399], t.frames[499]);
    }

    #[test]
    fn moving_everywhere_is_unchanged() {
        let pos: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let t = bowl_trial(&pos);
        assert_eq!(trim_to_motion(&t, TrimConfig::default()).unwrap(), t);
    }

    #[test]
    fn static_bowl_is_no_motion() {
        let t = bowl_trial(&[0.3; 100]);
        assert!(matches!(trim_to_motion(&t, TrimConfig::default()), Err(DatasetError::NoMotion)));
    }

    #[test]
    fn short_motion_is_too_short() {
        let mut pos = vec![0.0; 100];
        for (i, p) in pos.iter_mut().enumerate().skip(40).take(20) {
            *p = (i - 39) as f64 * 0.01;
        }
        for p in pos.iter_mut().skip(60) {
            *p = 0.2;
        }
        let t = bowl_trial(&pos);
        assert!(matches!(trim_to_motion(&t, TrimConfig::default()), Err(DatasetError::TooShort { .. })));
    }

    #[test]
    fn centered_examples() {
        let idx = centered_indices(500).unwrap();
        assert_eq!(idx[0], 64);
        assert_eq!(idx[31], 436);
        assert!(idx.windows(2).all(|w| w[1] - w[0] == 12));

        let idx = centered_indices(1199).unwrap();
        assert_eq!(idx[1] - idx[0], 12);
        assert_eq!(idx[0] + idx[31], 2 * 599);

        assert_eq!(centered_indices(32).unwrap(), (0..32).collect::<Vec<_>>());
        assert!(centered_indices(31).is_err());
    }

    fn brute_round(i: usize, n: usize) -> usize {
        // Nearest integer to i*(n-1)/31, found by search rather than formula.
        let target = i as f64 * (n - 1) as f64 / 31.0;
        (0..n).min_by(|a, b| {
            let da = (*a as f64 - target).abs();
            let db = (*b as f64 - target).abs();
            da.partial_cmp(&db).unwrap().then(b.cmp(a))
        }).unwrap()
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_indices(32).unwrap(), (0..32).collect::<Vec<_>>());
        assert_eq!(uniform_indices(63).unwrap(), (0..32).map(|i| 2 * i).collect::<Vec<_>>());
        let idx = uniform_indices(1199).unwrap();
        assert_eq!(&idx[..3], &[0, 39, 77]);
        assert_eq!(idx[31], 1198);
        for (i, &v) in idx.iter().enumerate() {
            assert_eq!(v, brute_round(i, 1199));
        }
    }

    proptest! {
        #[test]
        fn resamplers_are_increasing_and_in_range(n in 32usize..5000) {
            for idx in [centered_indices(n).unwrap(), uniform_indices(n).unwrap()] {
                prop_assert_eq!(idx.len(), 32);
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(*idx.last().unwrap() < n);
            }
            let u = uniform_indices(n).unwrap();
            prop_assert_eq!(u[0], 0);
            prop_assert_eq!(u[31], n - 1);
        }
    }
}
