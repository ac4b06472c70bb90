//! Label-preserving geometric augmentation of world-space motion sequences.
//!
//! Z is up. Each augmented copy composes a rotation about the bowl's starting
//! position, a scaling about the torso centre and a floor-plane translation,
//! in that order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Marker, MotionSequence, MARKER_COUNT, SEQ_LEN};
use crate::rng::derive_indexed;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("augmentation expects world-space (unnormalized) sequences")]
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    /// Half-width of the uniform X and Y shift, metres.
    pub translate_range: f64,
    pub scale_range: (f64, f64),
    /// Counter-clockwise degrees viewed from +Z.
    pub rotate_range: (f64, f64),
    pub factor: usize,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self { translate_range: 0.20, scale_range: (0.85, 1.15), rotate_range: (0.0, 60.0), factor: 10, seed: 0 }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.factor < 1 {
            return Err(AugmentError::InvalidFactor(format!("factor must be at least 1, got {}", self.factor)));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(AugmentError::InvalidRange(format!("scale range [{lo}, {hi}]")));
        }
        let (a, b) = self.rotate_range;
        if !(a <= b && a.is_finite() && b.is_finite()) {
            return Err(AugmentError::InvalidRange(format!("rotate range [{a}, {b}]")));
        }
        if !(self.translate_range >= 0.0 && self.translate_range.is_finite()) {
            return Err(AugmentError::InvalidRange(format!("translate range {}", self.translate_range)));
        }
        Ok(())
    }
}

fn for_each_marker(seq: &mut MotionSequence, mut f: impl FnMut(usize, [f64; 3]) -> [f64; 3]) {
    for t in 0..SEQ_LEN {
        for m in Marker::ALL {
            let p = seq.marker(t, m);
            seq.set_marker(t, m, f(t, p));
        }
    }
}

pub fn translate_xy(seq: &MotionSequence, dx: f64, dy: f64) -> MotionSequence {
    let mut out = seq.clone();
    for_each_marker(&mut out, |_, [x, y, z]| [x + dx, y + dy, z]);
    out
}

fn mean_of(seq: &MotionSequence, t: usize, markers: &[Marker]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &m in markers {
        let p = seq.marker(t, m);
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    c.map(|v| v / markers.len() as f64)
}

/// Midpoint of the shoulder centre and the waist centre at frame `t`.
pub fn torso_center(seq: &MotionSequence, t: usize) -> [f64; 3] {
    let s = mean_of(seq, t, &Marker::SHOULDERS);
    let w = mean_of(seq, t, &Marker::WAIST);
    [0.5 * (s[0] + w[0]), 0.5 * (s[1] + w[1]), 0.5 * (s[2] + w[2])]
}

/// Scales every marker, bowl included, about the per-frame torso centre.
pub fn scale_about_torso(seq: &MotionSequence, factor: f64) -> Result<MotionSequence, AugmentError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(AugmentError::InvalidFactor(format!("scale factor must be positive, got {factor}")));
    }
    let centers: Vec<[f64; 3]> = (0..SEQ_LEN).map(|t| torso_center(seq, t)).collect();
    let mut out = seq.clone();
    for_each_marker(&mut out, |t, p| {
        let c = centers[t];
        [c[0] + factor * (p[0] - c[0]), c[1] + factor * (p[1] - c[1]), c[2] + factor * (p[2] - c[2])]
    });
    Ok(out)
}

/// Rotates the whole sequence about the vertical line through the bowl's first-frame position.
pub fn rotate_about_bowl_start(seq: &MotionSequence, degrees: f64) -> MotionSequence {
    let [px, py, _] = seq.marker(0, Marker::Bowl);
    let (sin, cos) = degrees.rem_euclid(360.0).to_radians().sin_cos();
    let mut out = seq.clone();
    for_each_marker(&mut out, |_, [x, y, z]| {
        let (u, v) = (x - px, y - py);
        [px + cos * u - sin * v, py + sin * u + cos * v, z]
    });
    out
}

/// One draw of every transform for augmented sample `index`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub degrees: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
}

impl AugmentDraw {
    pub fn sample(spec: &AugmentSpec, index: u64) -> Self {
        let mut rng = derive_indexed(spec.seed, "augment", index);
        let t = spec.translate_range;
        Self {
            degrees: rng.random_range(spec.rotate_range.0..=spec.rotate_range.1),
            scale: rng.random_range(spec.scale_range.0..=spec.scale_range.1),
            dx: rng.random_range(-t..=t),
            dy: rng.random_range(-t..=t),
        }
    }

    pub fn apply(&self, seq: &MotionSequence) -> Result<MotionSequence, AugmentError> {
        let r = rotate_about_bowl_start(seq, self.degrees);
        let s = scale_about_torso(&r, self.scale)?;
        Ok(translate_xy(&s, self.dx, self.dy))
    }
}

/// Lazily yields `input.len() * factor` sequences: the originals, then each further copy in input order.
pub fn augment_iter<'a>(
    input: &'a [MotionSequence],
    spec: &'a AugmentSpec,
) -> Result<impl Iterator<Item = MotionSequence> + 'a, AugmentError> {
    spec.validate()?;
    if input.iter().any(|s| s.normalized) {
        return Err(AugmentError::Normalized);
    }
    let n = input.len();
    Ok((0..n * spec.factor).map(move |k| {
        let seq = &input[k % n];
        if k < n {
            return seq.clone();
        }
        AugmentDraw::sample(spec, k as u64).apply(seq).expect("validated scale range")
    }))
}

pub fn augment_dataset(input: &[MotionSequence], spec: &AugmentSpec) -> Result<Vec<MotionSequence>, AugmentError> {
    Ok(augment_iter(input, spec)?.collect())
}

/// All pairwise marker distances in frame `t`, for invariance checks.
pub fn pairwise_distances(seq: &MotionSequence, t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(MARKER_COUNT * (MARKER_COUNT - 1) / 2);
    for i in 0..MARKER_COUNT {
        for j in i + 1..MARKER_COUNT {
            let a = seq.marker(t, Marker::ALL[i]);
            let b = seq.marker(t, Marker::ALL[j]);
            out.push(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{TrialMeta, FEATURES};
    use proptest::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(seed: u64) -> MotionSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..SEQ_LEN * FEATURES).map(|_| rng.random_range(-1.5..1.5)).collect();
        let meta: TrialMeta = serde_json::from_str(
            r#"{"participant":"p","bowl_size":"small","weight_g":640,"balance":"balanced",
                "orientation":"left","strategy":"B","frame_rate":119.88}"#,
        )
        .unwrap();
        MotionSequence::new(data, false, Some(meta)).unwrap()
    }

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn translate_shifts_x_and_y_only() {
        let s = random_seq(1);
        assert_eq!(translate_xy(&s, 0.0, 0.0), s);
        let t = translate_xy(&s, 0.2, 0.0);
        for (i, (a, b)) in t.data().iter().zip(s.data()).enumerate() {
            let want = if i % 3 == 0 { b + 0.2 } else { *b };
            assert_eq!(*a, want);
        }
    }

    #[test]
    fn scale_multiplies_center_distances() {
        let s = random_seq(2);
        assert!(scale_about_torso(&s, 0.0).is_err());
        assert!(scale_about_torso(&s, -1.0).is_err());
        let one = scale_about_torso(&s, 1.0).unwrap();
        assert!(one.data().iter().zip(s.data()).all(|(a, b)| (a - b).abs() < 1e-15));
        let sc = scale_about_torso(&s, 0.85).unwrap();
        for t in 0..SEQ_LEN {
            let c0 = torso_center(&s, t);
            for m in Marker::ALL {
                let d0 = dist(s.marker(t, m), c0);
                let d1 = dist(sc.marker(t, m), c0);
                assert!((d1 - 0.85 * d0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_keeps_symmetry_about_center() {
        let mut s = random_seq(3);
        let c = torso_center(&s, 0);
        let off = [0.3, -0.2, 0.1];
        s.set_marker(0, Marker::HandLeft, [c[0] + off[0], c[1] + off[1], c[2] + off[2]]);
        s.set_marker(0, Marker::HandRight, [c[0] - off[0], c[1] - off[1], c[2] - off[2]]);
        let sc = scale_about_torso(&s, 1.1).unwrap();
        let a = sc.marker(0, Marker::HandLeft);
        let b = sc.marker(0, Marker::HandRight);
        for k in 0..3 {
            assert!(((a[k] + b[k]) * 0.5 - c[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_quarter_turn_east_to_north() {
        let mut s = random_seq(4);
        let p = s.marker(0, Marker::Bowl);
        s.set_marker(3, Marker::FootLeft, [p[0] + 1.0, p[1], 0.7]);
        let r = rotate_about_bowl_start(&s, 90.0);
        let q = r.marker(3, Marker::FootLeft);
        assert!((q[0] - p[0]).abs() < 1e-12);
        assert!((q[1] - (p[1] + 1.0)).abs() < 1e-12);
        assert_eq!(q[2], 0.7);
        assert_eq!(rotate_about_bowl_start(&s, 0.0), s);
    }

    #[test]
    fn zero_ranges_factor_one_is_identity() {
        let input: Vec<_> = (0..4).map(random_seq).collect();
        let spec = AugmentSpec { translate_range: 0.0, scale_range: (1.0, 1.0), rotate_range: (0.0, 0.0), factor: 1, seed: 3 };
        assert_eq!(augment_dataset(&input, &spec).unwrap(), input);
        let bad = AugmentSpec { factor: 0, ..spec };
        assert!(matches!(augment_dataset(&input, &bad), Err(AugmentError::InvalidFactor(_))));
    }

    #[test]
    fn output_size_labels_and_determinism() {
        let input: Vec<_> = (0..7).map(random_seq).collect();
        let spec = AugmentSpec { factor: 5, seed: 11, ..AugmentSpec::default() };
        let a = augment_dataset(&input, &spec).unwrap();
        let b = augment_dataset(&input, &spec).unwrap();
        assert_eq!(a.len(), 35);
        assert_eq!(a, b);
        assert_eq!(&a[..7], &input[..]);
        for (k, s) in a.iter().enumerate() {
            assert_eq!(s.labels, input[k % 7].labels);
        }
        let other = augment_dataset(&input, &AugmentSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a[7..], other[7..]);
    }

    #[test]
    fn rejects_normalized_input() {
        let mut s = random_seq(1);
        s.normalized = true;
        assert!(matches!(augment_dataset(&[s], &AugmentSpec::default()), Err(AugmentError::Normalized)));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = AugmentSpec { factor: 27, seed: 5, ..AugmentSpec::default() };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<AugmentSpec>(&text).unwrap(), spec);
    }

    proptest! {
        #[test]
        fn rigid_transforms_preserve_distances(seed in 0u64..500, dx in -1.0f64..1.0, dy in -1.0f64..1.0, deg in -720.0f64..720.0) {
            let s = random_seq(seed);
            let p = s.marker(0, Marker::Bowl);
            for out in [translate_xy(&s, dx, dy), rotate_about_bowl_start(&s, deg)] {
                for t in [0, 13, 31] {
                    for (a, b) in pairwise_distances(&out, t).iter().zip(pairwise_distances(&s, t)) {
                        prop_assert!((a - b).abs() < 1e-9);
                    }
                }
            }
            let r = rotate_about_bowl_start(&s, deg).marker(0, Marker::Bowl);
            prop_assert!((r[0] - p[0]).abs() < 1e-12 && (r[1] - p[1]).abs() < 1e-12);
        }

        #[test]
        fn scale_then_inverse_recovers(seed in 0u64..500, f in 0.5f64..2.0) {
            let s = random_seq(seed);
            let back = scale_about_torso(&scale_about_torso(&s, f).unwrap(), 1.0 / f).unwrap();
            for (a, b) in back.data().iter().zip(s.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
