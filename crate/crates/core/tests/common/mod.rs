//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use mocap_core::dataset::{Marker, MotionSequence, FEATURES, SEQ_LEN};
use mocap_core::gan::GanData;
use mocap_core::numerics::ops::{self, BatchNormState, Mode};
use mocap_core::numerics::{grad_check_many, NumericsError, Tape, Tensor, Var};
use mocap_core::rng::derive_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Scalar read-out `sum(y ⊙ r)` with a fixed random `r`, so every output element
/// gets a distinct weight in the checked gradient.
fn project<'t>(y: Var<'t>, r: &Tensor) -> Result<Var<'t>, NumericsError> {
    y.mul(y.tape().constant(r.clone())).map(|v| v.sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d,
    MaxPool,
    Upsample,
    Dense,
    BatchNorm,
    SoftmaxCrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Conv1d,
        LayerKind::MaxPool,
        LayerKind::Upsample,
        LayerKind::Dense,
        LayerKind::BatchNorm,
        LayerKind::SoftmaxCrossEntropy,
    ];
}

/// Worst relative finite-difference error for one random instance of `kind`.
pub fn layer_case(kind: LayerKind, rng: &mut ChaCha8Rng) -> Result<f64, NumericsError> {
    match kind {
        LayerKind::Conv1d => {
            let (b, t, c, f) = (rng.random_range(1..3usize), rng.random_range(3..10usize), rng.random_range(1..4), rng.random_range(1..4));
            let k = rng.random_range(1..4);
            let stride = rng.random_range(1..3);
            let spacing = rng.random_range(0..2);
            if k + (k - 1) * spacing > t + 2 * ops::same_padding(k, spacing) {
                return layer_case(kind, rng);
            }
            let out = [b, ops::conv_output_len(t, stride), f];
            let r = random_tensor(rng, &out);
            let inputs = [random_tensor(rng, &[b, t, c]), random_tensor(rng, &[k, c, f]), random_tensor(rng, &[f])];
            grad_check_many(|_, v| project(ops::conv1d(v[0], v[1], v[2], stride, spacing)?, &r), &inputs, FD_STEP)
        }
        LayerKind::MaxPool => {
            let (b, t, c) = (rng.random_range(1..3usize), rng.random_range(2..10usize), rng.random_range(1..4usize));
            let size = rng.random_range(2..4);
            let r = random_tensor(rng, &[b, t.div_ceil(size), c]);
            let x = random_tensor(rng, &[b, t, c]);
            grad_check_many(|_, v| project(ops::maxpool1d(v[0], size)?, &r), &[x], FD_STEP)
        }
        LayerKind::Upsample => {
            let (b, t, c) = (rng.random_range(1..3), rng.random_range(1..6), rng.random_range(1..4));
            let factor = rng.random_range(1..4);
            let r = random_tensor(rng, &[b, t * factor, c]);
            let x = random_tensor(rng, &[b, t, c]);
            grad_check_many(|_, v| project(ops::upsample1d(v[0], factor)?, &r), &[x], FD_STEP)
        }
        LayerKind::Dense => {
            let (b, n, u) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..5));
            let r = random_tensor(rng, &[b, u]);
            let inputs = [random_tensor(rng, &[b, n]), random_tensor(rng, &[n, u]), random_tensor(rng, &[u])];
            grad_check_many(|_, v| project(ops::dense(v[0], v[1], v[2])?, &r), &inputs, FD_STEP)
        }
        LayerKind::BatchNorm => {
            let (b, t, c) = (rng.random_range(2..5), rng.random_range(1..4), rng.random_range(1..4));
            let r = random_tensor(rng, &[b, t, c]);
            let state = BatchNormState::new(c, 0.99, 1e-5);
            let inputs = [random_tensor(rng, &[b, t, c]), random_tensor(rng, &[c]), random_tensor(rng, &[c])];
            grad_check_many(|_, v| project(ops::batchnorm(v[0], v[1], v[2], &state, Mode::Train)?.0, &r), &inputs, FD_STEP)
        }
        LayerKind::SoftmaxCrossEntropy => {
            let (b, k) = (rng.random_range(1..6), rng.random_range(2..6));
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
            let logits = Tensor::from_fn(&[b, k], |_| rng.random_range(-3.0..3.0));
            grad_check_many(|_, v| ops::softmax_cross_entropy(v[0], &labels), &[logits], FD_STEP)
        }
    }
}

/// Worst error over `cases` random instances of every layer kind.
pub fn layer_suite(cases: usize, seed: u64) -> Result<Vec<(LayerKind, f64)>, NumericsError> {
    LayerKind::ALL
        .iter()
        .map(|&kind| {
            let mut rng = derive_rng(seed, &format!("gradcheck/{kind:?}"));
            let mut worst: f64 = 0.0;
            for _ in 0..cases {
                worst = worst.max(layer_case(kind, &mut rng)?);
            }
            Ok((kind, worst))
        })
        .collect()
}

/// Direct loop convolution with the same padding and tap-spacing rules.
pub fn naive_conv(x: &Tensor, w: &Tensor, bias: &Tensor, stride: usize, spacing: usize) -> Tensor {
    let (b, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, f) = (w.shape()[0], w.shape()[2]);
    let pad = ((k - 1) * (1 + spacing) / 2) as isize;
    let t_out = t.div_ceil(stride);
    let mut y = Tensor::zeros(&[b, t_out, f]);
    for bi in 0..b {
        for to in 0..t_out {
            for fi in 0..f {
                let mut acc = bias.data()[fi];
                for ki in 0..k {
                    let ti = (to * stride + ki * (1 + spacing)) as isize - pad;
                    if ti < 0 || ti >= t as isize {
                        continue;
                    }
                    for ci in 0..c {
                        acc += x.data()[(bi * t + ti as usize) * c + ci] * w.data()[(ki * c + ci) * f + fi];
                    }
                }
                y.data_mut()[(bi * t_out + to) * f + fi] = acc;
            }
        }
    }
    y
}

/// Largest absolute difference between `conv1d` and [`naive_conv`] over random configurations.
pub fn conv_oracle(cases: usize, seed: u64) -> Result<f64, NumericsError> {
    let mut rng = derive_rng(seed, "conv-oracle");
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let (b, t, c, f) = (rng.random_range(1..4usize), rng.random_range(1..40usize), rng.random_range(1..6), rng.random_range(1..6));
        let (k, stride, spacing) = (rng.random_range(1..6), rng.random_range(1..4), rng.random_range(0..3));
        if k + (k - 1) * spacing > t + 2 * ops::same_padding(k, spacing) {
            continue;
        }
        let x = random_tensor(&mut rng, &[b, t, c]);
        let w = random_tensor(&mut rng, &[k, c, f]);
        let bias = random_tensor(&mut rng, &[f]);
        let tape = Tape::new();
        let y = ops::conv1d(tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(bias.clone()), stride, spacing)?;
        worst = worst.max(y.value().max_abs_diff(&naive_conv(&x, &w, &bias, stride, spacing)));
        done += 1;
    }
    Ok(worst)
}

/// Mode `m` of the toy motion set with amplitude `amp` and time shift `phase`, `[32, 4]`.
fn toy_mode(m: usize, amp: f64, phase: f64) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    (0..32)
        .flat_map(|t| {
            (0..4).map(move |c| {
                let s = tau * t as f64 / 32.0 + phase;
                if m == 0 {
                    amp * (s + 0.5 * c as f64).sin()
                } else {
                    -0.8 * amp * (2.0 * s + c as f64).cos()
                }
            })
        })
        .collect()
}

/// Noise-free templates of the two toy motion modes.
pub fn toy_modes() -> [Vec<f64>; 2] {
    [toy_mode(0, 1.0, 0.0), toy_mode(1, 1.0, 0.0)]
}

/// `n` samples alternating between the two modes, each with its own amplitude
/// and phase jitter plus a little independent noise.
pub fn toy_gan_data(n: usize, seed: u64) -> GanData {
    let mut rng = derive_rng(seed, "toy-gan-data");
    let mut samples = Vec::with_capacity(n * 128);
    for i in 0..n {
        let amp = rng.random_range(0.8..1.2);
        let phase = rng.random_range(-0.3..0.3);
        let clean = toy_mode(i % 2, amp, phase);
        samples.extend(clean.iter().map(|v| v + 0.01 * rng.random_range(-1.0..1.0)));
    }
    GanData::new(32, 4, samples, None).unwrap()
}

pub fn nearest_mode(sample: &[f64]) -> usize {
    let modes = toy_modes();
    let d = |m: &[f64]| sample.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    if d(&modes[0]) <= d(&modes[1]) {
        0
    } else {
        1
    }
}

/// Three movement classes, separable by the hand trajectory, with noise on every feature.
pub fn toy_classifier_set(n: usize, seed: u64) -> (Vec<MotionSequence>, Vec<usize>) {
    let mut rng = derive_rng(seed, "toy-classifier-data");
    let mut seqs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 3;
        let mut data: Vec<f64> = (0..SEQ_LEN * FEATURES).map(|_| rng.random_range(-0.5..0.5)).collect();
        for t in 0..SEQ_LEN {
            let lift = (class as f64 - 1.0) * t as f64 / SEQ_LEN as f64;
            for m in [Marker::HandLeft, Marker::HandRight] {
                data[t * FEATURES + m.column() + 2] += lift;
            }
        }
        seqs.push(MotionSequence::new(data, false, None).unwrap());
        labels.push(class);
    }
    (seqs, labels)
}

/// Fixed standing figure carrying a bowl forward; the render golden files are built from it.
pub fn canonical_sequence() -> MotionSequence {
    let base: [[f64; 3]; 16] = [
        [-0.08, 0.10, 1.70],
        [0.08, 0.10, 1.70],
        [-0.08, -0.08, 1.68],
        [0.08, -0.08, 1.68],
        [-0.20, 0.00, 1.45],
        [0.20, 0.00, 1.45],
        [0.00, -0.05, 1.50],
        [-0.15, 0.08, 1.00],
        [0.15, 0.08, 1.00],
        [-0.15, -0.08, 1.00],
        [0.15, -0.08, 1.00],
        [-0.25, 0.30, 1.05],
        [0.25, 0.30, 1.05],
        [-0.12, 0.05, 0.05],
        [0.12, 0.05, 0.05],
        [0.00, 0.35, 1.05],
    ];
    let mut data = Vec::with_capacity(SEQ_LEN * FEATURES);
    for t in 0..SEQ_LEN {
        let dy = 0.02 * t as f64;
        let lift = 0.1 * (t as f64 / 31.0);
        for (i, p) in base.iter().enumerate() {
            let carried = i == 11 || i == 12 || i == 15;
            data.extend_from_slice(&[p[0], p[1] + dy, p[2] + if carried { lift } else { 0.0 }]);
        }
    }
    MotionSequence::new(data, false, None).unwrap()
}
