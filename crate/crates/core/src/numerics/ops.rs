//! Layer operations built from taped primitives.
//!
//! Sequence tensors are laid out `[batch, time, channels]`; a 2-D `[time, channels]`
//! input is treated as a batch of one and returned without the batch axis.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Var, PAD_INDEX};
use super::{NumericsError, Tensor};

/// Training or inference behaviour for dropout and batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

fn as_batched(x: &Var<'_>) -> Result<(usize, usize, usize, bool), NumericsError> {
    match x.shape().as_slice() {
        &[t, c] => Ok((1, t, c, false)),
        &[b, t, c] => Ok((b, t, c, true)),
        s => Err(NumericsError::Shape(format!("expected [time, ch] or [batch, time, ch], got {s:?}"))),
    }
}

fn finish<'t>(y: Var<'t>, b: usize, t: usize, c: usize, batched: bool) -> Result<Var<'t>, NumericsError> {
    if batched {
        y.reshape(&[b, t, c])
    } else {
        y.reshape(&[t, c])
    }
}

/// Zero padding on each side that keeps the length unchanged at stride 1.
pub fn same_padding(kernel: usize, spacing: usize) -> usize {
    (kernel - 1) * (1 + spacing) / 2
}

/// Output length of a "same"-padded convolution.
pub fn conv_output_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

type IndexKey = (usize, usize, usize, usize, usize, usize);

thread_local! {
    static IM2COL_CACHE: RefCell<HashMap<IndexKey, Rc<[u32]>>> = RefCell::new(HashMap::new());
}

fn im2col_index(b: usize, t: usize, c: usize, k: usize, stride: usize, spacing: usize) -> Rc<[u32]> {
    let key = (b, t, c, k, stride, spacing);
    IM2COL_CACHE.with(|cache| {
        if let Some(ix) = cache.borrow().get(&key) {
            return Rc::clone(ix);
        }
        let pad = same_padding(k, spacing) as isize;
        let t_out = conv_output_len(t, stride);
        let mut index = Vec::with_capacity(b * t_out * k * c);
        for bi in 0..b {
            for to in 0..t_out {
                for ki in 0..k {
                    let src = (to * stride + ki * (1 + spacing)) as isize - pad;
                    for ci in 0..c {
                        index.push(if src >= 0 && (src as usize) < t {
                            ((bi * t + src as usize) * c + ci) as u32
                        } else {
                            PAD_INDEX
                        });
                    }
                }
            }
        }
        let index: Rc<[u32]> = index.into();
        let mut cache = cache.borrow_mut();
        if cache.len() > 256 {
            cache.clear();
        }
        cache.insert(key, Rc::clone(&index));
        index
    })
}

/// 1-D convolution over time with "same" zero padding.
///
/// `weights` is `[kernel, in_channels, filters]`. `spacing` zeros sit between
/// filter taps, so tap `k` reads time `t*stride + k*(1+spacing) - pad`.
pub fn conv1d<'t>(
    input: Var<'t>,
    weights: Var<'t>,
    bias: Var<'t>,
    stride: usize,
    spacing: usize,
) -> Result<Var<'t>, NumericsError> {
    let (b, t, c, batched) = as_batched(&input)?;
    let ws = weights.shape();
    let &[k, wc, f] = ws.as_slice() else {
        return Err(NumericsError::Shape(format!("conv weights must be [k, c, f], got {ws:?}")));
    };
    if wc != c {
        return Err(NumericsError::Shape(format!("conv expects {wc} channels, input has {c}")));
    }
    if bias.shape() != [f] {
        return Err(NumericsError::Shape(format!("conv bias must be [{f}], got {:?}", bias.shape())));
    }
    if stride == 0 || k == 0 {
        return Err(NumericsError::Shape("conv stride and kernel must be positive".into()));
    }
    let span = k + (k - 1) * spacing;
    let padded = t + 2 * same_padding(k, spacing);
    if span > padded {
        return Err(NumericsError::Shape(format!(
            "effective kernel span {span} exceeds padded input length {padded}"
        )));
    }
    let t_out = conv_output_len(t, stride);
    let cols = input.gather(im2col_index(b, t, c, k, stride, spacing), &[b * t_out, k * c])?;
    let w = weights.reshape(&[k * c, f])?;
    let y = cols.matmul(w)?;
    let y = y.add(bias.broadcast_rows(&[b * t_out, f])?)?;
    finish(y, b, t_out, f, batched)
}

/// Max pooling over time with window = stride = `size`.
///
/// An incomplete final window is padded by repeating the last time step. The
/// gradient goes to the earliest maximal element of each window.
pub fn maxpool1d<'t>(input: Var<'t>, size: usize) -> Result<Var<'t>, NumericsError> {
    if size == 0 {
        return Err(NumericsError::InvalidFactor("pool size must be positive".into()));
    }
    let (b, t, c, batched) = as_batched(&input)?;
    let t_out = t.div_ceil(size);
    let x = input.value();
    let data = x.data();
    let mut index = Vec::with_capacity(b * t_out * c);
    for bi in 0..b {
        for to in 0..t_out {
            for ci in 0..c {
                let mut best = ((bi * t + to * size) * c + ci) as u32;
                for w in 1..size {
                    let ti = (to * size + w).min(t - 1);
                    let i = ((bi * t + ti) * c + ci) as u32;
                    if data[i as usize] > data[best as usize] {
                        best = i;
                    }
                }
                index.push(best);
            }
        }
    }
    let y = input.gather(index.into(), &[b * t_out * c])?;
    finish(y, b, t_out, c, batched)
}

/// Repeats each time step `factor` times.
pub fn upsample1d<'t>(input: Var<'t>, factor: usize) -> Result<Var<'t>, NumericsError> {
    if factor < 1 {
        return Err(NumericsError::InvalidFactor(format!("upsample factor {factor} < 1")));
    }
    let (b, t, c, batched) = as_batched(&input)?;
    let t_out = t * factor;
    let index: Rc<[u32]> = (0..b)
        .flat_map(|bi| {
            (0..t_out).flat_map(move |to| (0..c).map(move |ci| ((bi * t + to / factor) * c + ci) as u32))
        })
        .collect();
    let y = input.gather(index, &[b * t_out * c])?;
    finish(y, b, t_out, c, batched)
}

/// Fully connected layer: `x · W + b` for `x` of shape `[n]` or `[batch, n]`.
pub fn dense<'t>(input: Var<'t>, weights: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, NumericsError> {
    let xs = input.shape();
    let ws = weights.shape();
    let (rows, n, unbatched) = match xs.as_slice() {
        &[n] => (1, n, true),
        &[b, n] => (b, n, false),
        s => return Err(NumericsError::Shape(format!("dense input must be 1-D or 2-D, got {s:?}"))),
    };
    let &[wn, m] = ws.as_slice() else {
        return Err(NumericsError::Shape(format!("dense weights must be 2-D, got {ws:?}")));
    };
    if wn != n || bias.shape() != [m] {
        return Err(NumericsError::Shape(format!(
            "dense: input width {n}, weights {ws:?}, bias {:?}",
            bias.shape()
        )));
    }
    let x = input.reshape(&[rows, n])?;
    let y = x.matmul(weights)?.add(bias.broadcast_rows(&[rows, m])?)?;
    if unbatched {
        y.reshape(&[m])
    } else {
        Ok(y)
    }
}

/// Inverted dropout: in training, zeroes each element with probability `rate`
/// and scales the survivors by `1/(1-rate)`. Identity in inference.
pub fn dropout<'t, R: Rng + ?Sized>(
    input: Var<'t>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Var<'t>, NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::Contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(input);
    }
    let keep = 1.0 - rate;
    let mask = Tensor::from_fn(&input.shape(), |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    input.mul_const(Rc::new(mask))
}

fn row_max_const<'t>(logits: Var<'t>) -> Result<Var<'t>, NumericsError> {
    let v = logits.value();
    let (m, n) = v.as_matrix_dims();
    let maxes: Vec<f64> = (0..m)
        .map(|r| v.data()[r * n..(r + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shape = v.shape()[..v.shape().len().saturating_sub(1)].to_vec();
    Ok(logits.tape().constant(Tensor::new(shape, maxes)?).broadcast_cols(n))
}

/// Softmax over the last axis.
pub fn softmax<'t>(logits: Var<'t>) -> Result<Var<'t>, NumericsError> {
    let n = *logits.shape().last().ok_or_else(|| NumericsError::Shape("softmax of scalar".into()))?;
    let shifted = logits.sub(row_max_const(logits)?)?;
    let e = shifted.exp();
    let inv = e.sum_cols().recip().broadcast_cols(n);
    e.mul(inv)
}

/// Log-softmax over the last axis.
pub fn log_softmax<'t>(logits: Var<'t>) -> Result<Var<'t>, NumericsError> {
    let n = *logits.shape().last().ok_or_else(|| NumericsError::Shape("log_softmax of scalar".into()))?;
    let shifted = logits.sub(row_max_const(logits)?)?;
    let lse = shifted.exp().sum_cols().log().broadcast_cols(n);
    shifted.sub(lse)
}

/// Mean categorical cross-entropy of `[batch, classes]` logits against class indices.
pub fn softmax_cross_entropy<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>, NumericsError> {
    let shape = logits.shape();
    let &[b, k] = shape.as_slice() else {
        return Err(NumericsError::Shape(format!("logits must be [batch, classes], got {shape:?}")));
    };
    if labels.len() != b {
        return Err(NumericsError::Shape(format!("{} labels for batch of {b}", labels.len())));
    }
    let mut onehot = Tensor::zeros(&[b, k]);
    for (r, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(NumericsError::Contract(format!("label {l} outside {k} classes")));
        }
        onehot.data_mut()[r * k + l] = 1.0;
    }
    Ok(log_softmax(logits)?.mul_const(Rc::new(onehot))?.sum().scale(-1.0 / b as f64))
}

/// Running statistics and hyperparameters of one batch-normalization layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum,
            eps,
        }
    }

    /// `running ← momentum·running + (1−momentum)·batch`.
    pub fn update(&mut self, batch_mean: &Tensor, batch_var: &Tensor) {
        let m = self.momentum;
        self.running_mean = self.running_mean.zip_map(batch_mean, |r, b| m * r + (1.0 - m) * b);
        self.running_var = self.running_var.zip_map(batch_var, |r, b| m * r + (1.0 - m) * b);
    }
}

/// Per-channel batch normalization over every axis but the last.
///
/// Training mode normalizes with the batch statistics (biased variance) and
/// returns them so the caller can fold them into the running averages;
/// inference mode uses the running averages.
pub fn batchnorm<'t>(
    input: Var<'t>,
    gamma: Var<'t>,
    beta: Var<'t>,
    state: &BatchNormState,
    mode: Mode,
) -> Result<(Var<'t>, Option<(Tensor, Tensor)>), NumericsError> {
    let shape = input.shape();
    let c = *shape.last().ok_or_else(|| NumericsError::Shape("batchnorm of scalar".into()))?;
    if gamma.shape() != [c] || beta.shape() != [c] || state.running_mean.shape() != [c] {
        return Err(NumericsError::Shape(format!("batchnorm parameters do not match {c} channels")));
    }
    let tape = input.tape();
    let rows = input.value().numel() / c;
    match mode {
        Mode::Train => {
            if shape.len() < 2 || shape[0] < 2 {
                return Err(NumericsError::DegenerateBatch);
            }
            let mean = input.sum_rows().scale(1.0 / rows as f64);
            let centered = input.sub(mean.broadcast_rows(&shape)?)?;
            let var = centered.square().sum_rows().scale(1.0 / rows as f64);
            let inv_std = var.add_scalar(state.eps).sqrt().recip();
            let normed = centered.mul(inv_std.broadcast_rows(&shape)?)?;
            let out = normed.mul(gamma.broadcast_rows(&shape)?)?.add(beta.broadcast_rows(&shape)?)?;
            let stats = ((*mean.value()).clone(), (*var.value()).clone());
            Ok((out, Some(stats)))
        }
        Mode::Infer => {
            let mean = tape.constant(state.running_mean.clone());
            let inv_std = tape.constant(state.running_var.map(|v| 1.0 / (v + state.eps).sqrt()));
            let normed = input.sub(mean.broadcast_rows(&shape)?)?.mul(inv_std.broadcast_rows(&shape)?)?;
            let out = normed.mul(gamma.broadcast_rows(&shape)?)?.add(beta.broadcast_rows(&shape)?)?;
            Ok((out, None))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn conv_same_length_and_stride_halving() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[32, 3]));
        let w = tape.constant(Tensor::ones(&[3, 3, 3]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert_eq!(conv1d(x, w, b, 1, 0).unwrap().shape(), vec![32, 3]);
        assert_eq!(conv1d(x, w, b, 2, 0).unwrap().shape(), vec![16, 3]);
        assert_eq!(conv1d(x, w, b, 1, 1).unwrap().shape(), vec![32, 3]);
    }

    #[test]
    fn conv_identity_filter() {
        let tape = Tape::new();
        let data = t(&[4, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let x = tape.constant(data.clone());
        let w = tape.constant(t(&[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(Tensor::zeros(&[2]));
        assert_eq!(*conv1d(x, w, b, 1, 0).unwrap().value(), data);
    }

    #[test]
    fn conv_rejects_span_longer_than_input() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 1]));
        let w = tape.constant(Tensor::ones(&[2, 1, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        assert!(matches!(conv1d(x, w, b, 1, 4), Err(NumericsError::Shape(_))));
    }

    #[test]
    fn maxpool_examples() {
        let tape = Tape::new();
        let x = tape.param(t(&[4, 1], &[1.0, 3.0, 2.0, 8.0]));
        let y = maxpool1d(x, 2).unwrap();
        assert_eq!(y.value().data(), &[3.0, 8.0]);

        let c = tape.param(Tensor::full(&[4, 1], 2.5));
        let y = maxpool1d(c, 2).unwrap();
        assert_eq!(y.value().data(), &[2.5, 2.5]);
        let g = tape.grad_values(y.sum(), &[c]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn maxpool_odd_length_replicates_last() {
        let tape = Tape::new();
        let x = tape.constant(t(&[3, 1], &[1.0, 0.0, 4.0]));
        assert_eq!(maxpool1d(x, 2).unwrap().value().data(), &[1.0, 4.0]);
    }

    #[test]
    fn upsample_repeats_and_rejects_zero() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 1], &[1.0, 2.0]));
        assert_eq!(upsample1d(x, 2).unwrap().value().data(), &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(upsample1d(x, 0), Err(NumericsError::InvalidFactor(_))));
        let wide = tape.constant(Tensor::zeros(&[4, 384]));
        assert_eq!(upsample1d(wide, 2).unwrap().shape(), vec![8, 384]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        assert_eq!(softmax(x).unwrap().value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn dropout_zero_rate_and_inference_are_identity() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
        assert_eq!(dropout(x, 0.0, Mode::Train, &mut rng).unwrap().id(), x.id());
        assert_eq!(dropout(x, 0.5, Mode::Infer, &mut rng).unwrap().id(), x.id());
    }

    #[test]
    fn dense_shape_mismatch() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[2, 3]));
        let w = tape.constant(Tensor::ones(&[4, 2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        assert!(matches!(dense(x, w, b), Err(NumericsError::Shape(_))));
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = tape.constant(Tensor::from_fn(&[4, 5, 3], |_| rng.random::<f64>() * 7.0 - 2.0));
        let gamma = tape.constant(Tensor::ones(&[3]));
        let beta = tape.constant(Tensor::zeros(&[3]));
        let state = BatchNormState::new(3, 0.99, 1e-12);
        let (y, stats) = batchnorm(x, gamma, beta, &state, Mode::Train).unwrap();
        assert!(stats.is_some());
        let y = y.value();
        for ch in 0..3 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(3).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn batchnorm_rejects_single_sample_batch() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[1, 4, 2]));
        let g = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let state = BatchNormState::new(2, 0.99, 1e-5);
        assert!(matches!(batchnorm(x, g, b, &state, Mode::Train), Err(NumericsError::DegenerateBatch)));
    }

    #[test]
    fn batchnorm_running_update_two_steps() {
        // momentum 0.9: mean 0 -> 0.1*2 = 0.2 -> 0.9*0.2 + 0.1*4 = 0.58
        //               var  1 -> 0.9 + 0.1*1 = 1.0 -> 0.9 + 0.1*9 = 1.8
        let mut s = BatchNormState::new(1, 0.9, 1e-5);
        s.update(&t(&[1], &[2.0]), &t(&[1], &[1.0]));
        s.update(&t(&[1], &[4.0]), &t(&[1], &[9.0]));
        assert!((s.running_mean.item() - 0.58).abs() < 1e-12);
        assert!((s.running_var.item() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_identity_on_standardized_input() {
        let tape = Tape::new();
        let x = tape.constant(t(&[4, 1], &[-1.0, 1.0, -1.0, 1.0]));
        let g = tape.constant(Tensor::ones(&[1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let state = BatchNormState::new(1, 0.99, 1e-12);
        let (y, _) = batchnorm(x, g, b, &state, Mode::Train).unwrap();
        assert!(y.value().max_abs_diff(&x.value()) < 1e-9);
    }
}
