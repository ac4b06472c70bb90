use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, BatchNormState, Mode};
use super::tape::{Tape, Var};
use super::{NumericsError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.relu(),
            Activation::LeakyRelu { alpha } => x.leaky_relu(alpha),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// One layer of a [`Sequential`] stack. Shapes are per sample (no batch axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d { filters: usize, kernel: usize, stride: usize, spacing: usize },
    Dense { units: usize },
    #[serde(rename = "maxpool1d")]
    MaxPool1d { size: usize },
    Upsample1d { factor: usize },
    #[serde(rename = "batchnorm")]
    BatchNorm { momentum: f64, eps: f64 },
    Dropout { rate: f64 },
    Activation(Activation),
    Softmax,
    Reshape { shape: Vec<usize> },
}

impl LayerSpec {
    pub fn batchnorm() -> Self {
        LayerSpec::BatchNorm { momentum: 0.99, eps: 1e-5 }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NumericsError> {
        let bad = |msg: &str| Err(NumericsError::Shape(format!("{self:?} on {input:?}: {msg}")));
        match self {
            LayerSpec::Conv1d { filters, kernel, stride, .. } => match input {
                &[t, _] if *filters > 0 && *kernel > 0 && *stride > 0 => {
                    Ok(vec![ops::conv_output_len(t, *stride), *filters])
                }
                _ => bad("needs [time, channels] and positive filters/kernel/stride"),
            },
            LayerSpec::Dense { units } => match input {
                &[_] if *units > 0 => Ok(vec![*units]),
                _ => bad("needs a flat input and positive units"),
            },
            LayerSpec::MaxPool1d { size } => match input {
                &[t, c] if *size > 0 => Ok(vec![t.div_ceil(*size), c]),
                _ => bad("needs [time, channels] and positive size"),
            },
            LayerSpec::Upsample1d { factor } => match input {
                &[t, c] if *factor > 0 => Ok(vec![t * factor, c]),
                _ => bad("needs [time, channels] and positive factor"),
            },
            LayerSpec::BatchNorm { momentum, eps } => {
                if input.is_empty() || !(0.0..1.0).contains(momentum) || *eps <= 0.0 {
                    return bad("invalid batchnorm parameters");
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return bad("rate must be in [0, 1)");
                }
                Ok(input.to_vec())
            }
            LayerSpec::Activation(_) | LayerSpec::Softmax => Ok(input.to_vec()),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return bad("element count changes");
                }
                Ok(shape.clone())
            }
        }
    }
}

/// Trainable parameters and non-trainable buffers (batch-norm running stats), keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub params: BTreeMap<String, Tensor>,
    pub buffers: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Puts every parameter on the tape. `trainable` decides whether gradients flow into them.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .params
            .iter()
            .map(|(name, t)| {
                let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn apply_bn_updates(&mut self, updates: Vec<BnUpdate>) {
        for u in updates {
            let mut state = BatchNormState {
                running_mean: self.buffers[&format!("{}/running_mean", u.prefix)].clone(),
                running_var: self.buffers[&format!("{}/running_var", u.prefix)].clone(),
                momentum: u.momentum,
                eps: 0.0,
            };
            state.update(&u.mean, &u.var);
            self.buffers.insert(format!("{}/running_mean", u.prefix), state.running_mean);
            self.buffers.insert(format!("{}/running_var", u.prefix), state.running_var);
        }
    }
}

/// Parameters of a [`ParamStore`] recorded on a tape.
pub struct Bound<'t> {
    pub vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    fn get(&self, name: &str) -> Result<Var<'t>, NumericsError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::Contract(format!("missing parameter {name}")))
    }

    /// Gradient values of `loss` for every bound parameter, by name.
    pub fn gradients(&self, loss: Var<'t>) -> Result<BTreeMap<String, Tensor>, NumericsError> {
        let names: Vec<&String> = self.vars.keys().collect();
        let vars: Vec<Var<'t>> = self.vars.values().copied().collect();
        let tape = loss.tape();
        let grads = tape.grad_values(loss, &vars)?;
        Ok(names.into_iter().cloned().zip(grads).collect())
    }
}

/// Batch statistics produced by a training-mode batch-norm layer.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub prefix: String,
    pub mean: Tensor,
    pub var: Tensor,
    pub momentum: f64,
}

/// Per-call state threaded through a forward pass.
pub struct Forward<'a, 't> {
    pub bound: &'a Bound<'t>,
    pub store: &'a ParamStore,
    pub mode: Mode,
    pub rng: Option<&'a mut ChaCha8Rng>,
    pub bn_updates: Vec<BnUpdate>,
}

impl<'a, 't> Forward<'a, 't> {
    pub fn new(bound: &'a Bound<'t>, store: &'a ParamStore, mode: Mode) -> Self {
        Self { bound, store, mode, rng: None, bn_updates: Vec::new() }
    }

    pub fn with_rng(mut self, rng: &'a mut ChaCha8Rng) -> Self {
        self.rng = Some(rng);
        self
    }
}

/// A linear stack of layers with precomputed per-sample shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequentialDef", into = "SequentialDef")]
pub struct Sequential {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
}

impl Sequential {
    pub fn new(name: &str, input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self, NumericsError> {
        let mut shapes = vec![input_shape.clone()];
        for layer in &layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(Self { name: name.to_string(), input_shape, layers, shapes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Per-sample shape before the first layer and after each layer.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. }))
    }

    fn prefix(&self, i: usize) -> String {
        format!("{}/{i}", self.name)
    }

    /// Parameter shapes in creation order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &self.shapes[i];
            let p = self.prefix(i);
            match layer {
                LayerSpec::Conv1d { filters, kernel, .. } => {
                    out.push((format!("{p}/weight"), vec![*kernel, input[1], *filters]));
                    out.push((format!("{p}/bias"), vec![*filters]));
                }
                LayerSpec::Dense { units } => {
                    out.push((format!("{p}/weight"), vec![input[0], *units]));
                    out.push((format!("{p}/bias"), vec![*units]));
                }
                LayerSpec::BatchNorm { .. } => {
                    let c = *input.last().unwrap();
                    out.push((format!("{p}/gamma"), vec![c]));
                    out.push((format!("{p}/beta"), vec![c]));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Glorot-uniform weights, zero biases, unit/zero batch-norm scale/shift.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &self.shapes[i];
            let p = self.prefix(i);
            match layer {
                LayerSpec::Conv1d { filters, kernel, .. } => {
                    let (c, f, k) = (input[1], *filters, *kernel);
                    let w = glorot(&[k, c, f], k * c, k * f, rng);
                    store.params.insert(format!("{p}/weight"), w);
                    store.params.insert(format!("{p}/bias"), Tensor::zeros(&[f]));
                }
                LayerSpec::Dense { units } => {
                    let w = glorot(&[input[0], *units], input[0], *units, rng);
                    store.params.insert(format!("{p}/weight"), w);
                    store.params.insert(format!("{p}/bias"), Tensor::zeros(&[*units]));
                }
                LayerSpec::BatchNorm { .. } => {
                    let c = *input.last().unwrap();
                    store.params.insert(format!("{p}/gamma"), Tensor::ones(&[c]));
                    store.params.insert(format!("{p}/beta"), Tensor::zeros(&[c]));
                    store.buffers.insert(format!("{p}/running_mean"), Tensor::zeros(&[c]));
                    store.buffers.insert(format!("{p}/running_var"), Tensor::ones(&[c]));
                }
                _ => {}
            }
        }
    }

    /// Runs the stack on a batched input `[batch, ..input_shape]`.
    pub fn forward<'t>(&self, ctx: &mut Forward<'_, 't>, x: Var<'t>) -> Result<Var<'t>, NumericsError> {
        self.forward_traced(ctx, x, &mut |_, _| {})
    }

    /// Like [`Sequential::forward`], calling `trace(layer_index, output)` after every layer.
    pub fn forward_traced<'t>(
        &self,
        ctx: &mut Forward<'_, 't>,
        x: Var<'t>,
        trace: &mut dyn FnMut(usize, Var<'t>),
    ) -> Result<Var<'t>, NumericsError> {
        let shape = x.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(NumericsError::Shape(format!(
                "{} expects [batch, {:?}], got {shape:?}",
                self.name, self.input_shape
            )));
        }
        let batch = shape[0];
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let p = self.prefix(i);
            h = match layer {
                LayerSpec::Conv1d { stride, spacing, .. } => {
                    let w = ctx.bound.get(&format!("{p}/weight"))?;
                    let b = ctx.bound.get(&format!("{p}/bias"))?;
                    ops::conv1d(h, w, b, *stride, *spacing)?
                }
                LayerSpec::Dense { .. } => {
                    let w = ctx.bound.get(&format!("{p}/weight"))?;
                    let b = ctx.bound.get(&format!("{p}/bias"))?;
                    ops::dense(h, w, b)?
                }
                LayerSpec::MaxPool1d { size } => ops::maxpool1d(h, *size)?,
                LayerSpec::Upsample1d { factor } => ops::upsample1d(h, *factor)?,
                LayerSpec::BatchNorm { momentum, eps } => {
                    let gamma = ctx.bound.get(&format!("{p}/gamma"))?;
                    let beta = ctx.bound.get(&format!("{p}/beta"))?;
                    let buffer = |s: &str| {
                        ctx.store
                            .buffers
                            .get(&format!("{p}/{s}"))
                            .cloned()
                            .ok_or_else(|| NumericsError::Contract(format!("missing buffer {p}/{s}")))
                    };
                    let state = BatchNormState {
                        running_mean: buffer("running_mean")?,
                        running_var: buffer("running_var")?,
                        momentum: *momentum,
                        eps: *eps,
                    };
                    let (y, stats) = ops::batchnorm(h, gamma, beta, &state, ctx.mode)?;
                    if let Some((mean, var)) = stats {
                        ctx.bn_updates.push(BnUpdate { prefix: p, mean, var, momentum: *momentum });
                    }
                    y
                }
                LayerSpec::Dropout { rate } => match (ctx.mode, ctx.rng.as_deref_mut()) {
                    (Mode::Train, Some(rng)) => ops::dropout(h, *rate, Mode::Train, rng)?,
                    (Mode::Train, None) if *rate > 0.0 => {
                        return Err(NumericsError::Contract("training-mode dropout needs an rng".into()))
                    }
                    _ => h,
                },
                LayerSpec::Activation(a) => a.apply(h),
                LayerSpec::Softmax => ops::softmax(h)?,
                LayerSpec::Reshape { shape } => {
                    let mut full = vec![batch];
                    full.extend_from_slice(shape);
                    h.reshape(&full)?
                }
            };
            trace(i, h);
        }
        Ok(h)
    }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
}

#[derive(Clone, Serialize, Deserialize)]
struct SequentialDef {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
}

impl TryFrom<SequentialDef> for Sequential {
    type Error = NumericsError;

    fn try_from(d: SequentialDef) -> Result<Self, Self::Error> {
        Sequential::new(&d.name, d.input_shape, d.layers)
    }
}

impl From<Sequential> for SequentialDef {
    fn from(s: Sequential) -> Self {
        SequentialDef { name: s.name, input_shape: s.input_shape, layers: s.layers }
    }
}
