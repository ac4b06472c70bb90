use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::condition::{noise_with_labels, COND_CLASSES};
use super::{ConditionLabel, GanError};
use crate::dataset::{invert_zscore, MotionSequence, NormStats, FEATURES, SEQ_LEN};
use crate::numerics::ops::Mode;
use crate::rng::derive_indexed;
use crate::numerics::{
    Activation, AdamState, BnUpdate, Bound, Forward, LayerSpec, ModelState, ParamStore, Sequential, Tape, Tensor, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub noise_dim: usize,
    /// 0 for unconditional models, 6 for the weight × balance label.
    pub cond_dim: usize,
    pub base_len: usize,
    pub base_channels: usize,
    /// Conv filters after each upsampling; the last is the output width.
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub upsample: usize,
    pub batchnorm: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            noise_dim: 100,
            cond_dim: 0,
            base_len: 4,
            base_channels: 384,
            filters: vec![192, 96, 48],
            kernel: 5,
            upsample: 2,
            batchnorm: false,
        }
    }
}

impl GeneratorSpec {
    pub fn input_dim(&self) -> usize {
        self.noise_dim + self.cond_dim
    }

    fn layers(&self) -> Result<Vec<LayerSpec>, GanError> {
        if self.filters.is_empty() || self.noise_dim == 0 {
            return Err(GanError::Spec("generator needs noise and at least one conv layer".into()));
        }
        if self.cond_dim != 0 && self.cond_dim != COND_CLASSES {
            return Err(GanError::Spec(format!("cond_dim must be 0 or {COND_CLASSES}")));
        }
        let mut l = vec![LayerSpec::Dense { units: self.base_len * self.base_channels }];
        if self.batchnorm {
            l.push(LayerSpec::batchnorm());
        }
        l.push(LayerSpec::Activation(Activation::Relu));
        l.push(LayerSpec::Reshape { shape: vec![self.base_len, self.base_channels] });
        for (i, &f) in self.filters.iter().enumerate() {
            l.push(LayerSpec::Upsample1d { factor: self.upsample });
            l.push(LayerSpec::Conv1d { filters: f, kernel: self.kernel, stride: 1, spacing: 0 });
            if i + 1 < self.filters.len() {
                if self.batchnorm {
                    l.push(LayerSpec::batchnorm());
                }
                l.push(LayerSpec::Activation(Activation::Relu));
            }
        }
        Ok(l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticHead {
    /// WGAN critic score.
    Linear,
    /// DCGAN discriminator probability.
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticSpec {
    pub seq_len: usize,
    pub channels: usize,
    pub cond_dim: usize,
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub leaky_alpha: f64,
    pub batchnorm: bool,
    pub head: CriticHead,
}

impl Default for CriticSpec {
    fn default() -> Self {
        Self {
            seq_len: SEQ_LEN,
            channels: FEATURES,
            cond_dim: 0,
            filters: vec![96, 192, 384],
            kernel: 5,
            stride: 2,
            leaky_alpha: 0.2,
            batchnorm: false,
            head: CriticHead::Linear,
        }
    }
}

impl CriticSpec {
    fn layers(&self) -> Result<Vec<LayerSpec>, GanError> {
        if self.head == CriticHead::Linear && self.batchnorm {
            return Err(GanError::Spec("a Wasserstein critic must not contain batch normalization".into()));
        }
        if self.cond_dim != 0 && self.cond_dim != COND_CLASSES {
            return Err(GanError::Spec(format!("cond_dim must be 0 or {COND_CLASSES}")));
        }
        let mut l = Vec::new();
        for &f in &self.filters {
            l.push(LayerSpec::Conv1d { filters: f, kernel: self.kernel, stride: self.stride, spacing: 0 });
            if self.batchnorm {
                l.push(LayerSpec::batchnorm());
            }
            l.push(LayerSpec::Activation(Activation::LeakyRelu { alpha: self.leaky_alpha }));
        }
        let probe = Sequential::new("probe", vec![self.seq_len, self.channels + self.cond_dim], l.clone())?;
        l.push(LayerSpec::Reshape { shape: vec![probe.output_shape().iter().product()] });
        l.push(LayerSpec::Dense { units: 1 });
        if self.head == CriticHead::Sigmoid {
            l.push(LayerSpec::Activation(Activation::Sigmoid));
        }
        Ok(l)
    }
}

fn forward_net<'t>(
    net: &Sequential,
    params: &ParamStore,
    bound: &Bound<'t>,
    x: Var<'t>,
    mode: Mode,
) -> Result<(Var<'t>, Vec<BnUpdate>), GanError> {
    let mut ctx = Forward::new(bound, params, mode);
    let y = net.forward(&mut ctx, x)?;
    Ok((y, ctx.bn_updates))
}

fn load_params(net: &Sequential, state: &ModelState) -> Result<ParamStore, GanError> {
    let want: BTreeMap<String, Vec<usize>> = net.param_shapes().into_iter().collect();
    let have: BTreeMap<String, Vec<usize>> =
        state.params.params.iter().map(|(k, v)| (k.clone(), v.shape().to_vec())).collect();
    if want != have {
        return Err(GanError::Shape("checkpoint parameters do not match the architecture".into()));
    }
    Ok(state.params.clone())
}

#[derive(Clone, Debug)]
pub struct Generator {
    spec: GeneratorSpec,
    net: Sequential,
    pub params: ParamStore,
}

impl Generator {
    pub fn build(spec: GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<Self, GanError> {
        let net = Sequential::new("generator", vec![spec.input_dim()], spec.layers()?)?;
        let mut params = ParamStore::default();
        net.init_params(&mut params, rng);
        Ok(Self { spec, net, params })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    /// `[len, channels]` of one generated sample.
    pub fn output_shape(&self) -> &[usize] {
        self.net.output_shape()
    }

    pub fn forward<'t>(&self, bound: &Bound<'t>, input: Var<'t>, mode: Mode) -> Result<(Var<'t>, Vec<BnUpdate>), GanError> {
        forward_net(&self.net, &self.params, bound, input, mode)
    }

    /// Inference-mode samples `[n, len, channels]` for noise rows `z` (`[n, noise_dim]`).
    pub fn sample(&self, z: Tensor, labels: Option<&[usize]>) -> Result<Tensor, GanError> {
        match (self.spec.cond_dim, labels) {
            (0, Some(_)) => return Err(GanError::Contract("unconditional generator given a label".into())),
            (c, None) if c > 0 => return Err(GanError::Label("conditional generator needs a label".into())),
            _ => {}
        }
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let input = noise_with_labels(&tape, z, labels)?;
        let (y, _) = self.forward(&bound, input, Mode::Infer)?;
        Ok((*y.value()).clone())
    }

    pub fn to_state(&self, optimizer: Option<AdamState>, norm: Option<&NormStats>) -> ModelState {
        let mut extra = BTreeMap::new();
        if let Some(n) = norm {
            n.insert_into(&mut extra);
        }
        ModelState {
            arch: serde_json::to_string(&self.spec).expect("spec serializes"),
            params: self.params.clone(),
            extra,
            optimizer,
        }
    }

    pub fn from_state(state: &ModelState) -> Result<(Self, Option<NormStats>), GanError> {
        let spec: GeneratorSpec = serde_json::from_str(&state.arch)?;
        let net = Sequential::new("generator", vec![spec.input_dim()], spec.layers()?)?;
        let params = load_params(&net, state)?;
        let norm = NormStats::from_extra(&state.extra);
        Ok((Self { spec, net, params }, norm))
    }
}

#[derive(Clone, Debug)]
pub struct Critic {
    spec: CriticSpec,
    net: Sequential,
    pub params: ParamStore,
}

impl Critic {
    pub fn build(spec: CriticSpec, rng: &mut ChaCha8Rng) -> Result<Self, GanError> {
        let net = Sequential::new("critic", vec![spec.seq_len, spec.channels + spec.cond_dim], spec.layers()?)?;
        let mut params = ParamStore::default();
        net.init_params(&mut params, rng);
        Ok(Self { spec, net, params })
    }

    pub fn spec(&self) -> &CriticSpec {
        &self.spec
    }

    pub fn net(&self) -> &Sequential {
        &self.net
    }

    /// Scores `[batch, 1]` for inputs `[batch, len, channels + cond]`.
    pub fn forward<'t>(&self, bound: &Bound<'t>, x: Var<'t>, mode: Mode) -> Result<(Var<'t>, Vec<BnUpdate>), GanError> {
        forward_net(&self.net, &self.params, bound, x, mode)
    }

    pub fn to_state(&self, optimizer: Option<AdamState>) -> ModelState {
        ModelState {
            arch: serde_json::to_string(&self.spec).expect("spec serializes"),
            params: self.params.clone(),
            extra: BTreeMap::new(),
            optimizer,
        }
    }

    pub fn from_state(state: &ModelState) -> Result<Self, GanError> {
        let spec: CriticSpec = serde_json::from_str(&state.arch)?;
        let net = Sequential::new("critic", vec![spec.seq_len, spec.channels + spec.cond_dim], spec.layers()?)?;
        let params = load_params(&net, state)?;
        Ok(Self { spec, net, params })
    }
}

/// One world-space sequence from noise `z`, denormalized with the training statistics.
/// Standard-normal noise vector number `index` of the stream seeded by `seed`.
pub fn noise_vector(seed: u64, index: u64, dim: usize) -> Vec<f64> {
    let mut rng = derive_indexed(seed, "generate", index);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate(
    gen: &Generator,
    z: &[f64],
    label: Option<ConditionLabel>,
    stats: &NormStats,
) -> Result<MotionSequence, GanError> {
    if z.len() != gen.spec.noise_dim {
        return Err(GanError::Shape(format!("noise has {} entries, expected {}", z.len(), gen.spec.noise_dim)));
    }
    if gen.output_shape() != [SEQ_LEN, FEATURES] {
        return Err(GanError::Shape(format!("generator emits {:?}, not a motion sequence", gen.output_shape())));
    }
    let labels = label.map(|l| vec![l.index()]);
    let out = gen.sample(Tensor::new(vec![1, z.len()], z.to_vec())?, labels.as_deref())?;
    let seq = MotionSequence::new(out.into_data(), true, None)?;
    Ok(invert_zscore(&seq, stats)?)
}
