use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::condition::{noise_with_labels, with_label_channels, COND_CLASSES};
use super::losses::{dcgan_losses, gradient_penalty, wasserstein_losses};
use super::models::{Critic, CriticHead, CriticSpec, Generator, GeneratorSpec};
use super::{ConditionLabel, GanError};
use crate::dataset::MotionSequence;
use crate::numerics::ops::Mode;
use crate::numerics::{AdamState, Bound, NumericsError, Tape, Tensor, Var};
use crate::rng::{derive_indexed, derive_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GanKind {
    Dcgan,
    WganGp,
    CondWganGp,
}

impl GanKind {
    pub fn is_wasserstein(self) -> bool {
        !matches!(self, GanKind::Dcgan)
    }

    pub fn is_conditional(self) -> bool {
        matches!(self, GanKind::CondWganGp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainSpec {
    pub kind: GanKind,
    pub batch: usize,
    /// Critic updates per generator update (Wasserstein kinds only).
    pub critic_steps: usize,
    pub gp_lambda: f64,
    /// Discriminator target for genuine data (DCGAN only).
    pub real_label: f64,
    /// Overrides the generator spec's batch-norm switch.
    pub generator_batchnorm: bool,
    pub epochs: usize,
    pub seed: u64,
    /// Stops early once this many generator updates have run.
    pub max_generator_steps: Option<usize>,
    pub generator_learning_rate: Option<f64>,
    pub critic_learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub stationary_window: usize,
    pub stationary_tolerance: f64,
    /// Samples drawn after training for the mode-collapse check; 0 disables it.
    pub diversity_samples: usize,
    /// Collapse is flagged when generated pairwise spread falls below this fraction of the real spread.
    pub collapse_ratio: f64,
}

impl Default for GanTrainSpec {
    fn default() -> Self {
        Self {
            kind: GanKind::WganGp,
            batch: 64,
            critic_steps: 15,
            gp_lambda: 10.0,
            real_label: 0.9,
            generator_batchnorm: false,
            epochs: 200,
            seed: 0,
            max_generator_steps: None,
            generator_learning_rate: None,
            critic_learning_rate: None,
            beta1: None,
            beta2: None,
            stationary_window: 10,
            stationary_tolerance: 0.05,
            diversity_samples: 500,
            collapse_ratio: 0.5,
        }
    }
}

impl GanTrainSpec {
    /// `(generator lr, critic lr, beta1, beta2)` after applying per-kind defaults.
    pub fn adam_settings(&self) -> (f64, f64, f64, f64) {
        let (lr, b1, b2) = match self.kind {
            GanKind::Dcgan => (2e-4, 0.5, 0.999),
            GanKind::WganGp | GanKind::CondWganGp => (1e-4, 0.0, 0.9),
        };
        (
            self.generator_learning_rate.unwrap_or(lr),
            self.critic_learning_rate.unwrap_or(lr),
            self.beta1.unwrap_or(b1),
            self.beta2.unwrap_or(b2),
        )
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if self.critic_steps < 1 {
            return Err(GanError::Spec("critic_steps must be at least 1".into()));
        }
        if !(self.gp_lambda >= 0.0) {
            return Err(GanError::Spec("gp_lambda must be non-negative".into()));
        }
        if self.batch < 2 {
            return Err(GanError::Spec("batch must hold at least 2 samples".into()));
        }
        Ok(())
    }
}

/// Training samples `[n, len, channels]`, already normalized, with optional condition indices.
#[derive(Clone, Debug)]
pub struct GanData {
    len: usize,
    channels: usize,
    samples: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl GanData {
    pub fn new(len: usize, channels: usize, samples: Vec<f64>, labels: Option<Vec<usize>>) -> Result<Self, GanError> {
        let per = len * channels;
        if per == 0 || samples.len() % per != 0 {
            return Err(GanError::Shape(format!("{} values do not split into {len}×{channels} samples", samples.len())));
        }
        let n = samples.len() / per;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(GanError::Label(format!("{} labels for {n} samples", l.len())));
            }
            if let Some(bad) = l.iter().find(|&&c| c >= COND_CLASSES) {
                return Err(GanError::Label(format!("condition index {bad} out of range")));
            }
        }
        Ok(Self { len, channels, samples, labels })
    }

    /// Uses the weight × balance condition of each sequence when `conditional` is set.
    pub fn from_sequences(seqs: &[MotionSequence], conditional: bool) -> Result<Self, GanError> {
        let mut samples = Vec::with_capacity(seqs.len() * crate::dataset::SEQ_LEN * crate::dataset::FEATURES);
        let mut labels = Vec::with_capacity(seqs.len());
        for (i, s) in seqs.iter().enumerate() {
            if !s.normalized {
                return Err(GanError::Data(format!("sequence {i} is not normalized")));
            }
            samples.extend_from_slice(s.data());
            if conditional {
                let meta = s.labels.as_ref().ok_or_else(|| GanError::Label(format!("sequence {i} has no labels")))?;
                labels.push(ConditionLabel::from_meta(meta).index());
            }
        }
        Self::new(crate::dataset::SEQ_LEN, crate::dataset::FEATURES, samples, conditional.then_some(labels))
    }

    pub fn len(&self) -> usize {
        self.samples.len() / (self.len * self.channels)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_shape(&self) -> [usize; 2] {
        [self.len, self.channels]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let per = self.len * self.channels;
        &self.samples[i * per..(i + 1) * per]
    }

    pub fn batch(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.len * self.channels);
        for &i in idx {
            data.extend_from_slice(self.sample(i));
        }
        Tensor::new(vec![idx.len(), self.len, self.channels], data).expect("batch size")
    }

    fn batch_labels(&self, idx: &[usize]) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect())
    }
}

/// Losses recorded at one generator update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub generator_step: usize,
    pub epoch: usize,
    /// Mean critic (or discriminator) loss over the updates since the previous generator step.
    pub critic_loss: f64,
    pub gradient_penalty: f64,
    /// Mean of `mean(C(real)) - mean(C(fake))`; absent for DCGAN.
    pub wasserstein: Option<f64>,
    pub generator_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEpochStats {
    pub epoch: usize,
    pub critic_loss: f64,
    pub generator_loss: f64,
    pub wasserstein: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub samples: usize,
    pub generated: DistanceStats,
    pub real: DistanceStats,
    /// Generated mean pairwise distance over the real one.
    pub ratio: f64,
    pub collapsed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanReport {
    pub kind: GanKind,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<GanEpochStats>,
    /// Critic updates performed before each generator update.
    pub critic_updates_per_gen_step: Vec<usize>,
    /// First epoch of a window in which both losses stayed within tolerance of their mean.
    pub stationary_since: Option<usize>,
    pub diversity: Option<DiversityReport>,
}

pub struct TrainedGan {
    pub generator: Generator,
    pub critic: Critic,
    pub generator_optimizer: AdamState,
    pub critic_optimizer: AdamState,
    pub report: GanReport,
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal))
}

fn numerical(step: usize) -> impl Fn(NumericsError) -> GanError {
    move |e| match e {
        NumericsError::Numerical { .. } => GanError::Numerical { step, detail: e.to_string() },
        other => GanError::Numerics(other),
    }
}

fn critic_input<'t>(x: Var<'t>, labels: Option<&[usize]>) -> Result<Var<'t>, GanError> {
    match labels {
        Some(l) => with_label_channels(x, l),
        None => Ok(x),
    }
}

struct Trainer<'a> {
    spec: &'a GanTrainSpec,
    data: &'a GanData,
    gen: Generator,
    critic: Critic,
    gen_opt: AdamState,
    critic_opt: AdamState,
}

/// Critic-side totals since the last generator update.
#[derive(Default)]
struct Pending {
    updates: usize,
    loss: f64,
    penalty: f64,
    wasserstein: f64,
}

impl Trainer<'_> {
    /// Generated batch as a plain tensor (no gradient to the generator).
    fn fakes(&self, rng: &mut ChaCha8Rng, labels: Option<&[usize]>, b: usize) -> Result<Tensor, GanError> {
        let tape = Tape::new();
        let bound = self.gen.params.bind(&tape, false);
        let z = normal_tensor(rng, &[b, self.gen.spec().noise_dim]);
        let (y, _) = self.gen.forward(&bound, noise_with_labels(&tape, z, labels)?, Mode::Train)?;
        Ok((*y.value()).clone())
    }

    fn critic_score<'t>(&self, bound: &Bound<'t>, x: Var<'t>, labels: Option<&[usize]>) -> Result<(Var<'t>, Vec<crate::numerics::BnUpdate>), GanError> {
        self.critic.forward(bound, critic_input(x, labels)?, Mode::Train)
    }

    fn critic_update(&mut self, idx: &[usize], step: usize, pending: &mut Pending) -> Result<(), GanError> {
        let mut rng = derive_indexed(self.spec.seed, "gan/critic-step", step as u64);
        let labels = self.data.batch_labels(idx);
        let real = self.data.batch(idx);
        let fake = self.fakes(&mut rng, labels.as_deref(), idx.len())?;

        let tape = Tape::new();
        let bound = self.critic.params.bind(&tape, true);
        let (c_real, mut bn) = self.critic_score(&bound, tape.constant(real.clone()), labels.as_deref())?;
        let (c_fake, bn_fake) = self.critic_score(&bound, tape.constant(fake.clone()), labels.as_deref())?;
        let (loss, penalty, w) = if self.spec.kind.is_wasserstein() {
            let (core, _) = wasserstein_losses(c_real, c_fake);
            let critic = |x| -> Result<_, GanError> { Ok(self.critic_score(&bound, x, labels.as_deref())?.0) };
            let gp = gradient_penalty(&tape, critic, &real, &fake, &mut rng)?;
            let loss = core.add(gp.scale(self.spec.gp_lambda))?;
            (loss, gp.value().item(), -core.value().item())
        } else {
            let (d_loss, _) = dcgan_losses(c_real, c_fake, self.spec.real_label);
            (d_loss, 0.0, 0.0)
        };
        let lv = loss.value().item();
        if !lv.is_finite() {
            return Err(GanError::Numerical { step, detail: format!("critic loss {lv}") });
        }
        let grads = bound.gradients(loss).map_err(numerical(step))?;
        self.critic_opt.step(&mut self.critic.params.params, &grads)?;
        bn.extend(bn_fake);
        self.critic.params.apply_bn_updates(bn);
        pending.updates += 1;
        pending.loss += lv;
        pending.penalty += penalty;
        pending.wasserstein += w;
        Ok(())
    }

    fn generator_update(&mut self, step: usize) -> Result<f64, GanError> {
        let mut rng = derive_indexed(self.spec.seed, "gan/generator-step", step as u64);
        let b = self.spec.batch;
        let labels: Option<Vec<usize>> = self
            .data
            .labels()
            .map(|l| (0..b).map(|_| l[rng.random_range(0..l.len())]).collect());
        let z = normal_tensor(&mut rng, &[b, self.gen.spec().noise_dim]);

        let tape = Tape::new();
        let gen_bound = self.gen.params.bind(&tape, true);
        let critic_bound = self.critic.params.bind(&tape, false);
        let (fake, bn) = self.gen.forward(&gen_bound, noise_with_labels(&tape, z, labels.as_deref())?, Mode::Train)?;
        let (score, _) = self.critic_score(&critic_bound, fake, labels.as_deref())?;
        let loss = if self.spec.kind.is_wasserstein() {
            score.mean().neg()
        } else {
            dcgan_losses(score, score, self.spec.real_label).1
        };
        let lv = loss.value().item();
        if !lv.is_finite() {
            return Err(GanError::Numerical { step, detail: format!("generator loss {lv}") });
        }
        let grads = gen_bound.gradients(loss).map_err(numerical(step))?;
        self.gen_opt.step(&mut self.gen.params.params, &grads)?;
        self.gen.params.apply_bn_updates(bn);
        Ok(lv)
    }
}

fn check_compat(spec: &GanTrainSpec, data: &GanData, g: &GeneratorSpec, c: &CriticSpec) -> Result<(), GanError> {
    let wasserstein = spec.kind.is_wasserstein();
    if wasserstein != (c.head == CriticHead::Linear) {
        return Err(GanError::Spec(format!("{:?} needs a {} critic head", spec.kind, if wasserstein { "linear" } else { "sigmoid" })));
    }
    let cond = if spec.kind.is_conditional() { COND_CLASSES } else { 0 };
    if g.cond_dim != cond || c.cond_dim != cond {
        return Err(GanError::Spec(format!("{:?} needs cond_dim {cond} in both networks", spec.kind)));
    }
    if spec.kind.is_conditional() && data.labels().is_none() {
        return Err(GanError::Label("conditional training needs a label on every sample".into()));
    }
    if [c.seq_len, c.channels] != data.sample_shape() {
        return Err(GanError::Shape(format!("critic expects {}×{}, data is {:?}", c.seq_len, c.channels, data.sample_shape())));
    }
    Ok(())
}

/// Trains a generator/critic pair. Every random draw derives from `spec.seed`.
pub fn train_gan(
    spec: &GanTrainSpec,
    data: &GanData,
    gen_spec: GeneratorSpec,
    critic_spec: CriticSpec,
) -> Result<TrainedGan, GanError> {
    spec.validate()?;
    let gen_spec = GeneratorSpec { batchnorm: spec.generator_batchnorm, ..gen_spec };
    check_compat(spec, data, &gen_spec, &critic_spec)?;
    let batches = data.len() / spec.batch;
    if batches == 0 {
        return Err(GanError::Data(format!("{} samples cannot fill a batch of {}", data.len(), spec.batch)));
    }
    let gen = Generator::build(gen_spec, &mut derive_rng(spec.seed, "gan/generator-init"))?;
    if gen.output_shape() != data.sample_shape() {
        return Err(GanError::Shape(format!("generator emits {:?}, data is {:?}", gen.output_shape(), data.sample_shape())));
    }
    let critic = Critic::build(critic_spec, &mut derive_rng(spec.seed, "gan/critic-init"))?;
    let (lr_g, lr_c, b1, b2) = spec.adam_settings();
    let mut t = Trainer {
        spec,
        data,
        gen,
        critic,
        gen_opt: AdamState::new(lr_g, b1, b2),
        critic_opt: AdamState::new(lr_c, b1, b2),
    };
    let per_gen = if spec.kind.is_wasserstein() { spec.critic_steps } else { 1 };
    let mut report = GanReport {
        kind: spec.kind,
        steps: Vec::new(),
        epochs: Vec::new(),
        critic_updates_per_gen_step: Vec::new(),
        stationary_since: None,
        diversity: None,
    };
    let mut critic_step = 0;
    let mut pending = Pending::default();
    'outer: for epoch in 0..spec.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut derive_indexed(spec.seed, "gan/shuffle", epoch as u64));
        let first_step = report.steps.len();
        for idx in order.chunks_exact(spec.batch) {
            t.critic_update(idx, critic_step, &mut pending)?;
            critic_step += 1;
            if pending.updates == per_gen {
                let g = report.steps.len();
                let g_loss = t.generator_update(g)?;
                let n = pending.updates as f64;
                report.critic_updates_per_gen_step.push(pending.updates);
                report.steps.push(StepRecord {
                    generator_step: g,
                    epoch,
                    critic_loss: pending.loss / n,
                    gradient_penalty: pending.penalty / n,
                    wasserstein: spec.kind.is_wasserstein().then_some(pending.wasserstein / n),
                    generator_loss: g_loss,
                });
                pending = Pending::default();
                if spec.max_generator_steps.is_some_and(|m| report.steps.len() >= m) {
                    push_epoch(&mut report, epoch, first_step);
                    break 'outer;
                }
            }
        }
        push_epoch(&mut report, epoch, first_step);
    }
    report.stationary_since = detect_stationary(&report.epochs, spec.stationary_window, spec.stationary_tolerance);
    if spec.diversity_samples > 1 {
        report.diversity = Some(diversity(&t, spec.diversity_samples.min(data.len()))?);
    }
    Ok(TrainedGan {
        generator: t.gen,
        critic: t.critic,
        generator_optimizer: t.gen_opt,
        critic_optimizer: t.critic_opt,
        report,
    })
}

fn push_epoch(report: &mut GanReport, epoch: usize, first_step: usize) {
    let steps = &report.steps[first_step..];
    if steps.is_empty() {
        return;
    }
    let n = steps.len() as f64;
    report.epochs.push(GanEpochStats {
        epoch,
        critic_loss: steps.iter().map(|s| s.critic_loss).sum::<f64>() / n,
        generator_loss: steps.iter().map(|s| s.generator_loss).sum::<f64>() / n,
        wasserstein: steps[0].wasserstein.map(|_| steps.iter().filter_map(|s| s.wasserstein).sum::<f64>() / n),
    });
}

/// Start of the first `window`-epoch span in which both losses stay within
/// `tolerance` (relative) of their span mean.
pub fn detect_stationary(epochs: &[GanEpochStats], window: usize, tolerance: f64) -> Option<usize> {
    if window == 0 || epochs.len() < window {
        return None;
    }
    let steady = |vals: &[f64]| {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().all(|v| (v - mean).abs() <= tolerance * mean.abs())
    };
    epochs.windows(window).find_map(|w| {
        let c: Vec<f64> = w.iter().map(|e| e.critic_loss).collect();
        let g: Vec<f64> = w.iter().map(|e| e.generator_loss).collect();
        (steady(&c) && steady(&g)).then_some(w[0].epoch)
    })
}

/// Mean, standard deviation and minimum of all pairwise Euclidean distances.
pub fn pairwise_distance_stats(samples: &[&[f64]]) -> DistanceStats {
    let mut d = Vec::with_capacity(samples.len() * samples.len().saturating_sub(1) / 2);
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            d.push(samples[i].iter().zip(samples[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return DistanceStats { mean: 0.0, std: 0.0, min: 0.0 };
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    DistanceStats { mean, std: var.sqrt(), min: d.iter().copied().fold(f64::INFINITY, f64::min) }
}

const SAMPLE_CHUNK: usize = 100;

fn diversity(t: &Trainer<'_>, n: usize) -> Result<DiversityReport, GanError> {
    let mut rng = derive_rng(t.spec.seed, "gan/diversity");
    let mut generated: Vec<Vec<f64>> = Vec::with_capacity(n);
    let nz = t.gen.spec().noise_dim;
    while generated.len() < n {
        let b = SAMPLE_CHUNK.min(n - generated.len());
        let labels: Option<Vec<usize>> = t.data.labels().map(|l| (0..b).map(|_| l[rng.random_range(0..l.len())]).collect());
        let out = t.gen.sample(normal_tensor(&mut rng, &[b, nz]), labels.as_deref())?;
        let per = out.numel() / b;
        generated.extend(out.data().chunks(per).map(<[f64]>::to_vec));
    }
    let mut pick: Vec<usize> = (0..t.data.len()).collect();
    pick.shuffle(&mut rng);
    let real: Vec<&[f64]> = pick[..n].iter().map(|&i| t.data.sample(i)).collect();
    let fake: Vec<&[f64]> = generated.iter().map(Vec::as_slice).collect();
    let g = pairwise_distance_stats(&fake);
    let r = pairwise_distance_stats(&real);
    let ratio = if r.mean > 0.0 { g.mean / r.mean } else { 0.0 };
    Ok(DiversityReport { samples: n, generated: g, real: r, ratio, collapsed: ratio < t.spec.collapse_ratio })
}
