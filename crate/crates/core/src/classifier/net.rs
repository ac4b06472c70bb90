use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Task};
use crate::dataset::{cluster_split, ClusterView, MotionSequence, NormStats, CLUSTER_WIDTHS, SEQ_LEN};
use crate::numerics::ops::{softmax, Mode};
use crate::numerics::{
    Activation, AdamState, Bound, Forward, LayerSpec, ModelState, NumericsError, ParamStore, Sequential, Tape, Tensor,
    Var,
};
use crate::rng::derive_rng;

/// Layer schedule shared by the three branches, plus the dense head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchicalNetSpec {
    pub seq_len: usize,
    pub cluster_widths: Vec<usize>,
    /// Filters of the three conv layers in every branch.
    pub filters: Vec<usize>,
    /// Taps spacing per conv layer; only the first is dilated by default.
    pub spacings: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub dense_units: usize,
    pub dropout: f64,
}

impl Default for HierarchicalNetSpec {
    fn default() -> Self {
        Self {
            seq_len: SEQ_LEN,
            cluster_widths: CLUSTER_WIDTHS.to_vec(),
            filters: vec![4, 8, 8],
            spacings: vec![1, 0, 0],
            kernel: 3,
            pool: 2,
            dense_units: 32,
            dropout: 0.25,
        }
    }
}

impl HierarchicalNetSpec {
    fn branch(&self, k: usize) -> Result<Sequential, NumericsError> {
        if self.filters.len() != self.spacings.len() || self.filters.is_empty() {
            return Err(NumericsError::Shape("filters and spacings must be non-empty and the same length".into()));
        }
        let mut layers = Vec::new();
        for (&filters, &spacing) in self.filters.iter().zip(&self.spacings) {
            layers.push(LayerSpec::Conv1d { filters, kernel: self.kernel, stride: 1, spacing });
            layers.push(LayerSpec::Activation(Activation::Relu));
            layers.push(LayerSpec::MaxPool1d { size: self.pool });
        }
        let probe = Sequential::new("probe", vec![self.seq_len, self.cluster_widths[k]], layers.clone())?;
        let flat = probe.output_shape().iter().product();
        layers.push(LayerSpec::Reshape { shape: vec![flat] });
        Sequential::new(&format!("branch{k}"), vec![self.seq_len, self.cluster_widths[k]], layers)
    }
}

/// Everything needed to rebuild a classifier without its weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub spec: HierarchicalNetSpec,
    pub classes: Vec<String>,
    pub task: Option<Task>,
}

#[derive(Clone, Debug)]
pub struct Classifier {
    arch: ClassifierArch,
    branches: Vec<Sequential>,
    head: Sequential,
    pub params: ParamStore,
}

impl Classifier {
    /// Builds the network and draws initial weights from `seed`.
    pub fn build(arch: ClassifierArch, seed: u64) -> Result<Self, ClassifierError> {
        let mut c = Self::from_arch(arch)?;
        let mut rng = derive_rng(seed, "classifier/init");
        for b in &c.branches {
            b.init_params(&mut c.params, &mut rng);
        }
        c.head.init_params(&mut c.params, &mut rng);
        Ok(c)
    }

    fn from_arch(arch: ClassifierArch) -> Result<Self, ClassifierError> {
        let spec = &arch.spec;
        if spec.cluster_widths.len() != 3 || spec.cluster_widths.contains(&0) {
            return Err(NumericsError::Shape(format!("need three positive cluster widths, got {:?}", spec.cluster_widths)).into());
        }
        if arch.classes.len() < 2 {
            return Err(ClassifierError::Data("a classifier needs at least two classes".into()));
        }
        let branches = (0..3).map(|k| spec.branch(k)).collect::<Result<Vec<_>, _>>()?;
        let concat: usize = branches.iter().map(|b| b.output_shape()[0]).sum();
        let head = Sequential::new(
            "head",
            vec![concat],
            vec![
                LayerSpec::Dense { units: spec.dense_units },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::Dropout { rate: spec.dropout },
                LayerSpec::Dense { units: arch.classes.len() },
            ],
        )?;
        Ok(Self { arch, branches, head, params: ParamStore::default() })
    }

    pub fn arch(&self) -> &ClassifierArch {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.classes.len()
    }

    pub fn branches(&self) -> &[Sequential] {
        &self.branches
    }

    pub fn head(&self) -> &Sequential {
        &self.head
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().map(Sequential::param_count).sum::<usize>() + self.head.param_count()
    }

    /// Unnormalized class scores `[batch, classes]` for cluster inputs `[batch, T, width]`.
    pub fn logits<'t>(
        &self,
        bound: &Bound<'t>,
        inputs: [Var<'t>; 3],
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var<'t>, ClassifierError> {
        let tape = inputs[0].tape();
        let mut parts = Vec::with_capacity(3);
        for (b, x) in self.branches.iter().zip(inputs) {
            let mut ctx = Forward::new(bound, &self.params, mode);
            parts.push(b.forward(&mut ctx, x)?);
        }
        let joined = tape.concat_cols(&parts)?;
        let mut ctx = Forward::new(bound, &self.params, mode);
        if let Some(r) = rng {
            ctx = ctx.with_rng(r);
        }
        Ok(self.head.forward(&mut ctx, joined)?)
    }

    /// Class probabilities in inference mode.
    pub fn predict_proba(&self, inputs: &[Tensor; 3]) -> Result<Tensor, ClassifierError> {
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        let xs = inputs.clone().map(|t| tape.constant(t));
        let logits = self.logits(&bound, xs, Mode::Infer, None)?;
        Ok((*softmax(logits)?.value()).clone())
    }

    pub fn to_state(&self, optimizer: Option<AdamState>, norm: Option<&NormStats>) -> ModelState {
        let mut extra = std::collections::BTreeMap::new();
        if let Some(n) = norm {
            n.insert_into(&mut extra);
        }
        ModelState {
            arch: serde_json::to_string(&self.arch).expect("architecture serializes"),
            params: self.params.clone(),
            extra,
            optimizer,
        }
    }

    pub fn from_state(state: &ModelState) -> Result<(Self, Option<NormStats>), ClassifierError> {
        let arch: ClassifierArch = serde_json::from_str(&state.arch)?;
        let mut c = Self::from_arch(arch)?;
        let expected = c.param_count();
        if state.params.param_count() != expected {
            return Err(NumericsError::Checkpoint(format!(
                "checkpoint has {} parameters, architecture needs {expected}",
                state.params.param_count()
            ))
            .into());
        }
        c.params = state.params.clone();
        Ok((c, NormStats::from_extra(&state.extra)))
    }
}

/// Cluster views with class labels.
#[derive(Clone, Debug, Default)]
pub struct LabeledSet {
    views: Vec<ClusterView>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn from_sequences(seqs: &[MotionSequence], labels: Vec<usize>) -> Result<Self, ClassifierError> {
        Self::from_views(seqs.iter().map(cluster_split).collect(), labels)
    }

    pub fn from_views(views: Vec<ClusterView>, labels: Vec<usize>) -> Result<Self, ClassifierError> {
        if views.len() != labels.len() {
            return Err(ClassifierError::Data(format!("{} inputs but {} labels", views.len(), labels.len())));
        }
        Ok(Self { views, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Stacks the selected samples into three `[batch, T, width]` tensors.
    pub fn batch(&self, idx: &[usize]) -> [Tensor; 3] {
        std::array::from_fn(|k| {
            let mut data = Vec::with_capacity(idx.len() * SEQ_LEN * CLUSTER_WIDTHS[k]);
            for &i in idx {
                data.extend_from_slice(&self.views[i].clusters[k]);
            }
            Tensor::new(vec![idx.len(), SEQ_LEN, CLUSTER_WIDTHS[k]], data).expect("cluster view size")
        })
    }
}
