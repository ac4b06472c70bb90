use serde::{Deserialize, Serialize};

use super::GanError;
use crate::dataset::{Balance, TrialMeta, Weight};
use crate::numerics::{Tape, Tensor, Var};

/// Three weights times two balance states.
pub const COND_CLASSES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionLabel {
    pub weight: Weight,
    pub balance: Balance,
}

impl ConditionLabel {
    pub fn index(self) -> usize {
        let w = Weight::ALL.iter().position(|&w| w == self.weight).unwrap();
        let b = match self.balance {
            Balance::Balanced => 0,
            Balance::Unbalanced => 1,
        };
        2 * w + b
    }

    pub fn from_index(i: usize) -> Option<Self> {
        let weight = *Weight::ALL.get(i / 2)?;
        let balance = if i % 2 == 0 { Balance::Balanced } else { Balance::Unbalanced };
        Some(Self { weight, balance })
    }

    pub fn from_meta(meta: &TrialMeta) -> Self {
        Self { weight: meta.weight, balance: meta.balance }
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; COND_CLASSES];
        v[self.index()] = 1.0;
        v
    }

    /// Parses `weight=heavy,balance=balanced` (either order).
    pub fn parse(text: &str) -> Result<Self, GanError> {
        let mut weight = None;
        let mut balance = None;
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| GanError::Label(format!("expected key=value, got {part:?}")))?;
            match k.trim() {
                "weight" => {
                    weight = Some(
                        Weight::ALL
                            .into_iter()
                            .find(|w| w.name() == v.trim())
                            .ok_or_else(|| GanError::Label(format!("unknown weight {v:?}")))?,
                    )
                }
                "balance" => {
                    balance = Some(match v.trim() {
                        "balanced" => Balance::Balanced,
                        "unbalanced" => Balance::Unbalanced,
                        other => return Err(GanError::Label(format!("unknown balance {other:?}"))),
                    })
                }
                other => return Err(GanError::Label(format!("unknown label key {other:?}"))),
            }
        }
        match (weight, balance) {
            (Some(weight), Some(balance)) => Ok(Self { weight, balance }),
            _ => Err(GanError::Label("label needs both weight and balance".into())),
        }
    }
}

/// Index of the active entry; errors unless `label` is a one-hot vector of length 6.
pub fn validate_one_hot(label: &[f64]) -> Result<usize, GanError> {
    if label.len() != COND_CLASSES {
        return Err(GanError::Shape(format!("label must have {COND_CLASSES} entries, got {}", label.len())));
    }
    let ones: Vec<usize> = (0..label.len()).filter(|&i| label[i] == 1.0).collect();
    if ones.len() != 1 || label.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(GanError::Shape(format!("label {label:?} is not one-hot")));
    }
    Ok(ones[0])
}

/// Generator input: noise followed by the label.
pub fn condition_concat(z: &[f64], label: &[f64]) -> Result<Vec<f64>, GanError> {
    validate_one_hot(label)?;
    Ok(z.iter().chain(label).copied().collect())
}

/// Critic input: each `len × channels` row extended by the label as constant channels.
pub fn condition_channels(seq: &[f64], len: usize, channels: usize, label: &[f64]) -> Result<Vec<f64>, GanError> {
    validate_one_hot(label)?;
    if seq.len() != len * channels {
        return Err(GanError::Shape(format!("sequence has {} values, expected {len}×{channels}", seq.len())));
    }
    let mut out = Vec::with_capacity(len * (channels + COND_CLASSES));
    for row in seq.chunks(channels) {
        out.extend_from_slice(row);
        out.extend_from_slice(label);
    }
    Ok(out)
}

/// One-hot rows `[batch, 6]` for class indices.
pub(crate) fn one_hot_batch(labels: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), COND_CLASSES]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * COND_CLASSES + l] = 1.0;
    }
    t
}

/// `[batch, len, channels]` plus label channels broadcast over time.
pub(crate) fn with_label_channels<'t>(x: Var<'t>, labels: &[usize]) -> Result<Var<'t>, GanError> {
    let shape = x.shape();
    let (b, len) = (shape[0], shape[1]);
    let mut t = Tensor::zeros(&[b, len, COND_CLASSES]);
    for (i, &l) in labels.iter().enumerate() {
        for s in 0..len {
            t.data_mut()[(i * len + s) * COND_CLASSES + l] = 1.0;
        }
    }
    let tape: &Tape = x.tape();
    Ok(tape.concat_cols(&[x, tape.constant(t)])?)
}

pub(crate) fn noise_with_labels<'t>(tape: &'t Tape, z: Tensor, labels: Option<&[usize]>) -> Result<Var<'t>, GanError> {
    match labels {
        None => Ok(tape.constant(z)),
        Some(l) => Ok(tape.concat_cols(&[tape.constant(z), tape.constant(one_hot_batch(l))])?),
    }
}
