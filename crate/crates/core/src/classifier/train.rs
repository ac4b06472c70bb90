use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, LabeledSet};
use crate::numerics::ops::{softmax_cross_entropy, Mode};
use crate::numerics::{AdamState, NumericsError, Tape};
use crate::rng::derive_indexed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self { epochs: 400, batch: 32, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, seed: 0 }
    }
}

impl ClassifierTrainConfig {
    pub fn optimizer(&self) -> AdamState {
        AdamState::new(self.learning_rate, self.beta1, self.beta2)
    }
}

/// Rows are actual labels, columns predicted labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_predictions(classes: usize, actual: &[usize], predicted: &[usize]) -> Result<Self, ClassifierError> {
        if actual.len() != predicted.len() {
            return Err(ClassifierError::Data("actual and predicted lengths differ".into()));
        }
        let mut m = Self::new(classes);
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= classes || p >= classes {
                return Err(ClassifierError::Label(format!("label {} outside {classes} classes", a.max(p))));
            }
            m.counts[a][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Validation confusion matrix after the last epoch.
    pub confusion: ConfusionMatrix,
    /// Epoch with the highest validation accuracy (earliest on ties).
    pub best_epoch: usize,
}

impl TrainReport {
    /// Learning curves as CSV, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy).unwrap();
        }
        out
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 256;

/// Mean cross-entropy, accuracy and confusion matrix in inference mode.
pub fn evaluate(model: &Classifier, data: &LabeledSet) -> Result<Evaluation, ClassifierError> {
    let k = model.num_classes();
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= k) {
        return Err(ClassifierError::Label(format!("label {bad} outside {k} classes")));
    }
    let mut loss_sum = 0.0;
    let mut predicted = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        let inputs = data.batch(chunk).map(|t| tape.constant(t));
        let logits = model.logits(&bound, inputs, Mode::Infer, None)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
        let loss = softmax_cross_entropy(logits, &labels)?;
        loss_sum += loss.value().item() * chunk.len() as f64;
        predicted.extend(logits.value().data().chunks(k).map(argmax));
    }
    let confusion = ConfusionMatrix::from_predictions(k, data.labels(), &predicted)?;
    let n = data.len().max(1) as f64;
    Ok(Evaluation { loss: loss_sum / n, accuracy: confusion.accuracy(), confusion })
}

/// Mini-batch Adam on softmax cross-entropy. Deterministic for a fixed config.
pub fn train_classifier(
    model: &mut Classifier,
    train: &LabeledSet,
    val: &LabeledSet,
    cfg: &ClassifierTrainConfig,
    optimizer: &mut AdamState,
) -> Result<TrainReport, ClassifierError> {
    if train.is_empty() || val.is_empty() {
        return Err(ClassifierError::Data("training and validation sets must be non-empty".into()));
    }
    if cfg.batch == 0 {
        return Err(ClassifierError::Data("batch size must be positive".into()));
    }
    let k = model.num_classes();
    if let Some(&bad) = train.labels().iter().find(|&&l| l >= k) {
        return Err(ClassifierError::Label(format!("label {bad} outside {k} classes")));
    }
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut confusion = ConfusionMatrix::new(k);
    let mut best = (0, f64::NEG_INFINITY);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut derive_indexed(cfg.seed, "classifier/shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, idx) in order.chunks(cfg.batch).enumerate() {
            let numerical = |e: NumericsError| ClassifierError::Numerical { epoch, batch: b, detail: e.to_string() };
            let tape = Tape::new();
            let bound = model.params.bind(&tape, true);
            let inputs = train.batch(idx).map(|t| tape.constant(t));
            let mut rng = derive_indexed(cfg.seed, "classifier/dropout", step);
            let logits = model.logits(&bound, inputs, Mode::Train, Some(&mut rng))?;
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let loss = softmax_cross_entropy(logits, &labels)?;
            let lv = loss.value().item();
            if !lv.is_finite() {
                return Err(ClassifierError::Numerical { epoch, batch: b, detail: format!("loss {lv}") });
            }
            let grads = bound.gradients(loss).map_err(numerical)?;
            optimizer.step(&mut model.params.params, &grads)?;
            step += 1;
            loss_sum += lv * idx.len() as f64;
            correct += logits.value().data().chunks(k).map(argmax).zip(&labels).filter(|(p, l)| p == *l).count();
        }
        let ev = evaluate(model, val)?;
        log::debug!("epoch {epoch}: train loss {:.4}, val acc {:.3}", loss_sum / train.len() as f64, ev.accuracy);
        if ev.accuracy > best.1 {
            best = (epoch, ev.accuracy);
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss: ev.loss,
            val_accuracy: ev.accuracy,
        });
        confusion = ev.confusion;
    }
    Ok(TrainReport { epochs, confusion, best_epoch: best.0 })
}
