use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, LabeledSet};
use crate::augment::{augment_iter, AugmentSpec};
use crate::dataset::{apply_zscore, fit_normalizer, Balance, MotionSequence, NormStats, Strategy, TrialMeta, Weight};
use crate::rng::derive_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Heavy vs heaviest; heavier trials are dropped.
    Weight,
    Balance,
    /// The five most frequent strategies A, B, C, D, G.
    Strategy,
}

const STRATEGY_CLASSES: [Strategy; 5] = [Strategy::A, Strategy::B, Strategy::C, Strategy::D, Strategy::G];

impl Task {
    pub fn classes(self) -> Vec<String> {
        match self {
            Task::Weight => vec!["heavy".into(), "heaviest".into()],
            Task::Balance => vec!["balanced".into(), "unbalanced".into()],
            Task::Strategy => STRATEGY_CLASSES.iter().map(|s| s.letter().to_string()).collect(),
        }
    }

    pub fn num_classes(self) -> usize {
        self.classes().len()
    }

    /// Class index of a trial, or `None` when the task ignores it.
    pub fn label_of(self, meta: &TrialMeta) -> Option<usize> {
        match self {
            Task::Weight => match meta.weight {
                Weight::Heavy => Some(0),
                Weight::Heaviest => Some(1),
                Weight::Heavier => None,
            },
            Task::Balance => Some(match meta.balance {
                Balance::Balanced => 0,
                Balance::Unbalanced => 1,
            }),
            Task::Strategy => STRATEGY_CLASSES.iter().position(|&s| s == meta.strategy),
        }
    }

    fn default_validation(self) -> usize {
        match self {
            Task::Weight => 50,
            Task::Balance | Task::Strategy => 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub validation_size: usize,
    pub augment: AugmentSpec,
}

impl TaskSpec {
    pub fn new(task: Task) -> Self {
        Self { task, validation_size: task.default_validation(), augment: AugmentSpec::default() }
    }
}

/// Genuine sequences after label filtering, balancing and the validation draw.
#[derive(Clone, Debug)]
pub struct TaskSplit {
    pub train: Vec<MotionSequence>,
    pub train_labels: Vec<usize>,
    pub val: Vec<MotionSequence>,
    pub val_labels: Vec<usize>,
}

fn labeled(seqs: &[MotionSequence], task: Task) -> Result<Vec<(usize, &MotionSequence)>, ClassifierError> {
    let mut out = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        let meta = s.labels.as_ref().ok_or_else(|| ClassifierError::Label(format!("sequence {i} has no labels")))?;
        if let Some(c) = task.label_of(meta) {
            out.push((c, s));
        }
    }
    Ok(out)
}

/// Filters to the task's classes, downsamples the weight task's majority class,
/// then draws the validation set uniformly without replacement.
pub fn split_task(seqs: &[MotionSequence], spec: &TaskSpec, seed: u64) -> Result<TaskSplit, ClassifierError> {
    let mut items = labeled(seqs, spec.task)?;
    if spec.task == Task::Weight {
        let mut rng = derive_rng(seed, "classifier/balance");
        let k = spec.task.num_classes();
        let counts: Vec<usize> = (0..k).map(|c| items.iter().filter(|(l, _)| *l == c).count()).collect();
        let keep_n = *counts.iter().min().unwrap();
        let mut keep = vec![false; items.len()];
        for c in 0..k {
            let members: Vec<usize> = (0..items.len()).filter(|&i| items[i].0 == c).collect();
            let mut chosen = sample(&mut rng, members.len(), keep_n).into_vec();
            chosen.sort_unstable();
            for j in chosen {
                keep[members[j]] = true;
            }
        }
        items = items.into_iter().zip(keep).filter(|(_, k)| *k).map(|(x, _)| x).collect();
    }
    if spec.validation_size >= items.len() {
        return Err(ClassifierError::Data(format!(
            "validation size {} leaves no training data out of {}",
            spec.validation_size,
            items.len()
        )));
    }
    let mut rng = derive_rng(seed, "classifier/validation");
    let mut is_val = vec![false; items.len()];
    for i in sample(&mut rng, items.len(), spec.validation_size) {
        is_val[i] = true;
    }
    let mut split = TaskSplit { train: Vec::new(), train_labels: Vec::new(), val: Vec::new(), val_labels: Vec::new() };
    for ((label, seq), v) in items.into_iter().zip(is_val) {
        if v {
            split.val.push(seq.clone());
            split.val_labels.push(label);
        } else {
            split.train.push(seq.clone());
            split.train_labels.push(label);
        }
    }
    Ok(split)
}

/// Training and validation sets ready for the network, plus the statistics used to normalize them.
#[derive(Clone, Debug)]
pub struct PreparedTask {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub norm_stats: NormStats,
    pub genuine_train: usize,
}

/// Splits, augments the training part and z-scores both parts with training statistics.
pub fn prepare_task(seqs: &[MotionSequence], spec: &TaskSpec, seed: u64) -> Result<PreparedTask, ClassifierError> {
    let split = split_task(seqs, spec, seed)?;
    let aug_spec = AugmentSpec { seed, ..spec.augment.clone() };
    let augmented: Vec<MotionSequence> = augment_iter(&split.train, &aug_spec)?.collect();
    let n = split.train.len();
    let train_labels: Vec<usize> = (0..augmented.len()).map(|k| split.train_labels[k % n]).collect();
    let stats = fit_normalizer(&augmented)?;
    let norm = |s: &[MotionSequence]| -> Result<Vec<MotionSequence>, ClassifierError> {
        s.iter().map(|x| apply_zscore(x, &stats).map_err(Into::into)).collect()
    };
    let train = LabeledSet::from_sequences(&norm(&augmented)?, train_labels)?;
    let val = LabeledSet::from_sequences(&norm(&split.val)?, split.val_labels)?;
    Ok(PreparedTask { train, val, norm_stats: stats, genuine_train: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BowlSize, Orientation, FEATURES, SEQ_LEN};

    fn seq(weight: Weight, strategy: Strategy, salt: f64) -> MotionSequence {
        let meta = TrialMeta {
            participant: "p".into(),
            bowl_size: BowlSize::Small,
            weight,
            balance: Balance::Balanced,
            orientation: Orientation::Facing,
            strategy,
            frame_rate: 119.88,
        };
        let data = (0..SEQ_LEN * FEATURES).map(|i| ((i as f64) * 0.37 + salt).sin()).collect();
        MotionSequence::new(data, false, Some(meta)).unwrap()
    }

    #[test]
    fn weight_task_balances_and_splits() {
        let mut seqs = Vec::new();
        for i in 0..30 {
            seqs.push(seq(Weight::Heavy, Strategy::A, i as f64));
        }
        for i in 0..45 {
            seqs.push(seq(Weight::Heaviest, Strategy::B, 100.0 + i as f64));
        }
        for i in 0..10 {
            seqs.push(seq(Weight::Heavier, Strategy::G, 200.0 + i as f64));
        }
        let spec = TaskSpec { validation_size: 10, ..TaskSpec::new(Task::Weight) };
        let split = split_task(&seqs, &spec, 1).unwrap();
        assert_eq!(split.train.len() + split.val.len(), 60);
        assert_eq!(split.val.len(), 10);
        let heavy = split.train_labels.iter().chain(&split.val_labels).filter(|&&l| l == 0).count();
        assert_eq!(heavy, 30);
    }

    #[test]
    fn strategy_task_keeps_five_letters() {
        let seqs: Vec<_> = Strategy::ALL.iter().enumerate().map(|(i, &s)| seq(Weight::Heavy, s, i as f64)).collect();
        let spec = TaskSpec { validation_size: 1, ..TaskSpec::new(Task::Strategy) };
        let split = split_task(&seqs, &spec, 0).unwrap();
        assert_eq!(split.train.len() + split.val.len(), 5);
        assert_eq!(Task::Strategy.classes(), vec!["A", "B", "C", "D", "G"]);
    }

    #[test]
    fn oversized_validation_is_data_error() {
        let seqs = vec![seq(Weight::Heavy, Strategy::A, 0.0)];
        let spec = TaskSpec::new(Task::Balance);
        assert!(matches!(split_task(&seqs, &spec, 0), Err(ClassifierError::Data(_))));
    }

    #[test]
    fn prepared_sets_are_normalized_and_sized() {
        let seqs: Vec<_> = (0..12).map(|i| seq(Weight::Heavy, Strategy::A, i as f64)).collect();
        let spec = TaskSpec {
            validation_size: 2,
            augment: AugmentSpec { factor: 3, ..AugmentSpec::default() },
            ..TaskSpec::new(Task::Balance)
        };
        let p = prepare_task(&seqs, &spec, 4).unwrap();
        assert_eq!(p.train.len(), 30);
        assert_eq!(p.val.len(), 2);
        assert_eq!(p.genuine_train, 10);
    }
}
