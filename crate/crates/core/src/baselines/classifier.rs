//! Supervised classifier head shared by the confidence- and feature-based
//! baselines: an MLP with two hidden layers of width 64 trained with Adam
//! (lr 0.01, weight decay 5e-4) for up to 500 epochs with early stopping
//! (patience 30) on validation loss and best-validation checkpointing.
//!
//! The classifier is fit on the labeled ID train records; the ID val records
//! drive early stopping when present. OOD records never contribute to the
//! property task.

use serde::{Deserialize, Serialize};

use crate::data::{DistTag, EmbeddingSet, SplitTag};
use crate::error::{Error, Result};
use crate::head::{apply_update, Activation, HeadConfig, Mlp, OptimizerState};
use crate::numerics::{log1pexp, logsumexp, sigmoid, Matrix, Rng};

/// Output arity of the property task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    /// One logit, sigmoid binary classification.
    BinarySingleLogit,
    /// Softmax over `classes` logits.
    Multiclass { classes: usize },
    /// `tasks` independent binary logits. The dataset model carries one
    /// scalar label per record, so only tasks = 1 is trainable from data;
    /// the scorers handle arbitrary arity.
    Multitask { tasks: usize },
}

impl TaskMode {
    pub fn output_dim(&self) -> usize {
        match *self {
            TaskMode::BinarySingleLogit => 1,
            TaskMode::Multiclass { classes } => classes,
            TaskMode::Multitask { tasks } => tasks,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden_dims: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden_dims: vec![64, 64],
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 500,
            patience: 30,
            seed: 42,
        }
    }
}

/// Trained classifier plus its task mode.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    mlp: Mlp,
    task_mode: TaskMode,
}

impl ClassifierHead {
    pub fn from_parts(mlp: Mlp, task_mode: TaskMode) -> Result<Self> {
        if mlp.output_dim() != task_mode.output_dim() {
            return Err(Error::Shape(format!(
                "classifier outputs {} logits, task mode needs {}",
                mlp.output_dim(),
                task_mode.output_dim()
            )));
        }
        Ok(ClassifierHead { mlp, task_mode })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn task_mode(&self) -> TaskMode {
        self.task_mode
    }

    /// Eval-mode logits, one row per input row.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.mlp.output(batch)
    }

    /// Penultimate features used by the distance-based detectors.
    pub fn features(&self, batch: &Matrix) -> Result<Matrix> {
        self.mlp.penultimate(batch)
    }
}

/// Mean training loss and per-logit gradient for the task's objective.
fn loss_and_grad(mode: TaskMode, logits: &Matrix, targets: &Matrix) -> (f64, Matrix) {
    let n = logits.rows();
    let scale = 1.0 / n as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    match mode {
        TaskMode::BinarySingleLogit | TaskMode::Multitask { .. } => {
            // BCE with logits, averaged over samples and tasks.
            let tasks = logits.cols() as f64;
            for r in 0..n {
                for c in 0..logits.cols() {
                    let z = logits.get(r, c);
                    let y = targets.get(r, c);
                    loss += log1pexp(z) - y * z;
                    grad.set(r, c, (sigmoid(z) - y) * scale / tasks);
                }
            }
            loss *= scale / tasks;
        }
        TaskMode::Multiclass { .. } => {
            for r in 0..n {
                let row = logits.row(r);
                let lse = logsumexp(row);
                let y = targets.get(r, 0) as usize;
                loss += lse - row[y];
                for c in 0..row.len() {
                    let softmax = (row[c] - lse).exp();
                    let indicator = if c == y { 1.0 } else { 0.0 };
                    grad.set(r, c, (softmax - indicator) * scale);
                }
            }
            loss *= scale;
        }
    }
    (loss, grad)
}

fn validate_labels(mode: TaskMode, labels: &[f64]) -> Result<()> {
    match mode {
        TaskMode::BinarySingleLogit => {
            if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(Error::Schema(
                    "binary task needs 0/1 labels; binarize continuous targets first".into(),
                ));
            }
        }
        TaskMode::Multiclass { classes } => {
            if labels
                .iter()
                .any(|&l| l.fract() != 0.0 || l < 0.0 || l >= classes as f64)
            {
                return Err(Error::Schema(format!(
                    "multiclass labels must be integers in 0..{classes}"
                )));
            }
        }
        TaskMode::Multitask { tasks } => {
            if tasks != 1 {
                return Err(Error::Schema(
                    "records carry one scalar label; multitask training needs tasks = 1".into(),
                ));
            }
            if labels.iter().any(|&l| l != 0.0 && l != 1.0) {
                return Err(Error::Schema("multitask labels must be 0/1".into()));
            }
        }
    }
    Ok(())
}

/// Fit the shared classifier on the labeled ID train records. Uses labeled
/// ID val records for early stopping and best-checkpoint selection when
/// available, otherwise runs the full epoch budget.
pub fn train_classifier(
    data: &EmbeddingSet,
    task_mode: TaskMode,
    cfg: &ClassifierConfig,
) -> Result<ClassifierHead> {
    let labeled = |split: SplitTag| -> (Vec<usize>, Vec<f64>) {
        let mut idx = Vec::new();
        let mut labels = Vec::new();
        for i in data.cell_indices(DistTag::Id, split) {
            if let Some(l) = data.records()[i].label {
                idx.push(i);
                labels.push(l);
            }
        }
        (idx, labels)
    };
    let (train_idx, train_labels) = labeled(SplitTag::Train);
    if train_idx.is_empty() {
        return Err(Error::Schema(
            "classifier training needs labeled ID records in the train split".into(),
        ));
    }
    validate_labels(task_mode, &train_labels)?;
    let (val_idx, val_labels) = labeled(SplitTag::Val);
    if !val_idx.is_empty() {
        validate_labels(task_mode, &val_labels)?;
    }

    let x_train = data.gather(&train_idx);
    let y_train = Matrix::from_vec(train_labels.len(), 1, train_labels)?;
    let x_val = data.gather(&val_idx);
    let y_val = Matrix::from_vec(val_labels.len(), 1, val_labels)?;

    let mut dims = vec![data.dim()];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(task_mode.output_dim());
    let head_cfg = HeadConfig {
        layer_dims: dims,
        dropout_rate: 0.0,
        activation: Activation::Relu,
    };
    let mut init_rng = Rng::from_seed_stream(cfg.seed, 10);
    let mut mlp = Mlp::new(head_cfg, &mut init_rng, Rng::from_seed_stream(cfg.seed, 12))?;
    let mut opt = OptimizerState::adam_l2(cfg.lr, cfg.weight_decay);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0usize;
    for _epoch in 0..cfg.epochs {
        mlp.set_training(true);
        let (logits, cache) = mlp.forward(&x_train)?;
        let (_, grad) = loss_and_grad(task_mode, &logits, &y_train);
        let (grads, _) = mlp.backward(&cache, &grad)?;
        apply_update(&mut mlp, &mut opt, grads)?;
        mlp.set_training(false);

        if !val_idx.is_empty() {
            let val_logits = mlp.output(&x_val)?;
            let (val_loss, _) = loss_and_grad(task_mode, &val_logits, &y_val);
            if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                best = Some((val_loss, mlp.params_flat()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        mlp.set_params_flat(&params)?;
    }
    mlp.set_training(false);
    ClassifierHead::from_parts(mlp, task_mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EmbeddingRecord;

    /// Binary toy set: label 1 iff x0 > 0, classes linearly separable.
    fn separable_labeled_set(n_per_class: usize, seed: u64) -> EmbeddingSet {
        let mut rng = Rng::new(seed);
        let mut records = Vec::new();
        for split in [SplitTag::Train, SplitTag::Val] {
            for i in 0..n_per_class {
                for (cls, center) in [(0.0, -2.0), (1.0, 2.0)] {
                    records.push(EmbeddingRecord {
                        id: format!("{}-{}-{}", split.as_str(), cls as u8, i),
                        embedding: vec![
                            center + 0.5 * rng.standard_normal(),
                            rng.standard_normal(),
                        ],
                        dist: DistTag::Id,
                        split,
                        label: Some(cls),
                    });
                }
            }
        }
        // A couple of unlabeled OOD rows that training must ignore.
        records.push(EmbeddingRecord {
            id: "ood-0".into(),
            embedding: vec![9.0, 9.0],
            dist: DistTag::Ood,
            split: SplitTag::Train,
            label: None,
        });
        EmbeddingSet::new(2, records).unwrap()
    }

    fn quick_cfg(seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            epochs: 200,
            patience: 30,
            seed,
            ..ClassifierConfig::default()
        }
    }

    #[test]
    fn separable_binary_task_reaches_high_val_accuracy() {
        let set = separable_labeled_set(60, 1);
        let clf = train_classifier(&set, TaskMode::BinarySingleLogit, &quick_cfg(1)).unwrap();
        let val_idx: Vec<usize> = set
            .cell_indices(DistTag::Id, SplitTag::Val)
            .into_iter()
            .filter(|&i| set.records()[i].label.is_some())
            .collect();
        let logits = clf.logits(&set.gather(&val_idx)).unwrap();
        let mut correct = 0;
        for (row, &i) in val_idx.iter().enumerate() {
            let pred = if logits.get(row, 0) >= 0.0 { 1.0 } else { 0.0 };
            if pred == set.records()[i].label.unwrap() {
                correct += 1;
            }
        }
        let acc = correct as f64 / val_idx.len() as f64;
        assert!(acc > 0.95, "val accuracy {acc}");
    }

    #[test]
    fn single_class_labels_still_train() {
        let mut set = separable_labeled_set(20, 2);
        // Collapse every label to 1: MSP downstream becomes degenerate but
        // training itself must complete.
        let records: Vec<EmbeddingRecord> = set
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                if r.label.is_some() {
                    r.label = Some(1.0);
                }
                r
            })
            .collect();
        set = EmbeddingSet::new(2, records).unwrap();
        let clf = train_classifier(&set, TaskMode::BinarySingleLogit, &quick_cfg(3)).unwrap();
        let any = clf.logits(&set.gather(&[0])).unwrap();
        assert!(any.get(0, 0).is_finite());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let set = separable_labeled_set(30, 4);
        let a = train_classifier(&set, TaskMode::BinarySingleLogit, &quick_cfg(9)).unwrap();
        let b = train_classifier(&set, TaskMode::BinarySingleLogit, &quick_cfg(9)).unwrap();
        let pa = a.mlp().params_flat();
        let pb = b.mlp().params_flat();
        assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn missing_labels_is_a_schema_error() {
        let mut records = Vec::new();
        let mut rng = Rng::new(5);
        for i in 0..8 {
            records.push(EmbeddingRecord {
                id: format!("r{i}"),
                embedding: vec![rng.standard_normal()],
                dist: DistTag::Id,
                split: SplitTag::Train,
                label: None,
            });
        }
        let set = EmbeddingSet::new(1, records).unwrap();
        assert!(matches!(
            train_classifier(&set, TaskMode::BinarySingleLogit, &quick_cfg(0)),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn multitask_training_rejects_arity_above_one() {
        let set = separable_labeled_set(10, 6);
        assert!(matches!(
            train_classifier(&set, TaskMode::Multitask { tasks: 3 }, &quick_cfg(0)),
            Err(Error::Schema(_))
        ));
        // tasks = 1 behaves like the binary head.
        assert!(train_classifier(&set, TaskMode::Multitask { tasks: 1 }, &quick_cfg(0)).is_ok());
    }

    #[test]
    fn non_integral_multiclass_labels_rejected() {
        let set = separable_labeled_set(10, 7);
        // Labels are 0/1 so multiclass with 2 classes is fine...
        assert!(train_classifier(&set, TaskMode::Multiclass { classes: 2 }, &quick_cfg(0)).is_ok());
        // ...but a class count of 1 cannot hold label 1.
        assert!(
            train_classifier(&set, TaskMode::Multiclass { classes: 1 }, &quick_cfg(0)).is_err()
        );
    }

    #[test]
    fn loss_and_grad_matches_finite_differences() {
        let logits = Matrix::from_vec(2, 3, vec![0.5, -0.2, 1.1, -0.7, 0.3, 0.0]).unwrap();
        let targets = Matrix::from_vec(2, 1, vec![2.0, 0.0]).unwrap();
        let mode = TaskMode::Multiclass { classes: 3 };
        let (_, grad) = loss_and_grad(mode, &logits, &targets);
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..3 {
                let mut lp = logits.clone();
                lp.set(r, c, lp.get(r, c) + h);
                let mut lm = logits.clone();
                lm.set(r, c, lm.get(r, c) - h);
                let fd = (loss_and_grad(mode, &lp, &targets).0
                    - loss_and_grad(mode, &lm, &targets).0)
                    / (2.0 * h);
                assert!((fd - grad.get(r, c)).abs() < 1e-8);
            }
        }
    }
}
