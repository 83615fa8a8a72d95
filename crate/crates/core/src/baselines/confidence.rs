//! Confidence-based detectors on the classifier logits: maximum softmax /
//! sigmoid probability (MSP), input-perturbed temperature scaling (ODIN),
//! and the energy score.

use crate::baselines::classifier::{ClassifierHead, TaskMode};
use crate::error::Result;
use crate::numerics::{logsumexp, sigmoid, Matrix};

/// Class confidence of one logits row under the task mode: max(p, 1-p) from
/// the sigmoid for a single logit, max softmax for multiclass, and the mean
/// per-task sigmoid confidence for multitask.
fn confidence(mode: TaskMode, logits: &[f64]) -> f64 {
    match mode {
        TaskMode::BinarySingleLogit => {
            let p = sigmoid(logits[0]);
            p.max(1.0 - p)
        }
        TaskMode::Multiclass { .. } => {
            let lse = logsumexp(logits);
            logits
                .iter()
                .map(|&z| (z - lse).exp())
                .fold(f64::NEG_INFINITY, f64::max)
        }
        TaskMode::Multitask { .. } => {
            let sum: f64 = logits
                .iter()
                .map(|&z| {
                    let p = sigmoid(z);
                    p.max(1.0 - p)
                })
                .sum();
            sum / logits.len() as f64
        }
    }
}

/// MSP: OOD score = 1 - class confidence.
pub fn score_msp(clf: &ClassifierHead, batch: &Matrix) -> Result<Vec<f64>> {
    let logits = clf.logits(batch)?;
    Ok((0..logits.rows())
        .map(|r| 1.0 - confidence(clf.task_mode(), logits.row(r)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdinParams {
    pub epsilon: f64,
    pub temperature: f64,
}

impl Default for OdinParams {
    fn default() -> Self {
        OdinParams {
            epsilon: 0.0014,
            temperature: 1000.0,
        }
    }
}

/// ODIN on pre-computed feature inputs: perturb x' = x - eps * sign(dL/dx)
/// where L is the cross-entropy against the predicted class, then apply the
/// temperature exactly once to the logits of x' and score 1 - confidence.
/// With eps = 0 and T = 1 this reduces to MSP element-for-element.
pub fn score_odin(clf: &ClassifierHead, batch: &Matrix, params: OdinParams) -> Result<Vec<f64>> {
    let mode = clf.task_mode();
    let (logits, cache) = clf.mlp().forward_eval(batch)?;
    // dL/dlogits of the per-sample cross-entropy against the predicted
    // class; scaling is irrelevant because only the sign of dL/dx is used.
    let mut d_logits = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        match mode {
            TaskMode::BinarySingleLogit | TaskMode::Multitask { .. } => {
                for (c, &z) in row.iter().enumerate() {
                    let target = if z >= 0.0 { 1.0 } else { 0.0 };
                    d_logits.set(r, c, sigmoid(z) - target);
                }
            }
            TaskMode::Multiclass { .. } => {
                let predicted = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(i, _)| i)
                    .expect("non-empty logits");
                let lse = logsumexp(row);
                for (c, &z) in row.iter().enumerate() {
                    let softmax = (z - lse).exp();
                    let indicator = if c == predicted { 1.0 } else { 0.0 };
                    d_logits.set(r, c, softmax - indicator);
                }
            }
        }
    }
    let (_, d_input) = clf.mlp().backward(&cache, &d_logits)?;
    let mut perturbed = batch.clone();
    for r in 0..batch.rows() {
        for c in 0..batch.cols() {
            let step = params.epsilon * d_input.get(r, c).signum_or_zero();
            perturbed.set(r, c, batch.get(r, c) - step);
        }
    }
    let logits2 = clf.logits(&perturbed)?;
    Ok((0..logits2.rows())
        .map(|r| {
            let scaled: Vec<f64> = logits2
                .row(r)
                .iter()
                .map(|&z| z / params.temperature)
                .collect();
            1.0 - confidence(mode, &scaled)
        })
        .collect())
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Energy score -logsumexp(logits); single-logit tasks augment the logits as
/// [z, -z]; multitask averages the per-task augmented energies. Larger
/// energy = more OOD.
pub fn score_energy(clf: &ClassifierHead, batch: &Matrix) -> Result<Vec<f64>> {
    let logits = clf.logits(batch)?;
    Ok((0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            match clf.task_mode() {
                TaskMode::Multiclass { .. } => -logsumexp(row),
                TaskMode::BinarySingleLogit => -logsumexp(&[row[0], -row[0]]),
                TaskMode::Multitask { .. } => {
                    let sum: f64 = row.iter().map(|&z| -logsumexp(&[z, -z])).sum();
                    sum / row.len() as f64
                }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{Activation, HeadConfig, Mlp};
    use crate::numerics::Rng;

    /// Hand-built classifier with explicit parameters and no hidden layers.
    fn linear_classifier(
        weights: Vec<f64>,
        bias: Vec<f64>,
        in_dim: usize,
        mode: TaskMode,
    ) -> ClassifierHead {
        let out = mode.output_dim();
        let cfg = HeadConfig {
            layer_dims: vec![in_dim, out],
            dropout_rate: 0.0,
            activation: Activation::Relu,
        };
        let mut rng = Rng::new(0);
        let mut mlp = Mlp::new(cfg, &mut rng, Rng::new(1)).unwrap();
        let mut flat = weights;
        flat.extend(bias);
        mlp.set_params_flat(&flat).unwrap();
        ClassifierHead::from_parts(mlp, mode).unwrap()
    }

    /// Identity feature map: logits equal the (single) input column.
    fn passthrough_binary() -> ClassifierHead {
        linear_classifier(vec![1.0], vec![0.0], 1, TaskMode::BinarySingleLogit)
    }

    #[test]
    fn msp_binary_logit_zero_scores_half() {
        let clf = passthrough_binary();
        let batch = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        assert_eq!(score_msp(&clf, &batch).unwrap(), vec![0.5]);
    }

    #[test]
    fn msp_saturates_to_zero_for_large_logits() {
        let clf = passthrough_binary();
        let batch = Matrix::from_vec(1, 1, vec![50.0]).unwrap();
        assert!(score_msp(&clf, &batch).unwrap()[0] < 1e-15);
    }

    #[test]
    fn msp_multiclass_matches_hand_softmax() {
        // Logits [2,1,0] via a 3-in identity map: score = 1 - e^2/(e^2+e+1).
        let clf = linear_classifier(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            3,
            TaskMode::Multiclass { classes: 3 },
        );
        let batch = Matrix::from_vec(1, 3, vec![2.0, 1.0, 0.0]).unwrap();
        let expect = 1.0 - 2f64.exp() / (2f64.exp() + 1f64.exp() + 1.0);
        let got = score_msp(&clf, &batch).unwrap()[0];
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn msp_multitask_averages_task_confidences() {
        let clf = linear_classifier(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            2,
            TaskMode::Multitask { tasks: 2 },
        );
        // Task logits 0 and 40: confidences 0.5 and ~1.
        let batch = Matrix::from_vec(1, 2, vec![0.0, 40.0]).unwrap();
        let got = score_msp(&clf, &batch).unwrap()[0];
        assert!((got - 0.25).abs() < 1e-12);
    }

    #[test]
    fn odin_with_no_perturbation_and_unit_temperature_is_msp() {
        let mut rng = Rng::new(7);
        let clf = linear_classifier(
            (0..6).map(|_| rng.standard_normal()).collect(),
            vec![0.1, -0.2],
            3,
            TaskMode::Multiclass { classes: 2 },
        );
        let batch =
            Matrix::from_vec(4, 3, (0..12).map(|_| rng.standard_normal()).collect()).unwrap();
        let msp = score_msp(&clf, &batch).unwrap();
        let odin = score_odin(
            &clf,
            &batch,
            OdinParams {
                epsilon: 0.0,
                temperature: 1.0,
            },
        )
        .unwrap();
        assert_eq!(msp, odin);
    }

    #[test]
    fn odin_high_temperature_flattens_multiclass_confidence() {
        let clf = linear_classifier(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![0.0; 3],
            3,
            TaskMode::Multiclass { classes: 3 },
        );
        let batch = Matrix::from_vec(1, 3, vec![5.0, 1.0, -2.0]).unwrap();
        let got = score_odin(
            &clf,
            &batch,
            OdinParams {
                epsilon: 0.0,
                temperature: 1e9,
            },
        )
        .unwrap()[0];
        // Confidence tends to 1/3, score to 2/3.
        assert!((got - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn odin_perturbation_matches_hand_sign_pattern() {
        // Linear binary model w = (1, -2), b = 0 at x = (1, 1): z = -1 < 0 so
        // the predicted target is 0 and dL/dz = sigmoid(-1). dL/dx =
        // sigmoid(-1) * w has signs (+, -), hence x' = (1 - eps, 1 + eps).
        let clf = linear_classifier(vec![1.0, -2.0], vec![0.0], 2, TaskMode::BinarySingleLogit);
        let eps = 0.25;
        let batch = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        // Recover the perturbed point from the returned confidence by
        // scoring the hand-perturbed input directly.
        let hand = Matrix::from_vec(1, 2, vec![1.0 - eps, 1.0 + eps]).unwrap();
        let via_odin = score_odin(
            &clf,
            &batch,
            OdinParams {
                epsilon: eps,
                temperature: 1.0,
            },
        )
        .unwrap()[0];
        let via_hand = score_msp(&clf, &hand).unwrap()[0];
        assert!((via_odin - via_hand).abs() < 1e-15);
    }

    #[test]
    fn energy_reference_values() {
        // Two-logit [0, 0]: E = -log 2.
        let clf2 = linear_classifier(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            2,
            TaskMode::Multiclass { classes: 2 },
        );
        let z00 = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let got = score_energy(&clf2, &z00).unwrap()[0];
        assert!((got + std::f64::consts::LN_2).abs() < 1e-15);

        // Single logit 0 augments to [0, 0]: also -log 2.
        let clf1 = passthrough_binary();
        let z0 = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let got1 = score_energy(&clf1, &z0).unwrap()[0];
        assert!((got1 + std::f64::consts::LN_2).abs() < 1e-15);

        // [3, 1]: E = -ln(e^3 + e^1), checked against the direct sum.
        let z31 = Matrix::from_vec(1, 2, vec![3.0, 1.0]).unwrap();
        let got31 = score_energy(&clf2, &z31).unwrap()[0];
        assert!((got31 + (3f64.exp() + 1f64.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn energy_multitask_averages_per_task() {
        let clf = linear_classifier(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            2,
            TaskMode::Multitask { tasks: 2 },
        );
        let batch = Matrix::from_vec(1, 2, vec![0.0, 3.0]).unwrap();
        let e0 = -(2.0f64).ln();
        let e1 = -((3f64).exp() + (-3f64).exp()).ln();
        let got = score_energy(&clf, &batch).unwrap()[0];
        assert!((got - 0.5 * (e0 + e1)).abs() < 1e-12);
    }
}
