//! The pairwise ranking objective: per-pair margins, Bradley-Terry pair
//! probabilities, the logistic ranking loss with exact score gradients, the
//! squared-score gauge regularizer, and the per-pair weight function
//! w_beta(t) = beta * sigmoid(-beta * t).
//!
//! Margins follow the detector convention: delta = ood_score - id_score,
//! positive when the pair is ranked correctly. The loss is the mean of
//! log(1 + exp(-beta * delta)) over all ID x OOD pairs of a balanced batch;
//! it depends only on margins, so adding a constant to every score leaves it
//! unchanged. The regularizer lambda * (mean(id^2) + mean(ood^2)) pins that
//! gauge without disturbing the optimal ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log1pexp, sigmoid, Matrix};

/// Temperature and gauge-penalty strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.1,
            lambda: 0.01,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive and finite, got {}",
                self.beta
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be non-negative and finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// All ID x OOD margins of one minibatch with their per-pair weights.
/// `margins[j][i] = ood_scores[j] - id_scores[i]`; `weights[j][i] =
/// beta * sigmoid(-beta * margins[j][i])`, in (0, beta).
#[derive(Debug, Clone)]
pub struct MarginBatch {
    id_scores: Vec<f64>,
    ood_scores: Vec<f64>,
    beta: f64,
    margins: Matrix,
    weights: Matrix,
}

impl MarginBatch {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>, beta: f64) -> Result<Self> {
        if id_scores.is_empty() || ood_scores.is_empty() {
            return Err(Error::InvalidParameter(
                "margin batch needs at least one score per side".into(),
            ));
        }
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if id_scores
            .iter()
            .chain(ood_scores.iter())
            .any(|s| !s.is_finite())
        {
            return Err(Error::Numeric("non-finite score in margin batch".into()));
        }
        let (m, k) = (id_scores.len(), ood_scores.len());
        let mut margins = Matrix::zeros(k, m);
        let mut weights = Matrix::zeros(k, m);
        for j in 0..k {
            for i in 0..m {
                let d = ood_scores[j] - id_scores[i];
                margins.set(j, i, d);
                weights.set(j, i, hard_pair_weight(d, beta));
            }
        }
        Ok(MarginBatch {
            id_scores,
            ood_scores,
            beta,
            margins,
            weights,
        })
    }

    pub fn id_scores(&self) -> &[f64] {
        &self.id_scores
    }

    pub fn ood_scores(&self) -> &[f64] {
        &self.ood_scores
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn margins(&self) -> &Matrix {
        &self.margins
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }
}

/// Bradley-Terry probability that the ID sample is preferred (ranked below):
/// sigmoid(beta * (e_out - e_in)).
pub fn pair_probability(e_in: f64, e_out: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    sigmoid(beta * (e_out - e_in))
}

/// Loss value with exact gradients with respect to both score vectors.
#[derive(Debug, Clone)]
pub struct PairLossGrad {
    pub loss: f64,
    pub d_id: Vec<f64>,
    pub d_ood: Vec<f64>,
}

/// Mean over all k x m pairs of log(1 + exp(-beta * delta)), with
/// d/d ood_j = -(beta/(k m)) sum_i sigmoid(-beta delta_ji) and the opposite
/// sign per pair on the ID side.
pub fn mole_pair_loss(batch: &MarginBatch) -> PairLossGrad {
    let m = batch.id_scores.len();
    let k = batch.ood_scores.len();
    let beta = batch.beta;
    let scale = 1.0 / (k * m) as f64;
    let mut loss = 0.0;
    let mut d_id = vec![0.0; m];
    let mut d_ood = vec![0.0; k];
    for j in 0..k {
        for i in 0..m {
            let delta = batch.margins.get(j, i);
            loss += log1pexp(-beta * delta);
            let w = beta * sigmoid(-beta * delta);
            d_ood[j] -= w;
            d_id[i] += w;
        }
    }
    loss *= scale;
    for g in &mut d_id {
        *g *= scale;
    }
    for g in &mut d_ood {
        *g *= scale;
    }
    PairLossGrad { loss, d_id, d_ood }
}

/// Gauge regularizer lambda * (mean(id^2) + mean(ood^2)) with gradients
/// 2 lambda s / n per side.
pub fn l2_regularizer(id_scores: &[f64], ood_scores: &[f64], lambda: f64) -> Result<PairLossGrad> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be non-negative and finite, got {lambda}"
        )));
    }
    let m = id_scores.len().max(1) as f64;
    let k = ood_scores.len().max(1) as f64;
    let mean_sq = |v: &[f64], n: f64| v.iter().map(|s| s * s).sum::<f64>() / n;
    let loss = lambda * (mean_sq(id_scores, m) + mean_sq(ood_scores, k));
    Ok(PairLossGrad {
        loss,
        d_id: id_scores.iter().map(|s| 2.0 * lambda * s / m).collect(),
        d_ood: ood_scores.iter().map(|s| 2.0 * lambda * s / k).collect(),
    })
}

/// Ranking loss plus regularizer, gradients summed. This is the quantity the
/// trainer backpropagates.
pub fn total_loss(batch: &MarginBatch, cfg: &LossConfig) -> Result<PairLossGrad> {
    let pair = mole_pair_loss(batch);
    let reg = l2_regularizer(&batch.id_scores, &batch.ood_scores, cfg.lambda)?;
    Ok(PairLossGrad {
        loss: pair.loss + reg.loss,
        d_id: pair
            .d_id
            .iter()
            .zip(&reg.d_id)
            .map(|(a, b)| a + b)
            .collect(),
        d_ood: pair
            .d_ood
            .iter()
            .zip(&reg.d_ood)
            .map(|(a, b)| a + b)
            .collect(),
    })
}

/// Per-pair gradient magnitude w_beta(delta) = beta * sigmoid(-beta * delta),
/// strictly decreasing in delta, in (0, beta). Largest for misranked pairs.
pub fn hard_pair_weight(delta: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    beta * sigmoid(-beta * delta)
}

/// First-order predicted margin increase from one plain gradient step of
/// size `lr` on a single pair's loss: lr * w_beta(delta) * ||d||^2, where d
/// is the parameter-space direction gap between the pair's two score
/// gradients.
pub fn predicted_margin_gain(delta: f64, beta: f64, lr: f64, dir_norm_sq: f64) -> f64 {
    debug_assert!(lr > 0.0 && dir_norm_sq >= 0.0);
    lr * hard_pair_weight(delta, beta) * dir_norm_sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{Activation, Gradients, HeadConfig, Mlp};
    use crate::numerics::Rng;

    #[test]
    fn equal_scores_give_log_two() {
        let b = MarginBatch::new(vec![1.0, 1.0], vec![1.0, 1.0], 0.5).unwrap();
        let out = mole_pair_loss(&b);
        assert_eq!(out.loss, std::f64::consts::LN_2);
    }

    #[test]
    fn saturated_correct_pair_has_negligible_loss() {
        let b = MarginBatch::new(vec![0.0], vec![40.0], 1.0).unwrap();
        assert!(mole_pair_loss(&b).loss < 1e-15);
    }

    #[test]
    fn pair_probability_examples() {
        assert_eq!(pair_probability(0.0, 0.0, 3.7), 0.5);
        assert!(pair_probability(0.0, 50.0, 1.0) > 1.0 - 1e-15);
        let p = pair_probability(0.3, 1.1, 2.0);
        let q = pair_probability(1.1, 0.3, 2.0);
        assert!((p + q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_matches_explicit_enumeration_and_finite_differences() {
        let beta = 0.7;
        let id = vec![0.4, -0.9];
        let ood = vec![0.1, 1.3];
        let batch = MarginBatch::new(id.clone(), ood.clone(), beta).unwrap();
        let got = mole_pair_loss(&batch);

        // Explicit sum over the 4 pairs.
        let mut expect = 0.0;
        for &o in &ood {
            for &i in &id {
                expect += log1pexp(-beta * (o - i));
            }
        }
        expect /= 4.0;
        assert!((got.loss - expect).abs() < 1e-15);

        // Central finite differences on each score.
        let h = 1e-6;
        let eval = |id: &[f64], ood: &[f64]| {
            mole_pair_loss(&MarginBatch::new(id.to_vec(), ood.to_vec(), beta).unwrap()).loss
        };
        for i in 0..id.len() {
            let mut plus = id.clone();
            let mut minus = id.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (eval(&plus, &ood) - eval(&minus, &ood)) / (2.0 * h);
            assert!(
                (fd - got.d_id[i]).abs() < 1e-8,
                "id grad {i}: fd={fd} vs {}",
                got.d_id[i]
            );
        }
        for j in 0..ood.len() {
            let mut plus = ood.clone();
            let mut minus = ood.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (eval(&id, &plus) - eval(&id, &minus)) / (2.0 * h);
            assert!(
                (fd - got.d_ood[j]).abs() < 1e-8,
                "ood grad {j}: fd={fd} vs {}",
                got.d_ood[j]
            );
        }
    }

    #[test]
    fn regularizer_hand_value() {
        // id = [1,-1], ood = [2], lambda = 0.5: 0.5 * (1 + 4) = 2.5.
        let r = l2_regularizer(&[1.0, -1.0], &[2.0], 0.5).unwrap();
        assert_eq!(r.loss, 2.5);
        assert_eq!(r.d_id, vec![0.5, -0.5]);
        assert_eq!(r.d_ood, vec![2.0]);
    }

    #[test]
    fn regularizer_zero_cases() {
        assert_eq!(l2_regularizer(&[0.0, 0.0], &[0.0], 0.7).unwrap().loss, 0.0);
        assert_eq!(l2_regularizer(&[3.0], &[-2.0], 0.0).unwrap().loss, 0.0);
        assert!(l2_regularizer(&[1.0], &[1.0], -0.1).is_err());
    }

    #[test]
    fn hard_pair_weight_examples() {
        assert_eq!(hard_pair_weight(0.0, 0.1), 0.05);
        assert!(hard_pair_weight(400.0, 0.1) < 1e-17);
        assert!((hard_pair_weight(-400.0, 0.1) - 0.1).abs() < 1e-15);
        // Strictly decreasing.
        let mut prev = f64::INFINITY;
        for i in -10..=10 {
            let w = hard_pair_weight(i as f64 * 0.5, 0.1);
            assert!(w < prev);
            prev = w;
        }
    }

    #[test]
    fn loss_is_translation_invariant_regularizer_is_not() {
        let id = vec![0.2, -1.4, 0.9];
        let ood = vec![0.5, 2.2];
        let beta = 0.3;
        let base = mole_pair_loss(&MarginBatch::new(id.clone(), ood.clone(), beta).unwrap()).loss;
        for c in [1.0, -2.5, 10.0] {
            let id_c: Vec<f64> = id.iter().map(|s| s + c).collect();
            let ood_c: Vec<f64> = ood.iter().map(|s| s + c).collect();
            let shifted =
                mole_pair_loss(&MarginBatch::new(id_c.clone(), ood_c.clone(), beta).unwrap()).loss;
            assert!(
                (base - shifted).abs() <= 1e-12,
                "pair loss moved under shift {c}"
            );
            let reg0 = l2_regularizer(&id, &ood, 0.01).unwrap().loss;
            let reg_c = l2_regularizer(&id_c, &ood_c, 0.01).unwrap().loss;
            assert!(
                (reg0 - reg_c).abs() > 1e-6,
                "regularizer should not be shift invariant"
            );
        }
    }

    #[test]
    fn per_pair_gradients_are_antisymmetric() {
        let out = mole_pair_loss(&MarginBatch::new(vec![0.37], vec![-0.81], 1.3).unwrap());
        assert_eq!(out.d_ood[0], -out.d_id[0]);
    }

    #[test]
    fn loss_is_strictly_convex_in_the_margin() {
        let beta = 0.8;
        let h = 1e-3;
        for i in -50..=50 {
            let delta = i as f64 * 0.1;
            let f = |d: f64| log1pexp(-beta * d);
            let second = (f(delta + h) - 2.0 * f(delta) + f(delta - h)) / (h * h);
            assert!(
                second > 0.0,
                "second difference not positive at delta={delta}"
            );
        }
    }

    #[test]
    fn large_beta_approaches_hard_ranking_penalty() {
        let beta = 1e3;
        let correct = MarginBatch::new(vec![0.0], vec![0.1], beta).unwrap();
        assert!(mole_pair_loss(&correct).loss < 1e-15);
        let mis1 = mole_pair_loss(&MarginBatch::new(vec![0.1], vec![0.0], beta).unwrap()).loss;
        let mis2 = mole_pair_loss(&MarginBatch::new(vec![0.2], vec![0.0], beta).unwrap()).loss;
        // Penalty grows linearly in |delta|: loss ~ beta * |delta|.
        assert!((mis1 - 100.0).abs() < 1e-9);
        assert!((mis2 / mis1 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn weight_groups_order_hard_above_boundary_above_easy() {
        // Margins spanning misranked, boundary and easy pairs.
        let beta = 0.1;
        let margins = [-3.0, -1.2, -0.03, 0.01, 0.04, 1.5, 4.0];
        let weight = |d: f64| hard_pair_weight(d, beta);
        let mean = |ds: Vec<f64>| {
            let n = ds.len() as f64;
            ds.iter().map(|&d| weight(d)).sum::<f64>() / n
        };
        let hard = mean(margins.iter().cloned().filter(|&d| d < 0.0).collect());
        let easy = mean(margins.iter().cloned().filter(|&d| d > 0.0).collect());
        let boundary = mean(
            margins
                .iter()
                .cloned()
                .filter(|&d| d.abs() < 0.05)
                .collect(),
        );
        assert!(
            hard > boundary && boundary > easy,
            "got hard={hard}, boundary={boundary}, easy={easy}"
        );
    }

    #[test]
    fn predicted_gain_trivial_cases() {
        assert_eq!(predicted_margin_gain(1.0, 0.5, 1e-4, 0.0), 0.0);
        // Equal norms: smaller margin gets the larger predicted gain.
        let g1 = predicted_margin_gain(-0.5, 0.5, 1e-4, 2.0);
        let g2 = predicted_margin_gain(0.5, 0.5, 1e-4, 2.0);
        assert!(g1 > g2);
    }

    #[test]
    fn predicted_gain_matches_one_sgd_step_on_a_linear_head() {
        // Linear head E(x) = w.x + b on fixed 2-D features; the margin is
        // linear in the parameters, so the first-order prediction is exact
        // up to rounding.
        let cfg = HeadConfig {
            layer_dims: vec![2, 1],
            dropout_rate: 0.0,
            activation: Activation::Relu,
        };
        let mut init = Rng::new(3);
        let mut mlp = Mlp::new(cfg, &mut init, Rng::new(4)).unwrap();
        mlp.set_training(true);
        let beta = 0.1;
        let lr = 1e-4;
        let x_in = [0.3, -1.1];
        let x_out = [1.4, 0.6];
        let batch = Matrix::from_rows(vec![x_in.to_vec(), x_out.to_vec()]).unwrap();
        let (out, cache) = mlp.forward(&batch).unwrap();
        let (e_in, e_out) = (out.get(0, 0), out.get(1, 0));
        let delta = e_out - e_in;
        let w = hard_pair_weight(delta, beta);
        // d loss / d scores for the single pair.
        let d = Matrix::from_vec(2, 1, vec![w, -w]).unwrap();
        let (grads, _) = mlp.backward(&cache, &d).unwrap();
        // Plain SGD step (no moments): p <- p - lr * g.
        let mut sgd = Gradients {
            weights: grads.weights,
            biases: grads.biases,
        };
        sgd.scale(lr);
        let mut flat = mlp.params_flat();
        let mut gflat = Vec::new();
        for (wm, bm) in sgd.weights.iter().zip(&sgd.biases) {
            gflat.extend_from_slice(wm.data());
            gflat.extend_from_slice(bm);
        }
        for (p, g) in flat.iter_mut().zip(&gflat) {
            *p -= g;
        }
        mlp.set_params_flat(&flat).unwrap();
        let out2 = mlp.output(&batch).unwrap();
        let measured = (out2.get(1, 0) - out2.get(0, 0)) - delta;
        let dir_norm_sq: f64 = x_in
            .iter()
            .zip(&x_out)
            .map(|(a, b)| (b - a) * (b - a))
            .sum();
        let predicted = predicted_margin_gain(delta, beta, lr, dir_norm_sq);
        assert!(
            ((measured - predicted) / predicted).abs() < 0.05,
            "measured {measured} vs predicted {predicted}"
        );
    }

    #[test]
    fn margin_batch_validates_inputs() {
        assert!(MarginBatch::new(vec![], vec![1.0], 1.0).is_err());
        assert!(MarginBatch::new(vec![1.0], vec![], 1.0).is_err());
        assert!(MarginBatch::new(vec![1.0], vec![1.0], 0.0).is_err());
        assert!(MarginBatch::new(vec![f64::NAN], vec![1.0], 1.0).is_err());
        let b = MarginBatch::new(vec![1.0, 2.0], vec![4.0], 0.25).unwrap();
        assert_eq!(b.margins().get(0, 0), 3.0);
        assert_eq!(b.margins().get(0, 1), 2.0);
        // Weights in (0, beta) and recomputable from the margins.
        for j in 0..1 {
            for i in 0..2 {
                let w = b.weights().get(j, i);
                assert!(w > 0.0 && w < 0.25);
                assert_eq!(w, hard_pair_weight(b.margins().get(j, i), 0.25));
            }
        }
    }
}
