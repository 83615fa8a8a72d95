//! Training driver for the pairwise ranking detector: balanced minibatch
//! construction, the epoch loop with clipped AdamW updates and step-decay
//! scheduling, per-epoch ranking-dynamics logging, and optional
//! best-on-validation model selection.

use serde::{Deserialize, Serialize};

use crate::data::{DistTag, EmbeddingSet, SplitTag};
use crate::error::{Error, Result};
use crate::head::{apply_update, HeadConfig, OptimizerState, ScoringHead, StepLrSchedule};
use crate::metrics::{auroc, DetectionScores};
use crate::numerics::Rng;
use crate::pairloss::{total_loss, LossConfig, MarginBatch};

/// Full training recipe. Defaults follow the published setup: 500 epochs,
/// batch 512 split half ID / half OOD, AdamW 1e-4 with weight decay 1e-5,
/// StepLR x0.9 every 10 epochs, clip 1.0, beta 0.1, lambda 0.01.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossConfig,
    /// None derives [dim, 256, 128, 1] with dropout 0.1 from the data.
    pub head: Option<HeadConfig>,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub scheduler_step: usize,
    pub scheduler_gamma: f64,
    pub seed: u64,
    pub select_best_on_val: bool,
    pub dynamics_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 512,
            loss: LossConfig::default(),
            head: None,
            lr: 1e-4,
            weight_decay: 1e-5,
            clip_norm: 1.0,
            scheduler_step: 10,
            scheduler_gamma: 0.9,
            seed: 42,
            select_best_on_val: true,
            dynamics_epsilon: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "batch size must be even and >= 2 (half ID, half OOD), got {}",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter(
                "lr and clip_norm must be positive, weight_decay non-negative".into(),
            ));
        }
        if self.scheduler_step == 0 || !(self.scheduler_gamma > 0.0) {
            return Err(Error::InvalidParameter(
                "scheduler needs step >= 1 and gamma > 0".into(),
            ));
        }
        if !(self.dynamics_epsilon > 0.0) {
            return Err(Error::InvalidParameter(
                "dynamics epsilon must be positive".into(),
            ));
        }
        if let Some(h) = &self.head {
            h.validate()?;
        }
        Ok(())
    }
}

/// Margin statistics over ID x OOD pairs: misranked proportion Pr(delta < 0),
/// boundary mass Pr(|delta| < epsilon), and the mean margin. For a constant
/// scorer every margin is zero, so the misranked fraction is 0 and the
/// boundary mass is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMarginStats {
    pub misranked_frac: f64,
    pub boundary_mass: f64,
    pub mean_margin: f64,
    pub pairs_counted: usize,
}

/// One epoch of training dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub epoch: usize,
    pub misranked_frac: f64,
    pub boundary_mass: f64,
    pub mean_margin: f64,
    pub train_loss: f64,
    pub val_auroc: Option<f64>,
}

/// Trained head plus the per-epoch record. `head` is the best-validation
/// checkpoint when selection is enabled, otherwise the final epoch;
/// `final_head` is always the last epoch.
#[derive(Debug)]
pub struct TrainResult {
    pub head: ScoringHead,
    pub final_head: ScoringHead,
    pub best_epoch: Option<usize>,
    pub dynamics: Vec<DynamicsRecord>,
}

/// Pure margin statistics from two score vectors.
pub fn pair_margin_stats(id_scores: &[f64], ood_scores: &[f64], epsilon: f64) -> PairMarginStats {
    let mut misranked = 0usize;
    let mut boundary = 0usize;
    let mut sum = 0.0;
    for &o in ood_scores {
        for &i in id_scores {
            let d = o - i;
            if d < 0.0 {
                misranked += 1;
            }
            if d.abs() < epsilon {
                boundary += 1;
            }
            sum += d;
        }
    }
    let total = id_scores.len() * ood_scores.len();
    PairMarginStats {
        misranked_frac: misranked as f64 / total as f64,
        boundary_mass: boundary as f64 / total as f64,
        mean_margin: sum / total as f64,
        pairs_counted: total,
    }
}

/// When the full ID x OOD cross product exceeds this, dynamics are estimated
/// on a fixed-seed subsample of [`DYNAMICS_SUBSAMPLE_PAIRS`] pairs.
pub const DYNAMICS_FULL_PAIR_LIMIT: usize = 10_000_000;
pub const DYNAMICS_SUBSAMPLE_PAIRS: usize = 200_000;
const DYNAMICS_SUBSAMPLE_SEED: u64 = 0x00D1_AA11_CE5A_11D0;

fn subsampled_stats(id_scores: &[f64], ood_scores: &[f64], epsilon: f64) -> PairMarginStats {
    let mut rng = Rng::new(DYNAMICS_SUBSAMPLE_SEED);
    let mut misranked = 0usize;
    let mut boundary = 0usize;
    let mut sum = 0.0;
    for _ in 0..DYNAMICS_SUBSAMPLE_PAIRS {
        let i = rng.next_range(id_scores.len() as u64) as usize;
        let j = rng.next_range(ood_scores.len() as u64) as usize;
        let d = ood_scores[j] - id_scores[i];
        if d < 0.0 {
            misranked += 1;
        }
        if d.abs() < epsilon {
            boundary += 1;
        }
        sum += d;
    }
    PairMarginStats {
        misranked_frac: misranked as f64 / DYNAMICS_SUBSAMPLE_PAIRS as f64,
        boundary_mass: boundary as f64 / DYNAMICS_SUBSAMPLE_PAIRS as f64,
        mean_margin: sum / DYNAMICS_SUBSAMPLE_PAIRS as f64,
        pairs_counted: DYNAMICS_SUBSAMPLE_PAIRS,
    }
}

/// Eval-mode margin statistics of `head` over the train-split ID x OOD
/// pairs (or the fixed-seed subsample when the cross product is huge).
pub fn compute_dynamics(
    head: &ScoringHead,
    data: &EmbeddingSet,
    epsilon: f64,
) -> Result<PairMarginStats> {
    data.require_both_tags(SplitTag::Train)?;
    let id_idx = data.cell_indices(DistTag::Id, SplitTag::Train);
    let ood_idx = data.cell_indices(DistTag::Ood, SplitTag::Train);
    let id_scores = head.score(&data.gather(&id_idx))?;
    let ood_scores = head.score(&data.gather(&ood_idx))?;
    Ok(
        if id_scores.len().saturating_mul(ood_scores.len()) > DYNAMICS_FULL_PAIR_LIMIT {
            subsampled_stats(&id_scores, &ood_scores, epsilon)
        } else {
            pair_margin_stats(&id_scores, &ood_scores, epsilon)
        },
    )
}

/// Balanced batch schedule over the train split: each batch holds exactly
/// batch_size/2 ID and batch_size/2 OOD record indices. The longer side is
/// shuffled once per epoch and consumed with its tail truncated; the shorter
/// side is reshuffled (a fresh pass without replacement) whenever it runs
/// out, so every batch stays balanced.
pub fn make_balanced_batches(
    set: &EmbeddingSet,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "batch size must be even and >= 2, got {batch_size}"
        )));
    }
    let half = batch_size / 2;
    let id_idx = set.cell_indices(DistTag::Id, SplitTag::Train);
    let ood_idx = set.cell_indices(DistTag::Ood, SplitTag::Train);
    for (name, side) in [("ID", &id_idx), ("OOD", &ood_idx)] {
        if side.len() < half {
            return Err(Error::Capacity(format!(
                "train split has {} {name} records, need at least {half} per batch",
                side.len()
            )));
        }
    }
    let n_batches = id_idx.len().max(ood_idx.len()) / half;

    struct Deck {
        pool: Vec<usize>,
        order: Vec<usize>,
        cursor: usize,
    }
    impl Deck {
        fn new(pool: Vec<usize>, rng: &mut Rng) -> Self {
            let mut order = pool.clone();
            rng.shuffle(&mut order);
            Deck {
                pool,
                order,
                cursor: 0,
            }
        }
        fn draw(&mut self, n: usize, rng: &mut Rng) -> Vec<usize> {
            if self.cursor + n > self.order.len() {
                self.order = self.pool.clone();
                rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            let out = self.order[self.cursor..self.cursor + n].to_vec();
            self.cursor += n;
            out
        }
    }

    let mut id_deck = Deck::new(id_idx, rng);
    let mut ood_deck = Deck::new(ood_idx, rng);
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let ids = id_deck.draw(half, rng);
        let oods = ood_deck.draw(half, rng);
        batches.push((ids, oods));
    }
    Ok(batches)
}

/// Run the full training loop. Deterministic: identical config and data
/// give bitwise-identical parameters. Aborts with a numeric error carrying
/// the last finite checkpoint if the loss ever leaves the reals.
pub fn train(data: &EmbeddingSet, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    data.require_both_tags(SplitTag::Train)?;
    let val_available = data.require_both_tags(SplitTag::Val).is_ok();
    if cfg.select_best_on_val && !val_available {
        return Err(Error::Capacity(
            "best-on-validation selection needs ID and OOD records in the val split".into(),
        ));
    }

    let head_config = cfg
        .head
        .clone()
        .unwrap_or_else(|| HeadConfig::scoring(data.dim()));
    if head_config.input_dim() != data.dim() {
        return Err(Error::Shape(format!(
            "head input width {} does not match embedding dim {}",
            head_config.input_dim(),
            data.dim()
        )));
    }

    let mut init_rng = Rng::from_seed_stream(cfg.seed, 0);
    let mut batch_rng = Rng::from_seed_stream(cfg.seed, 1);
    let dropout_rng = Rng::from_seed_stream(cfg.seed, 2);
    let mut head = ScoringHead::new(head_config, &mut init_rng, dropout_rng)?;
    let mut opt = OptimizerState::adamw(
        cfg.lr,
        cfg.weight_decay,
        Some(cfg.clip_norm),
        Some(StepLrSchedule {
            step_size: cfg.scheduler_step,
            gamma: cfg.scheduler_gamma,
        }),
    );

    if cfg.epochs == 0 {
        head.set_training(false);
        return Ok(TrainResult {
            head: head.clone(),
            final_head: head,
            best_epoch: None,
            dynamics: Vec::new(),
        });
    }

    let val_id = data.cell_indices(DistTag::Id, SplitTag::Val);
    let val_ood = data.cell_indices(DistTag::Ood, SplitTag::Val);
    let val_id_mat = data.gather(&val_id);
    let val_ood_mat = data.gather(&val_ood);

    let mut last_good = head.clone();
    let mut best: Option<(f64, usize, ScoringHead)> = None;
    let mut dynamics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        let batches = make_balanced_batches(data, cfg.batch_size, &mut batch_rng)?;
        let mut loss_sum = 0.0;
        for (ids, oods) in &batches {
            let half = ids.len();
            let mut joint = Vec::with_capacity(half * 2);
            joint.extend_from_slice(ids);
            joint.extend_from_slice(oods);
            let batch_mat = data.gather(&joint);
            head.set_training(true);
            let step = (|| -> Result<f64> {
                let (scores, cache) = head.forward(&batch_mat)?;
                let (id_scores, ood_scores) = scores.split_at(half);
                let margin_batch =
                    MarginBatch::new(id_scores.to_vec(), ood_scores.to_vec(), cfg.loss.beta)?;
                let tl = total_loss(&margin_batch, &cfg.loss)?;
                if !tl.loss.is_finite() {
                    return Err(Error::Numeric("non-finite batch loss".into()));
                }
                let mut d_scores = Vec::with_capacity(half * 2);
                d_scores.extend_from_slice(&tl.d_id);
                d_scores.extend_from_slice(&tl.d_ood);
                let (grads, _) = head.backward(&cache, &d_scores)?;
                apply_update(head.mlp_mut(), &mut opt, grads)?;
                Ok(tl.loss)
            })();
            match step {
                Ok(loss) => loss_sum += loss,
                Err(Error::Numeric(_)) => {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        last_good: Box::new(last_good),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        head.set_training(false);

        // Post-epoch scoring also fails when the parameters have left the
        // reals; rescue the same last-good checkpoint in that case.
        let epoch_eval = (|| -> Result<(PairMarginStats, Option<f64>)> {
            let stats = compute_dynamics(&head, data, cfg.dynamics_epsilon)?;
            let val_auroc = if val_available {
                let id_s = head.score(&val_id_mat)?;
                let ood_s = head.score(&val_ood_mat)?;
                Some(auroc(&DetectionScores::new(id_s, ood_s, "val")?))
            } else {
                None
            };
            Ok((stats, val_auroc))
        })();
        let (stats, val_auroc) = match epoch_eval {
            Ok(v) => v,
            Err(Error::Numeric(_)) => {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    last_good: Box::new(last_good),
                });
            }
            Err(e) => return Err(e),
        };
        dynamics.push(DynamicsRecord {
            epoch,
            misranked_frac: stats.misranked_frac,
            boundary_mass: stats.boundary_mass,
            mean_margin: stats.mean_margin,
            train_loss: loss_sum / batches.len() as f64,
            val_auroc,
        });

        if cfg.select_best_on_val {
            let v = val_auroc.expect("validated above");
            // >= so ties prefer the most-trained epoch; val AUROC saturates
            // early on easy splits and the later head has wider margins.
            if best.as_ref().is_none_or(|(b, _, _)| v >= *b) {
                best = Some((v, epoch, head.clone()));
            }
        }
        last_good = head.clone();
    }

    let final_head = head;
    let (selected, best_epoch) = match best {
        Some((_, epoch, h)) => (h, Some(epoch)),
        None => (final_head.clone(), None),
    };
    Ok(TrainResult {
        head: selected,
        final_head,
        best_epoch,
        dynamics,
    })
}

/// `epoch,misranked_frac,boundary_mass,mean_margin,train_loss,val_auroc`
/// CSV; the last field is empty when no validation split was scored.
pub fn dynamics_csv(records: &[DynamicsRecord]) -> String {
    let mut out =
        String::from("epoch,misranked_frac,boundary_mass,mean_margin,train_loss,val_auroc\n");
    for r in records {
        let val = r.val_auroc.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.misranked_frac, r.boundary_mass, r.mean_margin, r.train_loss, val
        ));
    }
    out
}
