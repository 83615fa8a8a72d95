//! Threshold-free detection metrics on the convention "higher score = more
//! OOD": AUROC, AUPR, FPR95, and the ROC/PR curves behind them.
//!
//! AUROC is the Mann-Whitney estimate with ties counted 1/2; it agrees
//! exactly with brute-force pair counting. AUPR treats OOD as the positive
//! class and uses the interpolation-free step sum. FPR95 thresholds at the
//! empirical 95% ID quantile with >= semantics (an interpolated variant is
//! available behind [`FprMode`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample scores for one method, split by ground-truth tag.
#[derive(Debug, Clone)]
pub struct DetectionScores {
    id_scores: Vec<f64>,
    ood_scores: Vec<f64>,
    method: String,
}

impl DetectionScores {
    pub fn new(
        id_scores: Vec<f64>,
        ood_scores: Vec<f64>,
        method: impl Into<String>,
    ) -> Result<Self> {
        if id_scores.is_empty() || ood_scores.is_empty() {
            return Err(Error::InvalidParameter(
                "detection scores need at least one ID and one OOD sample".into(),
            ));
        }
        if id_scores
            .iter()
            .chain(ood_scores.iter())
            .any(|s| !s.is_finite())
        {
            return Err(Error::Numeric("non-finite detection score".into()));
        }
        Ok(DetectionScores {
            id_scores,
            ood_scores,
            method: method.into(),
        })
    }

    pub fn id_scores(&self) -> &[f64] {
        &self.id_scores
    }

    pub fn ood_scores(&self) -> &[f64] {
        &self.ood_scores
    }

    pub fn method(&self) -> &str {
        &self.method
    }
}

/// FPR-at-TPR threshold selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FprMode {
    /// Empirical ID quantile with >= semantics, no interpolation.
    #[default]
    Empirical,
    /// Linear interpolation between the straddling ROC points.
    Interpolated,
}

/// One point of the ROC sweep: at threshold tau a sample is called ID when
/// its score is strictly below tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// One point of the PR sweep: at threshold tau a sample is called OOD
/// (positive) when its score is >= tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Metric bundle plus the curves it was read off from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    pub roc_points: Vec<RocPoint>,
    pub pr_points: Vec<PrPoint>,
}

/// AUROC = Pr(id score < ood score) with ties counted 1/2, computed in
/// O((m+k) log(m+k)) by rank summation. Agrees with the brute-force double
/// loop exactly, including its floating-point result.
pub fn auroc(scores: &DetectionScores) -> f64 {
    let m = scores.id_scores.len();
    let k = scores.ood_scores.len();
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(m + k);
    all.extend(scores.id_scores.iter().map(|&s| (s, false)));
    all.extend(scores.ood_scores.iter().map(|&s| (s, true)));
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite"));

    // Average rank over groups of exactly equal scores.
    let mut rank_sum_ood = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j share the average (i+1+j)/2.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_ood += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_ood - (k * (k + 1)) as f64 / 2.0;
    u / (m as f64 * k as f64)
}

/// Which class the precision-recall sweep treats as positive. The default
/// follows the detection framing: OOD is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuprPositive {
    #[default]
    Ood,
    Id,
}

/// Area under the precision-recall curve with OOD as the positive class,
/// interpolation-free step summation sum_i (R_i - R_{i-1}) * P_i.
pub fn aupr(scores: &DetectionScores) -> f64 {
    let pr = pr_points(scores);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in &pr {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    area
}

/// AUPR under an explicit positive-class convention. The ID-positive sweep
/// predicts ID at score <= threshold, which is the OOD-positive sweep on
/// negated scores with the roles swapped.
pub fn aupr_oriented(scores: &DetectionScores, positive: AuprPositive) -> f64 {
    match positive {
        AuprPositive::Ood => aupr(scores),
        AuprPositive::Id => {
            let flipped = DetectionScores::new(
                scores.ood_scores.iter().map(|s| -s).collect(),
                scores.id_scores.iter().map(|s| -s).collect(),
                scores.method.clone(),
            )
            .expect("already validated");
            aupr(&flipped)
        }
    }
}

/// Fraction of OOD samples accepted as ID at the threshold that admits at
/// least 95% of ID samples (the smallest achievable TPR >= 0.95).
pub fn fpr_at_95_tpr(scores: &DetectionScores) -> f64 {
    fpr_at_tpr(scores, 0.95, FprMode::Empirical)
}

/// General FPR-at-TPR. `level` must be in (0, 1].
pub fn fpr_at_tpr(scores: &DetectionScores, level: f64, mode: FprMode) -> f64 {
    let m = scores.id_scores.len();
    let k = scores.ood_scores.len();
    let mut id_sorted = scores.id_scores.clone();
    id_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    // Smallest count c with c/m >= level.
    let c = ((level * m as f64).ceil() as usize).clamp(1, m);
    let threshold = id_sorted[c - 1];
    let fpr_at = |t: f64| scores.ood_scores.iter().filter(|&&s| s <= t).count() as f64 / k as f64;
    match mode {
        FprMode::Empirical => fpr_at(threshold),
        FprMode::Interpolated => {
            let tpr_hi = id_sorted.iter().filter(|&&s| s <= threshold).count() as f64 / m as f64;
            if c == 1 || tpr_hi <= level {
                return fpr_at(threshold);
            }
            let t_lo = id_sorted[c - 2];
            let tpr_lo = id_sorted.iter().filter(|&&s| s <= t_lo).count() as f64 / m as f64;
            let fpr_lo = fpr_at(t_lo);
            let fpr_hi = fpr_at(threshold);
            if tpr_hi == tpr_lo {
                return fpr_hi;
            }
            fpr_lo + (fpr_hi - fpr_lo) * (level - tpr_lo) / (tpr_hi - tpr_lo)
        }
    }
}

/// ROC sweep over every distinct score plus +inf, threshold ascending; both
/// rates are non-decreasing along the sweep.
pub fn roc_points(scores: &DetectionScores) -> Vec<RocPoint> {
    let m = scores.id_scores.len() as f64;
    let k = scores.ood_scores.len() as f64;
    let mut thresholds: Vec<f64> = scores
        .id_scores
        .iter()
        .chain(scores.ood_scores.iter())
        .cloned()
        .collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            tpr: scores.id_scores.iter().filter(|&&s| s < t).count() as f64 / m,
            fpr: scores.ood_scores.iter().filter(|&&s| s < t).count() as f64 / k,
        })
        .collect()
}

/// PR sweep over every distinct score, threshold descending (recall
/// ascending); OOD is the positive class, predicted at score >= threshold.
pub fn pr_points(scores: &DetectionScores) -> Vec<PrPoint> {
    let k = scores.ood_scores.len() as f64;
    let mut thresholds: Vec<f64> = scores
        .id_scores
        .iter()
        .chain(scores.ood_scores.iter())
        .cloned()
        .collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let tp = scores.ood_scores.iter().filter(|&&s| s >= t).count() as f64;
            let fp = scores.id_scores.iter().filter(|&&s| s >= t).count() as f64;
            PrPoint {
                threshold: t,
                precision: tp / (tp + fp),
                recall: tp / k,
            }
        })
        .collect()
}

/// Compute the full report for one set of scores.
pub fn report(scores: &DetectionScores) -> MetricsReport {
    MetricsReport {
        method: scores.method.clone(),
        auroc: auroc(scores),
        aupr: aupr(scores),
        fpr95: fpr_at_95_tpr(scores),
        roc_points: roc_points(scores),
        pr_points: pr_points(scores),
    }
}

/// `threshold,tpr,fpr` CSV for the ROC sweep.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.tpr, p.fpr));
    }
    out
}

/// `threshold,precision,recall` CSV for the PR sweep.
pub fn pr_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    out
}

/// Brute-force O(m*k) AUROC used as the oracle in tests; kept in the library
/// so the acceptance suite and the FFI layer can cross-check against it.
pub fn auroc_brute_force(id_scores: &[f64], ood_scores: &[f64]) -> f64 {
    let mut count = 0.0;
    for &a in id_scores {
        for &b in ood_scores {
            if a < b {
                count += 1.0;
            } else if a == b {
                count += 0.5;
            }
        }
    }
    count / (id_scores.len() as f64 * ood_scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn ds(id: &[f64], ood: &[f64]) -> DetectionScores {
        DetectionScores::new(id.to_vec(), ood.to_vec(), "test").unwrap()
    }

    #[test]
    fn auroc_perfect_separation() {
        assert_eq!(auroc(&ds(&[0.1, 0.2], &[0.3, 0.4])), 1.0);
    }

    #[test]
    fn auroc_tie_convention() {
        assert_eq!(auroc(&ds(&[0.5], &[0.5])), 0.5);
    }

    #[test]
    fn auroc_matches_brute_force_on_small_case() {
        let id = [0.3, 0.9, 0.1, 0.5, 0.7];
        let ood = [0.6, 0.2, 0.8, 0.4, 0.9];
        let s = ds(&id, &ood);
        assert_eq!(auroc(&s), auroc_brute_force(&id, &ood));
    }

    #[test]
    fn auroc_swapped_roles_sum_to_one_without_ties() {
        let id = [0.11, 0.42, 0.73];
        let ood = [0.25, 0.58, 0.91, 0.33];
        let fwd = auroc(&ds(&id, &ood));
        let rev = auroc(&ds(&ood, &id));
        assert!((fwd + rev - 1.0).abs() < 1e-15);
    }

    #[test]
    fn aupr_perfect_separation_is_one() {
        assert!((aupr(&ds(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn aupr_constant_scores_is_prevalence() {
        // One threshold step: recall jumps 0 -> 1 at precision k/(m+k).
        let s = ds(&[1.0, 1.0, 1.0], &[1.0]);
        assert!((aupr(&s) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aupr_orientation_flag() {
        // Perfect separation is perfect under either convention.
        let sep = ds(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(aupr_oriented(&sep, AuprPositive::Ood), aupr(&sep));
        assert!((aupr_oriented(&sep, AuprPositive::Id) - 1.0).abs() < 1e-15);
        // Constant scores degrade to the positive class prevalence.
        let flat = ds(&[0.5, 0.5, 0.5], &[0.5]);
        assert!((aupr_oriented(&flat, AuprPositive::Ood) - 0.25).abs() < 1e-15);
        assert!((aupr_oriented(&flat, AuprPositive::Id) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn aupr_hand_enumerated_three_by_three() {
        // id = [1,3,5], ood = [2,4,6]; sweep thresholds 6,5,4,3,2,1:
        //   tau=6: P=1,   R=1/3  -> + (1/3)*1
        //   tau=5: P=1/2, R=1/3  -> + 0
        //   tau=4: P=2/3, R=2/3  -> + (1/3)*(2/3)
        //   tau=3: P=1/2, R=2/3  -> + 0
        //   tau=2: P=3/5, R=1    -> + (1/3)*(3/5)
        //   tau=1: P=1/2, R=1    -> + 0
        // total = 1/3 + 2/9 + 1/5 = 34/45
        let s = ds(&[1.0, 3.0, 5.0], &[2.0, 4.0, 6.0]);
        assert!((aupr(&s) - 34.0 / 45.0).abs() < 1e-15);
        // AUROC of the same fixture: 6 of 9 pairs correctly ordered.
        assert!((auroc(&s) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fpr95_perfect_separation_is_zero() {
        assert_eq!(fpr_at_95_tpr(&ds(&[1.0, 2.0, 3.0], &[4.0, 5.0])), 0.0);
    }

    #[test]
    fn fpr95_constant_scores_is_one() {
        assert_eq!(fpr_at_95_tpr(&ds(&[2.0, 2.0], &[2.0, 2.0])), 1.0);
    }

    #[test]
    fn fpr95_hand_counted_twenty_twenty() {
        // 20 ID at 1..20; threshold index ceil(0.95*20)=19 -> 19th smallest = 19.
        // OOD: 4 values <= 19 (15.5, 16.5, 17.5, 18.5), 16 above -> 4/20.
        let id: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let mut ood = vec![15.5, 16.5, 17.5, 18.5, 19.5];
        ood.extend((21..=35).map(|i| i as f64));
        let s = DetectionScores::new(id, ood, "t").unwrap();
        assert_eq!(fpr_at_95_tpr(&s), 4.0 / 20.0);
    }

    #[test]
    fn fpr95_non_integral_quantile_rounds_up() {
        // m=7: ceil(0.95*7)=7 -> threshold is the max ID score.
        let s = ds(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &[5.5, 8.0, 9.0]);
        assert!((fpr_at_95_tpr(&s) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn interpolated_fpr_lies_between_straddling_points() {
        let id: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ood: Vec<f64> = (1..=10).map(|i| i as f64 + 5.0).collect();
        let s = DetectionScores::new(id, ood, "t").unwrap();
        let emp = fpr_at_tpr(&s, 0.95, FprMode::Empirical);
        let itp = fpr_at_tpr(&s, 0.95, FprMode::Interpolated);
        assert!(itp <= emp);
    }

    #[test]
    fn translation_and_monotone_invariance() {
        let mut rng = Rng::new(42);
        // Scores on a 1/1024 grid so that the affine transforms below are
        // exact in floating point and preserve every tie.
        let id: Vec<f64> = (0..40)
            .map(|_| rng.next_range(1024) as f64 / 1024.0)
            .collect();
        let ood: Vec<f64> = (0..30)
            .map(|_| rng.next_range(1024) as f64 / 1024.0 + 0.25)
            .collect();
        let base = ds(&id, &ood);
        let shift = |v: &[f64], c: f64| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let scale = |v: &[f64]| v.iter().map(|x| 2.0 * x + 0.25).collect::<Vec<_>>();
        let expo = |v: &[f64]| v.iter().map(|x| x.exp()).collect::<Vec<_>>();
        for transformed in [
            ds(&shift(&id, 1.5), &shift(&ood, 1.5)),
            ds(&shift(&id, -3.0), &shift(&ood, -3.0)),
            ds(&scale(&id), &scale(&ood)),
            ds(&expo(&id), &expo(&ood)),
        ] {
            assert_eq!(auroc(&base), auroc(&transformed));
            assert!((aupr(&base) - aupr(&transformed)).abs() < 1e-15);
            assert_eq!(fpr_at_95_tpr(&base), fpr_at_95_tpr(&transformed));
        }
    }

    #[test]
    fn roc_points_are_monotone_in_threshold() {
        let s = ds(&[0.1, 0.4, 0.4, 0.9], &[0.3, 0.7, 0.7]);
        let pts = roc_points(&s);
        for w in pts.windows(2) {
            assert!(w[0].threshold < w[1].threshold);
            assert!(w[0].tpr <= w[1].tpr);
            assert!(w[0].fpr <= w[1].fpr);
        }
        assert_eq!(pts.last().unwrap().tpr, 1.0);
        assert_eq!(pts.last().unwrap().fpr, 1.0);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(DetectionScores::new(vec![], vec![1.0], "t").is_err());
        assert!(DetectionScores::new(vec![1.0], vec![], "t").is_err());
        assert!(DetectionScores::new(vec![f64::NAN], vec![1.0], "t").is_err());
    }

    proptest! {
        #[test]
        fn auroc_equals_brute_force(
            id in prop::collection::vec(-50i32..50, 1..40),
            ood in prop::collection::vec(-50i32..50, 1..40),
        ) {
            // Integer-valued scores provoke plenty of exact ties.
            let id: Vec<f64> = id.into_iter().map(|v| v as f64 / 8.0).collect();
            let ood: Vec<f64> = ood.into_iter().map(|v| v as f64 / 8.0).collect();
            let s = DetectionScores::new(id.clone(), ood.clone(), "p").unwrap();
            prop_assert_eq!(auroc(&s), auroc_brute_force(&id, &ood));
        }

        #[test]
        fn metrics_stay_in_unit_interval(
            id in prop::collection::vec(-1000.0f64..1000.0, 1..30),
            ood in prop::collection::vec(-1000.0f64..1000.0, 1..30),
        ) {
            let s = DetectionScores::new(id, ood, "p").unwrap();
            let r = report(&s);
            prop_assert!((0.0..=1.0).contains(&r.auroc));
            prop_assert!((0.0..=1.0).contains(&r.aupr));
            prop_assert!((0.0..=1.0).contains(&r.fpr95));
        }
    }
}
