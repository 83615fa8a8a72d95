//! Feature-space detectors: Mahalanobis distance with Ledoit-Wolf shrinkage,
//! mean k-nearest-neighbor distance, and the local outlier factor in novelty
//! mode. All operate on a fixed train feature matrix; queries never join the
//! reference set.

use crate::error::{Error, Result};
use crate::numerics::{cholesky, cholesky_solve, Matrix};

/// How the shared covariance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceMode {
    /// Shrink toward the scaled identity with the closed-form intensity.
    #[default]
    LedoitWolf,
    /// Plain empirical (maximum likelihood) covariance.
    Empirical,
}

/// Class-conditional means, a shared covariance factor, the shrinkage
/// intensity actually applied, and per-dimension standardization statistics
/// of the train features.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    class_means: Vec<Vec<f64>>,
    chol: Matrix,
    pub shrinkage_intensity: f64,
    pub standardize_mean: Vec<f64>,
    pub standardize_std: Vec<f64>,
    pub ridge_added: bool,
}

impl FeatureStats {
    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }
}

/// Ledoit-Wolf intensity toward mu*I for centered rows `y` with sample
/// covariance `s`: min(bbar2, d2)/d2 where d2 = ||S - mu I||_F^2 and
/// bbar2 = (1/n^2) sum_t ||y_t y_t' - S||_F^2.
fn ledoit_wolf_intensity(y: &Matrix, s: &Matrix, mu: f64) -> f64 {
    let (n, d) = (y.rows(), y.cols());
    let mut d2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { mu } else { 0.0 };
            let diff = s.get(i, j) - target;
            d2 += diff * diff;
        }
    }
    if d2 <= 0.0 {
        return 0.0;
    }
    let mut bbar2 = 0.0;
    for t in 0..n {
        let row = y.row(t);
        for i in 0..d {
            for j in 0..d {
                let diff = row[i] * row[j] - s.get(i, j);
                bbar2 += diff * diff;
            }
        }
    }
    bbar2 /= (n * n) as f64;
    (bbar2.min(d2)) / d2
}

/// Fit means, shared covariance and standardization statistics on train
/// features. `class_labels`, when given, assigns each row to a class and the
/// covariance pools the within-class scatter; otherwise a single global mean
/// is used. Falls back to a small ridge on the diagonal if the covariance is
/// numerically singular even after shrinkage.
pub fn fit_feature_stats(
    features: &Matrix,
    class_labels: Option<&[usize]>,
    mode: CovarianceMode,
) -> Result<FeatureStats> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(Error::InvalidParameter(
            "feature statistics need at least two rows".into(),
        ));
    }
    if let Some(labels) = class_labels {
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
    }

    let (mean, std) = standardization_stats(features)?;

    // Class means.
    let n_classes = class_labels
        .map(|ls| ls.iter().max().map_or(0, |&m| m + 1))
        .unwrap_or(1);
    let mut class_means = vec![vec![0.0; d]; n_classes];
    let mut class_counts = vec![0usize; n_classes];
    for r in 0..n {
        let c = class_labels.map_or(0, |ls| ls[r]);
        class_counts[c] += 1;
        for (m, v) in class_means[c].iter_mut().zip(features.row(r)) {
            *m += v;
        }
    }
    for (m, &cnt) in class_means.iter_mut().zip(&class_counts) {
        if cnt == 0 {
            return Err(Error::InvalidParameter(
                "every class must have at least one feature row".into(),
            ));
        }
        for v in m.iter_mut() {
            *v /= cnt as f64;
        }
    }

    // Pooled within-class residuals and their covariance.
    let mut centered = Matrix::zeros(n, d);
    for r in 0..n {
        let c = class_labels.map_or(0, |ls| ls[r]);
        for j in 0..d {
            centered.set(r, j, features.get(r, j) - class_means[c][j]);
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let row = centered.row(r);
        for i in 0..d {
            if row[i] != 0.0 {
                for j in 0..d {
                    cov.set(i, j, cov.get(i, j) + row[i] * row[j]);
                }
            }
        }
    }
    for v in cov.data_mut() {
        *v /= n as f64;
    }

    let trace: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    let mu = trace / d as f64;
    let shrinkage = match mode {
        CovarianceMode::LedoitWolf => ledoit_wolf_intensity(&centered, &cov, mu),
        CovarianceMode::Empirical => 0.0,
    };
    if shrinkage > 0.0 {
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { mu } else { 0.0 };
                cov.set(i, j, (1.0 - shrinkage) * cov.get(i, j) + shrinkage * target);
            }
        }
    }

    let (chol, ridge_added) = match cholesky(&cov) {
        Ok(l) => (l, false),
        Err(_) => {
            // Singular even after the configured estimator: ridge the
            // diagonal and warn.
            let ridge = 1e-6 * trace.max(f64::MIN_POSITIVE) / d as f64;
            eprintln!("warning: covariance singular, adding ridge {ridge:e} to the diagonal");
            let mut fixed = cov.clone();
            for i in 0..d {
                fixed.set(i, i, fixed.get(i, i) + ridge);
            }
            (cholesky(&fixed)?, true)
        }
    };
    Ok(FeatureStats {
        class_means,
        chol,
        shrinkage_intensity: shrinkage,
        standardize_mean: mean,
        standardize_std: std,
        ridge_added,
    })
}

/// Mahalanobis OOD score: minimum distance over class means under the shared
/// covariance. Zero at a class mean.
pub fn score_mahalanobis(stats: &FeatureStats, batch: &Matrix) -> Result<Vec<f64>> {
    let d = stats.chol.rows();
    if batch.cols() != d {
        return Err(Error::Shape(format!(
            "batch has {} columns, statistics were fit on {d}",
            batch.cols()
        )));
    }
    let mut out = Vec::with_capacity(batch.rows());
    for r in 0..batch.rows() {
        let x = batch.row(r);
        let mut best = f64::INFINITY;
        for mean in &stats.class_means {
            let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
            let solved = cholesky_solve(&stats.chol, &diff)?;
            let sq: f64 = diff.iter().zip(&solved).map(|(a, b)| a * b).sum();
            best = best.min(sq.max(0.0).sqrt());
        }
        out.push(best);
    }
    Ok(out)
}

/// Per-dimension mean and population std of the train features; constant
/// dimensions get std 1 so standardization stays a no-op there.
pub fn standardization_stats(features: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = (features.rows(), features.cols());
    if n == 0 {
        return Err(Error::InvalidParameter(
            "standardization needs at least one row".into(),
        ));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in 0..n {
        for (s, (v, m)) in var.iter_mut().zip(features.row(r).iter().zip(&mean)) {
            let c = v - m;
            *s += c * c;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s < 1e-12 {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok((mean, std))
}

/// (x - mean) / std per dimension with the fitted train statistics.
pub fn standardize(features: &Matrix, mean: &[f64], std: &[f64]) -> Result<Matrix> {
    if features.cols() != mean.len() || mean.len() != std.len() {
        return Err(Error::Shape(
            "standardization statistics do not match".into(),
        ));
    }
    let mut out = features.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distances from `query` to every train row, sorted ascending with index
/// order breaking ties.
fn sorted_distances(train: &Matrix, query: &[f64]) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = (0..train.rows())
        .map(|i| (euclidean(train.row(i), query), i))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
    d
}

/// Mean Euclidean distance to the k nearest train rows. Larger = more OOD.
pub fn score_knn(train: &Matrix, batch: &Matrix, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > train.rows() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} with {} train rows",
            train.rows()
        )));
    }
    if batch.cols() != train.cols() {
        return Err(Error::Shape("query dimension does not match train".into()));
    }
    Ok((0..batch.rows())
        .map(|r| {
            let d = sorted_distances(train, batch.row(r));
            d[..k].iter().map(|(dist, _)| dist).sum::<f64>() / k as f64
        })
        .collect())
}

/// Local outlier factor in novelty mode: reference densities come from the
/// train set only. Scores near 1 mark inliers; values well above 1 mark
/// samples sparser than their neighborhood. sklearn's 1e-10 guard keeps
/// densities finite on duplicate points.
pub fn score_lof(train: &Matrix, batch: &Matrix, n_neighbors: usize) -> Result<Vec<f64>> {
    let n = train.rows();
    if n_neighbors == 0 || n_neighbors >= n {
        return Err(Error::InvalidParameter(format!(
            "n_neighbors = {n_neighbors} needs 1..{n} train rows"
        )));
    }
    if batch.cols() != train.cols() {
        return Err(Error::Shape("query dimension does not match train".into()));
    }
    let k = n_neighbors;

    // Train-side neighborhoods, self excluded.
    let mut k_dist = vec![0.0; n];
    let mut neighbors: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut d = sorted_distances(train, train.row(i));
        d.retain(|&(_, j)| j != i);
        d.truncate(k);
        k_dist[i] = d[k - 1].0;
        neighbors.push(d.into_iter().map(|(dist, j)| (j, dist)).collect());
    }
    // Local reachability density of each train point.
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let sum: f64 = neighbors[i]
                .iter()
                .map(|&(j, dist)| dist.max(k_dist[j]))
                .sum();
            1.0 / (sum / k as f64 + 1e-10)
        })
        .collect();

    Ok((0..batch.rows())
        .map(|r| {
            let d = sorted_distances(train, batch.row(r));
            let nn = &d[..k];
            let reach_sum: f64 = nn.iter().map(|&(dist, j)| dist.max(k_dist[j])).sum();
            let lrd_q = 1.0 / (reach_sum / k as f64 + 1e-10);
            let neighbor_lrd: f64 = nn.iter().map(|&(_, j)| lrd[j]).sum::<f64>() / k as f64;
            neighbor_lrd / lrd_q
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn mahalanobis_zero_at_class_mean() {
        let feats = Matrix::from_rows(vec![
            vec![1.0, 2.0],
            vec![3.0, 0.0],
            vec![2.0, 4.0],
            vec![0.0, 2.0],
        ])
        .unwrap();
        let stats = fit_feature_stats(&feats, None, CovarianceMode::Empirical).unwrap();
        let mean = stats.class_means()[0].clone();
        let q = Matrix::from_rows(vec![mean]).unwrap();
        let s = score_mahalanobis(&stats, &q).unwrap();
        assert!(s[0].abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_identity_covariance_is_euclidean() {
        // Samples engineered so the global mean is 0 and the covariance is
        // exactly I: orthonormal pairs mirrored through the origin.
        let feats = Matrix::from_rows(vec![
            vec![2f64.sqrt(), 0.0],
            vec![-(2f64.sqrt()), 0.0],
            vec![0.0, 2f64.sqrt()],
            vec![0.0, -(2f64.sqrt())],
        ])
        .unwrap();
        let stats = fit_feature_stats(&feats, None, CovarianceMode::Empirical).unwrap();
        let q = Matrix::from_rows(vec![vec![3.0, 4.0]]).unwrap();
        let s = score_mahalanobis(&stats, &q).unwrap();
        assert!((s[0] - 5.0).abs() < 1e-10, "got {}", s[0]);
    }

    #[test]
    fn mahalanobis_diagonal_covariance_hand_inverted() {
        // Mirrored samples (+-2, 0) and (0, +-sqrt(2)) give mean 0 and
        // covariance diag(8/4, 4/4) = diag(2, 1) exactly.
        let feats = Matrix::from_rows(vec![
            vec![2.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 2f64.sqrt()],
            vec![0.0, -(2f64.sqrt())],
        ])
        .unwrap();
        let stats = fit_feature_stats(&feats, None, CovarianceMode::Empirical).unwrap();
        let q = Matrix::from_rows(vec![vec![2.0, 1.0]]).unwrap();
        let s = score_mahalanobis(&stats, &q).unwrap();
        // d^2 = 4/2 + 1/1 = 3.
        assert!((s[0] - 3f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn mahalanobis_is_affine_invariant_with_exact_covariance() {
        let mut rng = Rng::new(11);
        let n = 60;
        let feats =
            Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.standard_normal()).collect()).unwrap();
        let queries =
            Matrix::from_vec(5, 3, (0..15).map(|_| 2.0 * rng.standard_normal()).collect()).unwrap();
        // Invertible linear map A.
        let a = [[1.5, 0.3, -0.2], [0.0, 0.8, 0.4], [-0.5, 0.2, 1.1]];
        let apply = |m: &Matrix| {
            let mut out = Matrix::zeros(m.rows(), 3);
            for r in 0..m.rows() {
                for i in 0..3 {
                    let mut acc = 0.0;
                    for j in 0..3 {
                        acc += a[i][j] * m.get(r, j);
                    }
                    out.set(r, i, acc);
                }
            }
            out
        };
        let stats = fit_feature_stats(&feats, None, CovarianceMode::Empirical).unwrap();
        let stats_t = fit_feature_stats(&apply(&feats), None, CovarianceMode::Empirical).unwrap();
        let s = score_mahalanobis(&stats, &queries).unwrap();
        let st = score_mahalanobis(&stats_t, &apply(&queries)).unwrap();
        for (x, y) in s.iter().zip(&st) {
            assert!((x - y).abs() < 1e-8, "affine invariance broken: {x} vs {y}");
        }
    }

    #[test]
    fn ledoit_wolf_intensity_is_in_unit_interval() {
        let mut rng = Rng::new(3);
        for n in [5, 20, 100] {
            let feats = Matrix::from_vec(n, 4, (0..n * 4).map(|_| rng.standard_normal()).collect())
                .unwrap();
            let stats = fit_feature_stats(&feats, None, CovarianceMode::LedoitWolf).unwrap();
            assert!((0.0..=1.0).contains(&stats.shrinkage_intensity));
        }
    }

    #[test]
    fn ledoit_wolf_shrinks_harder_with_fewer_samples() {
        let mut rng = Rng::new(5);
        let gen = |n: usize, rng: &mut Rng| {
            Matrix::from_vec(n, 6, (0..n * 6).map(|_| rng.standard_normal()).collect()).unwrap()
        };
        let small = fit_feature_stats(&gen(8, &mut rng), None, CovarianceMode::LedoitWolf).unwrap();
        let large =
            fit_feature_stats(&gen(800, &mut rng), None, CovarianceMode::LedoitWolf).unwrap();
        assert!(small.shrinkage_intensity > large.shrinkage_intensity);
    }

    #[test]
    fn degenerate_covariance_falls_back_to_ridge() {
        // Two distinct duplicated rows: rank-deficient within-class scatter.
        let feats = Matrix::from_rows(vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 0.0],
            vec![2.0, 2.0, 0.0],
        ])
        .unwrap();
        let stats = fit_feature_stats(&feats, None, CovarianceMode::Empirical).unwrap();
        assert!(stats.ridge_added);
        let q = Matrix::from_rows(vec![vec![1.5, 1.5, 0.0]]).unwrap();
        assert!(score_mahalanobis(&stats, &q).unwrap()[0].is_finite());
    }

    #[test]
    fn knn_zero_at_a_train_point() {
        let train = Matrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let q = Matrix::from_rows(vec![vec![1.0, 1.0]]).unwrap();
        assert_eq!(score_knn(&train, &q, 1).unwrap(), vec![0.0]);
    }

    #[test]
    fn knn_hand_enumerated_one_dimensional() {
        let train = Matrix::from_rows(vec![vec![0.0], vec![10.0]]).unwrap();
        let q = Matrix::from_rows(vec![vec![1.0]]).unwrap();
        // Distances 1 and 9: mean 5.
        assert_eq!(score_knn(&train, &q, 2).unwrap(), vec![5.0]);
    }

    #[test]
    fn knn_duplicates_and_permutations_do_not_change_scores() {
        let train = Matrix::from_rows(vec![vec![0.0], vec![3.0], vec![3.0], vec![7.0]]).unwrap();
        let perm = Matrix::from_rows(vec![vec![3.0], vec![7.0], vec![0.0], vec![3.0]]).unwrap();
        let q = Matrix::from_rows(vec![vec![2.0], vec![6.5]]).unwrap();
        assert_eq!(
            score_knn(&train, &q, 2).unwrap(),
            score_knn(&perm, &q, 2).unwrap()
        );
    }

    #[test]
    fn knn_rejects_bad_k() {
        let train = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let q = Matrix::from_rows(vec![vec![0.5]]).unwrap();
        assert!(score_knn(&train, &q, 3).is_err());
        assert!(score_knn(&train, &q, 0).is_err());
    }

    /// Uniform grid cluster for LOF sanity checks.
    fn grid_train() -> Matrix {
        let mut rows = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                rows.push(vec![i as f64, j as f64]);
            }
        }
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn lof_is_near_one_inside_a_uniform_cluster() {
        let train = grid_train();
        let q = Matrix::from_rows(vec![vec![3.5, 3.5]]).unwrap();
        let s = score_lof(&train, &q, 8).unwrap()[0];
        assert!((0.8..1.25).contains(&s), "interior LOF {s}");
    }

    #[test]
    fn lof_is_large_far_from_the_cluster() {
        let train = grid_train();
        let q = Matrix::from_rows(vec![vec![400.0, 400.0]]).unwrap();
        let s = score_lof(&train, &q, 8).unwrap()[0];
        assert!(s > 2.0, "far-point LOF {s}");
    }

    #[test]
    fn lof_identical_queries_identical_scores_and_permutation_invariance() {
        // Jittered points: tie-free distances, so reordering the train rows
        // only re-associates float sums. (On exact ties the index-order
        // tie-break makes the result order-dependent by design.)
        let mut rng = Rng::new(99);
        let train = Matrix::from_rows(
            (0..40)
                .map(|_| vec![rng.standard_normal(), rng.standard_normal()])
                .collect(),
        )
        .unwrap();
        let q = Matrix::from_rows(vec![vec![0.3, -0.4], vec![0.3, -0.4]]).unwrap();
        let s = score_lof(&train, &q, 5).unwrap();
        assert_eq!(s[0], s[1]);
        let rev =
            Matrix::from_rows((0..40).rev().map(|i| train.row(i).to_vec()).collect()).unwrap();
        let sr = score_lof(&rev, &q, 5).unwrap();
        assert!((s[0] - sr[0]).abs() < 1e-9 * s[0].abs().max(1.0));
    }

    #[test]
    fn lof_rejects_bad_neighbor_counts() {
        let train = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let q = Matrix::from_rows(vec![vec![0.5]]).unwrap();
        assert!(score_lof(&train, &q, 2).is_err());
        assert!(score_lof(&train, &q, 0).is_err());
    }

    #[test]
    fn standardize_uses_train_statistics() {
        let feats = Matrix::from_rows(vec![vec![0.0, 10.0], vec![2.0, 14.0]]).unwrap();
        let stats = fit_feature_stats(&feats, None, CovarianceMode::Empirical).unwrap();
        assert_eq!(stats.standardize_mean, vec![1.0, 12.0]);
        assert_eq!(stats.standardize_std, vec![1.0, 2.0]);
        let z = standardize(&feats, &stats.standardize_mean, &stats.standardize_std).unwrap();
        assert_eq!(z.row(0), &[-1.0, -1.0]);
        assert_eq!(z.row(1), &[1.0, 1.0]);
    }
}
