//! Synthetic two-Gaussian worlds with analytically known posteriors, the
//! conditional two-point pairwise risk and its closed-form minimizer, the
//! canonical Bayes-consistent scorer, and a closed-form AUROC oracle for the
//! 1-D shifted world. These are the desk-scale substrates for verifying that
//! the pairwise objective recovers the optimal ranking.

use serde::{Deserialize, Serialize};

use crate::data::{DistTag, EmbeddingRecord, EmbeddingSet, SplitManifest, SplitTag};
use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, cholesky_logdet, cholesky_solve, log1pexp, normal_cdf, sigmoid, Matrix, Rng,
};

/// Two-component Gaussian mixture: ID versus OOD with a prior on ID.
#[derive(Debug, Clone)]
pub struct GaussianWorld {
    dim: usize,
    id_mean: Vec<f64>,
    ood_mean: Vec<f64>,
    id_chol: Matrix,
    ood_chol: Matrix,
    id_logdet: f64,
    ood_logdet: f64,
    prior_id: f64,
}

/// Serializable world description; covariances as nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianWorldSpec {
    pub dim: usize,
    pub id_mean: Vec<f64>,
    pub id_cov: Vec<Vec<f64>>,
    pub ood_mean: Vec<f64>,
    pub ood_cov: Vec<Vec<f64>>,
    pub prior_id: f64,
}

impl GaussianWorldSpec {
    pub fn build(&self) -> Result<GaussianWorld> {
        if self.dim == 0 {
            return Err(Error::Schema("world dimension must be positive".into()));
        }
        GaussianWorld::new(
            self.id_mean.clone(),
            Matrix::from_rows(self.id_cov.clone())?,
            self.ood_mean.clone(),
            Matrix::from_rows(self.ood_cov.clone())?,
            self.prior_id,
        )
    }

    /// Isotropic unit-covariance world from the two means.
    pub fn isotropic(id_mean: Vec<f64>, ood_mean: Vec<f64>, prior_id: f64) -> Self {
        let dim = id_mean.len();
        let eye: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        GaussianWorldSpec {
            dim,
            id_mean,
            id_cov: eye.clone(),
            ood_mean,
            ood_cov: eye,
            prior_id,
        }
    }
}

impl GaussianWorld {
    pub fn new(
        id_mean: Vec<f64>,
        id_cov: Matrix,
        ood_mean: Vec<f64>,
        ood_cov: Matrix,
        prior_id: f64,
    ) -> Result<Self> {
        let dim = id_mean.len();
        if dim == 0 {
            return Err(Error::Schema("world dimension must be positive".into()));
        }
        if ood_mean.len() != dim || id_cov.rows() != dim || ood_cov.rows() != dim {
            return Err(Error::Shape("world component shapes disagree".into()));
        }
        if !(prior_id > 0.0 && prior_id < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prior must lie strictly in (0,1), got {prior_id}"
            )));
        }
        let id_chol = cholesky(&id_cov)?;
        let ood_chol = cholesky(&ood_cov)?;
        let id_logdet = cholesky_logdet(&id_chol);
        let ood_logdet = cholesky_logdet(&ood_chol);
        Ok(GaussianWorld {
            dim,
            id_mean,
            ood_mean,
            id_chol,
            ood_chol,
            id_logdet,
            ood_logdet,
            prior_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, dist: DistTag, x: &[f64]) -> Result<f64> {
        let (mean, chol, logdet) = match dist {
            DistTag::Id => (&self.id_mean, &self.id_chol, self.id_logdet),
            DistTag::Ood => (&self.ood_mean, &self.ood_chol, self.ood_logdet),
        };
        let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        let solved = cholesky_solve(chol, &diff)?;
        let quad: f64 = diff.iter().zip(&solved).map(|(a, b)| a * b).sum();
        Ok(-0.5 * (quad + logdet + self.dim as f64 * (2.0 * std::f64::consts::PI).ln()))
    }

    /// Log posterior odds ln(prior_id p_id(x) / ((1-prior_id) p_ood(x))).
    pub fn log_odds(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "point has {} entries, world dim is {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.prior_id.ln() + self.log_density(DistTag::Id, x)?
            - (1.0 - self.prior_id).ln()
            - self.log_density(DistTag::Ood, x)?)
    }

    /// True posterior Pr(ID | x) by Bayes' rule over the two densities.
    pub fn posterior(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.log_odds(x)?))
    }

    /// Canonical Bayes-consistent ID-preference score (1/beta) logit(eta),
    /// evaluated through the log-odds for stability. Errors if the score is
    /// not finite (a posterior pinned to 0 or 1).
    pub fn canonical_scorer(&self, x: &[f64], beta: f64) -> Result<f64> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let t = self.log_odds(x)? / beta;
        if !t.is_finite() {
            return Err(Error::Numeric("canonical score is infinite".into()));
        }
        Ok(t)
    }

    /// One draw from the chosen component: mean + L z.
    pub fn sample(&self, dist: DistTag, rng: &mut Rng) -> Vec<f64> {
        let (mean, chol) = match dist {
            DistTag::Id => (&self.id_mean, &self.id_chol),
            DistTag::Ood => (&self.ood_mean, &self.ood_chol),
        };
        let z: Vec<f64> = (0..self.dim).map(|_| rng.standard_normal()).collect();
        let mut x = mean.clone();
        for i in 0..self.dim {
            for j in 0..=i {
                x[i] += chol.get(i, j) * z[j];
            }
        }
        x
    }
}

/// Canonical score from a posterior value directly: (1/beta) logit(eta).
/// Errors at the boundary where the score is infinite.
pub fn canonical_score_from_posterior(eta: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Numeric(format!(
            "posterior {eta} is at the boundary; canonical score is infinite"
        )));
    }
    Ok((eta / (1.0 - eta)).ln() / beta)
}

/// Generate a tagged dataset from the world with the manifest's cell counts
/// and seed. With `with_labels`, each record carries a continuous label
/// x . w for a unit direction w drawn first from the same seed (downstream
/// consumers binarize it).
pub fn generate_dataset(
    world: &GaussianWorld,
    counts: &SplitManifest,
    with_labels: bool,
) -> Result<EmbeddingSet> {
    let mut rng = Rng::new(counts.seed);
    let label_dir: Option<Vec<f64>> = if with_labels {
        let raw: Vec<f64> = (0..world.dim()).map(|_| rng.standard_normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        Some(raw.into_iter().map(|v| v / norm).collect())
    } else {
        None
    };
    let mut records = Vec::new();
    for split in SplitTag::ALL {
        for dist in [DistTag::Id, DistTag::Ood] {
            let n = counts.count(dist, split);
            for i in 0..n {
                let x = world.sample(dist, &mut rng);
                let label = label_dir
                    .as_ref()
                    .map(|w| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
                records.push(EmbeddingRecord {
                    id: format!(
                        "{}-{}-{:05}",
                        split.as_str(),
                        dist.as_str().to_ascii_lowercase(),
                        i
                    ),
                    embedding: x,
                    dist,
                    split,
                    label,
                });
            }
        }
    }
    EmbeddingSet::new(world.dim(), records)
}

// ---------------------------------------------------------------------------
// Two-point conditional risk
// ---------------------------------------------------------------------------

/// Conditional pairwise risk problem for two samples with posteriors eta_s
/// and eta_sp: alpha = eta_s (1 - eta_sp) weighs the (S in-dist, S' out)
/// pairing, alpha_prime the reverse. The degenerate case alpha = alpha' = 0
/// is excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointProblem {
    pub eta_s: f64,
    pub eta_sp: f64,
    pub beta: f64,
}

impl TwoPointProblem {
    pub fn new(eta_s: f64, eta_sp: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        for (name, v) in [("eta_s", eta_s), ("eta_sp", eta_sp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} outside [0,1]"
                )));
            }
        }
        let p = TwoPointProblem {
            eta_s,
            eta_sp,
            beta,
        };
        let (a, ap) = p.alphas();
        if a == 0.0 && ap == 0.0 {
            return Err(Error::InvalidParameter(
                "degenerate problem: both pairing weights vanish".into(),
            ));
        }
        Ok(p)
    }

    pub fn alphas(&self) -> (f64, f64) {
        (
            self.eta_s * (1.0 - self.eta_sp),
            self.eta_sp * (1.0 - self.eta_s),
        )
    }
}

/// r(z) = alpha log(1+e^{-beta z}) + alpha' log(1+e^{beta z}): strictly
/// convex in z whenever either weight is positive.
pub fn two_point_risk(p: &TwoPointProblem, z: f64) -> f64 {
    let (alpha, alpha_prime) = p.alphas();
    alpha * log1pexp(-p.beta * z) + alpha_prime * log1pexp(p.beta * z)
}

/// Closed-form minimizer z* = (1/beta) ln [eta_s (1-eta_sp) / (eta_sp (1-eta_s))];
/// its sign matches sign(eta_s - eta_sp). Requires both posteriors strictly
/// inside (0,1), otherwise the optimum runs off to infinity.
pub fn two_point_optimum(p: &TwoPointProblem) -> Result<f64> {
    for (name, v) in [("eta_s", p.eta_s), ("eta_sp", p.eta_sp)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Numeric(format!(
                "{name} = {v} is at the boundary; the optimum is infinite"
            )));
        }
    }
    let (alpha, alpha_prime) = p.alphas();
    Ok((alpha / alpha_prime).ln() / p.beta)
}

/// Golden-section search for the minimum of a unimodal function on [a, b].
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Closed-form AUROC of the identity scorer on the 1-D world N(0,1) vs
/// N(mu,1): Pr(X < Y) = Phi(mu / sqrt(2)).
pub fn bayes_auroc_1d(mu: f64) -> f64 {
    normal_cdf(mu / 2f64.sqrt())
}
