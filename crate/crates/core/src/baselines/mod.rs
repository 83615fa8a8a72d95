//! The six comparison detectors and the supervised classifier head they
//! share. All scorers return one finite score per input row with the same
//! orientation as the ranking detector: larger = more OOD-affine.
//!
//! MSP, ODIN and Energy read the classifier's logits; Mahalanobis, KNN and
//! LOF operate in its penultimate feature space (post-activation input of
//! the final linear layer).

mod classifier;
mod confidence;
mod distance;

pub use classifier::{train_classifier, ClassifierConfig, ClassifierHead, TaskMode};
pub use confidence::{score_energy, score_msp, score_odin, OdinParams};
pub use distance::{
    fit_feature_stats, score_knn, score_lof, score_mahalanobis, standardization_stats, standardize,
    CovarianceMode, FeatureStats,
};

/// `id,method,score` CSV for a scored batch.
pub fn scores_csv(ids: &[String], method: &str, scores: &[f64]) -> String {
    let mut out = String::from("id,method,score\n");
    for (id, s) in ids.iter().zip(scores) {
        out.push_str(&format!("{id},{method},{s}\n"));
    }
    out
}
