//! Batch command-line front end: dataset generation, detector training,
//! baseline scoring, metric computation, grid ablations, and gradient-weight
//! summaries. Every command writes a self-describing run directory whose
//! `config.json` (command, resolved parameters, seed) suffices to reproduce
//! the run byte-for-byte; payloads carry no timestamps.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_feature_stats, score_energy, score_knn, score_lof, score_mahalanobis, score_msp,
    score_odin, scores_csv, standardization_stats, standardize, train_classifier, ClassifierConfig,
    ClassifierHead, CovarianceMode, OdinParams, TaskMode,
};
use crate::data::{
    load_auto, median, save_binary, save_csv, DistTag, EmbeddingRecord, EmbeddingSet,
    SplitManifest, SplitTag,
};
use crate::error::{Error, Result};
use crate::head::{load_checkpoint, save_checkpoint, CheckpointMeta, HeadConfig, ScoringHead};
use crate::metrics::{pr_csv, report, roc_csv, DetectionScores, MetricsReport};
use crate::pairloss::hard_pair_weight;
use crate::synthetic::{generate_dataset, GaussianWorldSpec};
use crate::trainer::{dynamics_csv, train, TrainConfig};

/// Copy of the resolved run parameters written into every output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub data_path: Option<String>,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_run_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_text(
        dir,
        "config.json",
        &format!("{}\n", serde_json::to_string_pretty(cfg)?),
    )
}

fn write_report(dir: &Path, suffix: &str, rep: &MetricsReport) -> Result<()> {
    let (mfile, rfile, pfile) = if suffix.is_empty() {
        (
            "metrics.json".to_string(),
            "roc.csv".to_string(),
            "pr.csv".to_string(),
        )
    } else {
        (
            format!("metrics_{suffix}.json"),
            format!("roc_{suffix}.csv"),
            format!("pr_{suffix}.csv"),
        )
    };
    write_text(
        dir,
        &mfile,
        &format!("{}\n", serde_json::to_string_pretty(rep)?),
    )?;
    write_text(dir, &rfile, &roc_csv(&rep.roc_points))?;
    write_text(dir, &pfile, &pr_csv(&rep.pr_points))?;
    Ok(())
}

fn split_scores(set: &EmbeddingSet, indices: &[usize], scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut id = Vec::new();
    let mut ood = Vec::new();
    for (&i, &s) in indices.iter().zip(scores) {
        match set.records()[i].dist {
            DistTag::Id => id.push(s),
            DistTag::Ood => ood.push(s),
        }
    }
    (id, ood)
}

fn test_indices(set: &EmbeddingSet) -> Vec<usize> {
    let mut idx = set.cell_indices(DistTag::Id, SplitTag::Test);
    idx.extend(set.cell_indices(DistTag::Ood, SplitTag::Test));
    idx
}

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSynthConfig {
    pub world: GaussianWorldSpec,
    pub train_id: usize,
    pub train_ood: usize,
    pub val_id: usize,
    pub val_ood: usize,
    pub test_id: usize,
    pub test_ood: usize,
    pub seed: u64,
    /// Attach a continuous linear label to every record (binarized by
    /// consumers that need classes).
    #[serde(default = "default_true")]
    pub with_labels: bool,
}

/// Generate a tagged synthetic dataset and write it in both formats plus the
/// split manifest.
pub fn cmd_gen_synth(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(config_path)?;
    let mut cfg: GenSynthConfig = serde_json::from_str(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let world = cfg.world.build()?;
    let manifest = SplitManifest {
        train_id: cfg.train_id,
        train_ood: cfg.train_ood,
        val_id: cfg.val_id,
        val_ood: cfg.val_ood,
        test_id: cfg.test_id,
        test_ood: cfg.test_ood,
        seed: cfg.seed,
        source_files: vec![],
    };
    let set = generate_dataset(&world, &manifest, cfg.with_labels)?;
    fs::create_dir_all(out_dir)?;
    save_binary(&set, out_dir.join("data.mper"))?;
    save_csv(&set, out_dir.join("data.csv"))?;
    write_text(
        out_dir,
        "manifest.json",
        &format!("{}\n", serde_json::to_string_pretty(&manifest)?),
    )?;
    write_run_config(
        out_dir,
        &RunConfig {
            command: "gen-synth".into(),
            data_path: None,
            seed: Some(cfg.seed),
            params: serde_json::to_value(&cfg)?,
        },
    )
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Training parameters as read from a JSON file; every field is optional and
/// falls back to the published defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    /// Hidden widths; the head becomes [dim, hidden..., 1].
    pub hidden_dims: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub clip_norm: Option<f64>,
    pub scheduler_step: Option<usize>,
    pub scheduler_gamma: Option<f64>,
    pub seed: Option<u64>,
    pub select_best_on_val: Option<bool>,
    pub dynamics_epsilon: Option<f64>,
}

impl TrainFileConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self, data_dim: usize) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.beta {
            cfg.loss.beta = v;
        }
        if let Some(v) = self.lambda {
            cfg.loss.lambda = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.clip_norm {
            cfg.clip_norm = v;
        }
        if let Some(v) = self.scheduler_step {
            cfg.scheduler_step = v;
        }
        if let Some(v) = self.scheduler_gamma {
            cfg.scheduler_gamma = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.select_best_on_val {
            cfg.select_best_on_val = v;
        }
        if let Some(v) = self.dynamics_epsilon {
            cfg.dynamics_epsilon = v;
        }
        let mut head = HeadConfig::scoring(data_dim);
        if let Some(h) = &self.hidden_dims {
            let mut dims = vec![data_dim];
            dims.extend_from_slice(h);
            dims.push(1);
            head.layer_dims = dims;
        }
        if let Some(d) = self.dropout {
            head.dropout_rate = d;
        }
        cfg.head = Some(head);
        cfg
    }
}

fn read_train_config(
    config_path: Option<&Path>,
    seed: Option<u64>,
    dim: usize,
) -> Result<TrainConfig> {
    let file_cfg: TrainFileConfig = match config_path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => TrainFileConfig::default(),
    };
    let mut cfg = file_cfg.resolve(dim);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Train the ranking detector, evaluate it on the test split, and write the
/// checkpoints, dynamics CSV and metrics report.
pub fn cmd_train(
    data_path: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let set = load_auto(data_path)?;
    let cfg = read_train_config(config_path, seed, set.dim())?;
    let outcome = train(&set, &cfg);
    fs::create_dir_all(out_dir)?;
    let result = match outcome {
        Ok(r) => r,
        Err(Error::NonFiniteLoss { epoch, last_good }) => {
            let meta = CheckpointMeta {
                epoch,
                lr: cfg.lr,
                seed: cfg.seed,
            };
            save_checkpoint(
                last_good.mlp(),
                &meta,
                out_dir.join("checkpoint_lastgood.mpck"),
            )?;
            return Err(Error::NonFiniteLoss { epoch, last_good });
        }
        Err(e) => return Err(e),
    };

    let selected_epoch = result.best_epoch.unwrap_or(cfg.epochs.saturating_sub(1));
    save_checkpoint(
        result.head.mlp(),
        &CheckpointMeta {
            epoch: selected_epoch,
            lr: cfg.lr,
            seed: cfg.seed,
        },
        out_dir.join("checkpoint.mpck"),
    )?;
    save_checkpoint(
        result.final_head.mlp(),
        &CheckpointMeta {
            epoch: cfg.epochs.saturating_sub(1),
            lr: cfg.lr,
            seed: cfg.seed,
        },
        out_dir.join("checkpoint_final.mpck"),
    )?;
    write_text(out_dir, "dynamics.csv", &dynamics_csv(&result.dynamics))?;

    set.require_both_tags(SplitTag::Test)?;
    let test_idx = test_indices(&set);
    let scores = result.head.score(&set.gather(&test_idx))?;
    let ids: Vec<String> = test_idx
        .iter()
        .map(|&i| set.records()[i].id.clone())
        .collect();
    write_text(
        out_dir,
        "scores.csv",
        &scores_csv(&ids, "mole-pair", &scores),
    )?;
    let (id_s, ood_s) = split_scores(&set, &test_idx, &scores);
    let rep = report(&DetectionScores::new(id_s, ood_s, "mole-pair")?);
    write_report(out_dir, "", &rep)?;
    write_run_config(
        out_dir,
        &RunConfig {
            command: "train".into(),
            data_path: Some(data_path.display().to_string()),
            seed: Some(cfg.seed),
            params: serde_json::to_value(&cfg)?,
        },
    )
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Msp,
    Odin,
    Energy,
    Mahalanobis,
    Knn,
    Lof,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 6] = [
        BaselineMethod::Msp,
        BaselineMethod::Odin,
        BaselineMethod::Energy,
        BaselineMethod::Mahalanobis,
        BaselineMethod::Knn,
        BaselineMethod::Lof,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Msp => "msp",
            BaselineMethod::Odin => "odin",
            BaselineMethod::Energy => "energy",
            BaselineMethod::Mahalanobis => "mahalanobis",
            BaselineMethod::Knn => "knn",
            BaselineMethod::Lof => "lof",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
                Error::Usage(format!(
                    "unknown method '{s}'; valid methods: {}",
                    valid.join(", ")
                ))
            })
    }

    fn needs_classifier(self) -> bool {
        matches!(
            self,
            BaselineMethod::Msp
                | BaselineMethod::Odin
                | BaselineMethod::Energy
                | BaselineMethod::Mahalanobis
        )
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineFileConfig {
    pub k: Option<usize>,
    pub n_neighbors: Option<usize>,
    pub odin_epsilon: Option<f64>,
    pub odin_temperature: Option<f64>,
    /// `binary`, `multiclass:<C>` or `multitask:<T>`.
    pub task: Option<String>,
    pub seed: Option<u64>,
    pub classifier_hidden_dims: Option<Vec<usize>>,
    pub classifier_lr: Option<f64>,
    pub classifier_weight_decay: Option<f64>,
    pub classifier_epochs: Option<usize>,
    pub classifier_patience: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineParams {
    pub method: String,
    pub k: usize,
    pub n_neighbors: usize,
    pub odin_epsilon: f64,
    pub odin_temperature: f64,
    pub task: String,
    pub labels_binarized: bool,
    pub classifier: ClassifierConfig,
}

fn parse_task(s: &str) -> Result<TaskMode> {
    if s == "binary" {
        return Ok(TaskMode::BinarySingleLogit);
    }
    if let Some(c) = s.strip_prefix("multiclass:") {
        let classes: usize = c
            .parse()
            .map_err(|_| Error::Usage(format!("bad class count in task '{s}'")))?;
        if classes < 2 {
            return Err(Error::Usage("multiclass needs at least 2 classes".into()));
        }
        return Ok(TaskMode::Multiclass { classes });
    }
    if let Some(t) = s.strip_prefix("multitask:") {
        let tasks: usize = t
            .parse()
            .map_err(|_| Error::Usage(format!("bad task count in task '{s}'")))?;
        if tasks == 0 {
            return Err(Error::Usage("multitask needs at least 1 task".into()));
        }
        return Ok(TaskMode::Multitask { tasks });
    }
    Err(Error::Usage(format!(
        "unknown task '{s}'; expected binary, multiclass:<C> or multitask:<T>"
    )))
}

/// Binarize continuous labels by the median of the labeled ID train values.
/// Already-binary labels pass through untouched.
fn binarize_if_continuous(set: &EmbeddingSet) -> Result<(EmbeddingSet, bool)> {
    let labeled: Vec<f64> = set.records().iter().filter_map(|r| r.label).collect();
    if labeled.iter().all(|&l| l == 0.0 || l == 1.0) {
        return Ok((set.clone(), false));
    }
    let train_id_labels: Vec<f64> = set
        .cell_indices(DistTag::Id, SplitTag::Train)
        .into_iter()
        .filter_map(|i| set.records()[i].label)
        .collect();
    if train_id_labels.is_empty() {
        return Err(Error::Schema(
            "continuous labels present but no labeled ID train records to take the median from"
                .into(),
        ));
    }
    let med = median(&train_id_labels)?;
    let records: Vec<EmbeddingRecord> = set
        .records()
        .iter()
        .cloned()
        .map(|mut r| {
            if let Some(l) = r.label {
                r.label = Some(f64::from(u8::from(l >= med)));
            }
            r
        })
        .collect();
    Ok((EmbeddingSet::new(set.dim(), records)?, true))
}

fn acquire_classifier(
    set: &EmbeddingSet,
    task: TaskMode,
    cfg: &ClassifierConfig,
    path: &Path,
) -> Result<ClassifierHead> {
    if path.exists() {
        let (mlp, _) = load_checkpoint(path)?;
        return ClassifierHead::from_parts(mlp, task);
    }
    let clf = train_classifier(set, task, cfg)?;
    save_checkpoint(
        clf.mlp(),
        &CheckpointMeta {
            epoch: 0,
            lr: cfg.lr,
            seed: cfg.seed,
        },
        path,
    )?;
    Ok(clf)
}

/// Score the test split with one baseline method and write scores plus the
/// metrics report. Classifier-backed methods train (or reuse) the shared
/// checkpoint at `classifier_path`.
pub fn cmd_baseline(
    data_path: &Path,
    method_name: &str,
    config_path: Option<&Path>,
    out_dir: &Path,
    classifier_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let method = BaselineMethod::parse(method_name)?;
    let file_cfg: BaselineFileConfig = match config_path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => BaselineFileConfig::default(),
    };
    let task = parse_task(file_cfg.task.as_deref().unwrap_or("binary"))?;
    let mut clf_cfg = ClassifierConfig::default();
    if let Some(v) = &file_cfg.classifier_hidden_dims {
        clf_cfg.hidden_dims = v.clone();
    }
    if let Some(v) = file_cfg.classifier_lr {
        clf_cfg.lr = v;
    }
    if let Some(v) = file_cfg.classifier_weight_decay {
        clf_cfg.weight_decay = v;
    }
    if let Some(v) = file_cfg.classifier_epochs {
        clf_cfg.epochs = v;
    }
    if let Some(v) = file_cfg.classifier_patience {
        clf_cfg.patience = v;
    }
    if let Some(s) = seed.or(file_cfg.seed) {
        clf_cfg.seed = s;
    }
    let k = file_cfg.k.unwrap_or(50);
    let n_neighbors = file_cfg.n_neighbors.unwrap_or(20);
    let odin = OdinParams {
        epsilon: file_cfg.odin_epsilon.unwrap_or(0.0014),
        temperature: file_cfg.odin_temperature.unwrap_or(1000.0),
    };

    let raw_set = load_auto(data_path)?;
    raw_set.require_both_tags(SplitTag::Test)?;
    let has_labels = raw_set.records().iter().any(|r| r.label.is_some());
    let (set, binarized) = if has_labels
        && matches!(
            task,
            TaskMode::BinarySingleLogit | TaskMode::Multitask { .. }
        ) {
        binarize_if_continuous(&raw_set)?
    } else {
        (raw_set, false)
    };

    if method.needs_classifier() && !has_labels {
        return Err(Error::Schema(format!(
            "method '{}' requires supervised labels on the ID train split",
            method.name()
        )));
    }

    fs::create_dir_all(out_dir)?;
    let default_clf_path = out_dir.join("classifier.mpck");
    let clf_path = classifier_path.unwrap_or(&default_clf_path);
    // KNN/LOF run in the classifier's penultimate feature space when a
    // classifier is trainable, and fall back to the raw embeddings on a
    // fully unlabeled dataset.
    let classifier = if method.needs_classifier() || has_labels {
        Some(acquire_classifier(&set, task, &clf_cfg, clf_path)?)
    } else {
        None
    };

    let test_idx = test_indices(&set);
    let test_mat = set.gather(&test_idx);
    let train_id_idx = set.cell_indices(DistTag::Id, SplitTag::Train);
    if train_id_idx.is_empty() {
        return Err(Error::Capacity("train split has no ID records".into()));
    }
    let train_id_mat = set.gather(&train_id_idx);

    let scores = match method {
        BaselineMethod::Msp => score_msp(classifier.as_ref().unwrap(), &test_mat)?,
        BaselineMethod::Odin => score_odin(classifier.as_ref().unwrap(), &test_mat, odin)?,
        BaselineMethod::Energy => score_energy(classifier.as_ref().unwrap(), &test_mat)?,
        BaselineMethod::Mahalanobis => {
            let clf = classifier.as_ref().unwrap();
            // Class-conditional means for single-task modes, one global mean
            // for multitask.
            let (feat_idx, class_labels): (Vec<usize>, Option<Vec<usize>>) = match task {
                TaskMode::Multitask { .. } => (train_id_idx.clone(), None),
                _ => {
                    let labeled: Vec<usize> = train_id_idx
                        .iter()
                        .cloned()
                        .filter(|&i| set.records()[i].label.is_some())
                        .collect();
                    let classes: Vec<usize> = labeled
                        .iter()
                        .map(|&i| set.records()[i].label.unwrap() as usize)
                        .collect();
                    (labeled, Some(classes))
                }
            };
            let feats = clf.features(&set.gather(&feat_idx))?;
            let stats =
                fit_feature_stats(&feats, class_labels.as_deref(), CovarianceMode::LedoitWolf)?;
            score_mahalanobis(&stats, &clf.features(&test_mat)?)?
        }
        BaselineMethod::Knn | BaselineMethod::Lof => {
            let (train_feats, test_feats) = match &classifier {
                Some(clf) => (clf.features(&train_id_mat)?, clf.features(&test_mat)?),
                None => (train_id_mat.clone(), test_mat.clone()),
            };
            let (mean, std) = standardization_stats(&train_feats)?;
            let train_z = standardize(&train_feats, &mean, &std)?;
            let test_z = standardize(&test_feats, &mean, &std)?;
            match method {
                BaselineMethod::Knn => score_knn(&train_z, &test_z, k)?,
                _ => score_lof(&train_z, &test_z, n_neighbors)?,
            }
        }
    };

    let ids: Vec<String> = test_idx
        .iter()
        .map(|&i| set.records()[i].id.clone())
        .collect();
    write_text(
        out_dir,
        &format!("scores_{}.csv", method.name()),
        &scores_csv(&ids, method.name(), &scores),
    )?;
    let (id_s, ood_s) = split_scores(&set, &test_idx, &scores);
    let rep = report(&DetectionScores::new(id_s, ood_s, method.name())?);
    write_report(out_dir, method.name(), &rep)?;
    let params = BaselineParams {
        method: method.name().into(),
        k,
        n_neighbors,
        odin_epsilon: odin.epsilon,
        odin_temperature: odin.temperature,
        task: file_cfg.task.unwrap_or_else(|| "binary".into()),
        labels_binarized: binarized,
        classifier: clf_cfg.clone(),
    };
    write_text(
        out_dir,
        &format!("config_{}.json", method.name()),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&RunConfig {
                command: "baseline".into(),
                data_path: Some(data_path.display().to_string()),
                seed: Some(clf_cfg.seed),
                params: serde_json::to_value(&params)?,
            })?
        ),
    )
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Recompute the metrics report(s) from an `id,method,score` CSV, joining
/// ground-truth tags from the dataset.
pub fn cmd_metrics(data_path: &Path, scores_path: &Path, out_dir: &Path) -> Result<()> {
    let set = load_auto(data_path)?;
    let text = fs::read_to_string(scores_path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "id,method,score")) => {}
        _ => {
            return Err(Error::Schema(
                "scores header must be id,method,score".into(),
            ))
        }
    }
    let mut by_method: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    let lookup: std::collections::HashMap<&str, DistTag> = set
        .records()
        .iter()
        .map(|r| (r.id.as_str(), r.dist))
        .collect();
    for (zero_line, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        let line = zero_line + 1;
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let dist = *lookup.get(fields[0]).ok_or_else(|| {
            Error::Schema(format!("scored id '{}' is not in the dataset", fields[0]))
        })?;
        let score: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad score '{}'", fields[2]),
        })?;
        let slot = match by_method.iter_mut().find(|(m, _, _)| m == fields[1]) {
            Some(s) => s,
            None => {
                by_method.push((fields[1].to_string(), Vec::new(), Vec::new()));
                by_method.last_mut().unwrap()
            }
        };
        match dist {
            DistTag::Id => slot.1.push(score),
            DistTag::Ood => slot.2.push(score),
        }
    }
    if by_method.is_empty() {
        return Err(Error::Schema("scores file holds no rows".into()));
    }
    fs::create_dir_all(out_dir)?;
    let single = by_method.len() == 1;
    for (m, id_s, ood_s) in by_method {
        let rep = report(&DetectionScores::new(id_s, ood_s, m.clone())?);
        write_report(out_dir, if single { "" } else { &m }, &rep)?;
    }
    write_run_config(
        out_dir,
        &RunConfig {
            command: "metrics".into(),
            data_path: Some(data_path.display().to_string()),
            seed: None,
            params: serde_json::json!({ "scores": scores_path.display().to_string() }),
        },
    )
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

/// One full training run per (beta, lambda) grid point with derived seeds
/// (base seed + grid index), collecting the test AUROC of each selected
/// checkpoint into `beta,lambda,test_auroc` rows in grid order.
pub fn cmd_ablate(
    data_path: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    betas: &[f64],
    lambdas: &[f64],
    seed: Option<u64>,
) -> Result<()> {
    if betas.is_empty() || lambdas.is_empty() {
        return Err(Error::Usage(
            "ablation grid must name at least one beta and one lambda".into(),
        ));
    }
    if betas.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Usage("every beta must be positive".into()));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::Usage("every lambda must be non-negative".into()));
    }
    let set = load_auto(data_path)?;
    set.require_both_tags(SplitTag::Test)?;
    let base = read_train_config(config_path, seed, set.dim())?;
    let test_idx = test_indices(&set);
    let test_mat = set.gather(&test_idx);

    let mut csv = String::from("beta,lambda,test_auroc\n");
    let mut grid_index = 0u64;
    for &beta in betas {
        for &lambda in lambdas {
            let mut cfg = base.clone();
            cfg.loss.beta = beta;
            cfg.loss.lambda = lambda;
            cfg.seed = base.seed.wrapping_add(grid_index);
            let result = train(&set, &cfg)?;
            let scores = result.head.score(&test_mat)?;
            let (id_s, ood_s) = split_scores(&set, &test_idx, &scores);
            let a = crate::metrics::auroc(&DetectionScores::new(id_s, ood_s, "mole-pair")?);
            csv.push_str(&format!("{beta},{lambda},{a}\n"));
            grid_index += 1;
        }
    }
    fs::create_dir_all(out_dir)?;
    write_text(out_dir, "ablation.csv", &csv)?;
    write_run_config(
        out_dir,
        &RunConfig {
            command: "ablate".into(),
            data_path: Some(data_path.display().to_string()),
            seed: Some(base.seed),
            params: serde_json::json!({
                "beta": betas,
                "lambda": lambdas,
                "train": serde_json::to_value(&base)?,
            }),
        },
    )
}

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

/// Per-group mean gradient weights of a finished training run: hard
/// (delta < 0), boundary (|delta| < epsilon), easy (delta > 0) over the
/// train-split pairs. Emits `group,mean_weight,count`; an empty group gets
/// an empty mean.
pub fn cmd_dynamics(run_dir: &Path, data_override: Option<&Path>) -> Result<()> {
    let run_cfg: RunConfig =
        serde_json::from_str(&fs::read_to_string(run_dir.join("config.json"))?)?;
    if run_cfg.command != "train" {
        return Err(Error::Usage(format!(
            "'{}' is not a training run directory",
            run_dir.display()
        )));
    }
    let train_cfg: TrainConfig = serde_json::from_value(run_cfg.params.clone())?;
    let data_path: PathBuf = match data_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(run_cfg.data_path.as_deref().ok_or_else(|| {
            Error::Usage("run config does not record a data path; pass --data".into())
        })?),
    };
    let set = load_auto(&data_path)?;
    set.require_both_tags(SplitTag::Train)?;
    let (mlp, _) = load_checkpoint(run_dir.join("checkpoint.mpck"))?;
    let head = ScoringHead::from_mlp(mlp)?;

    let id_scores = head.score(&set.gather(&set.cell_indices(DistTag::Id, SplitTag::Train)))?;
    let ood_scores = head.score(&set.gather(&set.cell_indices(DistTag::Ood, SplitTag::Train)))?;
    let beta = train_cfg.loss.beta;
    let eps = train_cfg.dynamics_epsilon;

    let mut sums = [0.0f64; 3]; // hard, boundary, easy
    let mut counts = [0usize; 3];
    for &o in &ood_scores {
        for &i in &id_scores {
            let d = o - i;
            let w = hard_pair_weight(d, beta);
            if d < 0.0 {
                sums[0] += w;
                counts[0] += 1;
            }
            if d.abs() < eps {
                sums[1] += w;
                counts[1] += 1;
            }
            if d > 0.0 {
                sums[2] += w;
                counts[2] += 1;
            }
        }
    }
    let mut csv = String::from("group,mean_weight,count\n");
    for (name, idx) in [("hard", 0), ("boundary", 1), ("easy", 2)] {
        let mean = if counts[idx] == 0 {
            String::new()
        } else {
            (sums[idx] / counts[idx] as f64).to_string()
        };
        csv.push_str(&format!("{name},{mean},{}\n", counts[idx]));
    }
    write_text(run_dir, "weight_groups.csv", &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing_lists_valid_names_on_error() {
        assert!(BaselineMethod::parse("knn").is_ok());
        match BaselineMethod::parse("made-up") {
            Err(Error::Usage(msg)) => {
                for m in BaselineMethod::ALL {
                    assert!(msg.contains(m.name()), "missing {} in '{msg}'", m.name());
                }
            }
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn task_parsing() {
        assert_eq!(parse_task("binary").unwrap(), TaskMode::BinarySingleLogit);
        assert_eq!(
            parse_task("multiclass:4").unwrap(),
            TaskMode::Multiclass { classes: 4 }
        );
        assert_eq!(
            parse_task("multitask:2").unwrap(),
            TaskMode::Multitask { tasks: 2 }
        );
        assert!(parse_task("multiclass:1").is_err());
        assert!(parse_task("nonsense").is_err());
    }

    #[test]
    fn train_file_config_resolution_and_defaults() {
        let f: TrainFileConfig = serde_json::from_str(
            r#"{"epochs": 7, "beta": 0.5, "hidden_dims": [8, 4], "dropout": 0.0}"#,
        )
        .unwrap();
        let cfg = f.resolve(3);
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.loss.beta, 0.5);
        assert_eq!(cfg.loss.lambda, 0.01);
        assert_eq!(cfg.batch_size, 512);
        let head = cfg.head.unwrap();
        assert_eq!(head.layer_dims, vec![3, 8, 4, 1]);
        assert_eq!(head.dropout_rate, 0.0);
        // Unknown fields are rejected rather than silently ignored.
        assert!(serde_json::from_str::<TrainFileConfig>(r#"{"epcohs": 7}"#).is_err());
    }
}
