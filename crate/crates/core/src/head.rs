//! Trainable scoring head: a small ReLU MLP with exact analytic gradients,
//! inverted dropout, decoupled-weight-decay adaptive-moment updates, a
//! step-decay learning-rate schedule, and global-norm gradient clipping.
//!
//! [`Mlp`] is the general multi-output workhorse (also used by the baseline
//! classifier); [`ScoringHead`] is the scalar-output detector wrapper whose
//! score is the OOD affinity: higher means more out-of-distribution.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Layer sizes and dropout for an MLP. `layer_dims` runs
/// [input, hidden..., output].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub activation: Activation,
}

impl HeadConfig {
    /// Detector default: input -> 256 -> 128 -> 1 with dropout 0.1.
    pub fn scoring(input_dim: usize) -> Self {
        HeadConfig {
            layer_dims: vec![input_dim, 256, 128, 1],
            dropout_rate: 0.1,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidParameter(
                "layer_dims needs at least input and output".into(),
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidParameter("zero-width layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate {} outside [0,1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}

/// Per-layer parameter gradients, in the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        for w in &self.weights {
            s += w.data().iter().map(|v| v * v).sum::<f64>();
        }
        for b in &self.biases {
            s += b.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for v in w.data_mut() {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .all(|w| w.data().iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Activation bookkeeping from one training-mode forward pass, consumed by
/// [`Mlp::backward`]. Tied to the parameter version that produced it.
#[derive(Debug)]
pub struct ForwardCache {
    version: u64,
    rows: usize,
    /// Input actually fed to each linear layer (post-dropout).
    inputs: Vec<Matrix>,
    /// 1.0 where the hidden pre-activation was positive.
    relu_active: Vec<Matrix>,
    /// Per-element dropout multiplier (0 or 1/(1-p)); None in eval mode or
    /// at rate 0.
    dropout_scale: Vec<Option<Matrix>>,
}

/// Plain MLP with ReLU hidden layers and a linear output layer.
/// Weights are Glorot-uniform initialized; biases start at zero.
#[derive(Debug, Clone)]
pub struct Mlp {
    config: HeadConfig,
    weights: Vec<Matrix>, // layer l: out_l x in_l, row-major
    biases: Vec<Vec<f64>>,
    training: bool,
    dropout_rng: Rng,
    version: u64,
}

impl Mlp {
    pub fn new(config: HeadConfig, init_rng: &mut Rng, dropout_rng: Rng) -> Result<Self> {
        config.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..config.layer_dims.len() - 1 {
            let fan_in = config.layer_dims[l];
            let fan_out = config.layer_dims[l + 1];
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| (init_rng.next_f64() * 2.0 - 1.0) * bound)
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            config,
            weights,
            biases,
            training: false,
            dropout_rng,
            version: 0,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn training(&self) -> bool {
        self.training
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass honoring the training flag (dropout masks are drawn from
    /// the head's own rng). Returns outputs and the cache for backward.
    pub fn forward(&mut self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, head expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let n = batch.rows();
        let p = self.config.dropout_rate;
        let mut inputs = vec![batch.clone()];
        let mut relu_active = Vec::new();
        let mut dropout_scale = Vec::new();

        for l in 0..self.n_layers() {
            let z = self.linear(l, &inputs[l]);
            if l + 1 < self.n_layers() {
                let out_l = self.weights[l].rows();
                let mut active = Matrix::zeros(n, out_l);
                let mut a = Matrix::zeros(n, out_l);
                for r in 0..n {
                    for c in 0..out_l {
                        let v = z.get(r, c);
                        if v > 0.0 {
                            active.set(r, c, 1.0);
                            a.set(r, c, v);
                        }
                    }
                }
                let scale = if self.training && p > 0.0 {
                    let keep = 1.0 / (1.0 - p);
                    let mut s = Matrix::zeros(n, out_l);
                    for r in 0..n {
                        for c in 0..out_l {
                            if self.dropout_rng.next_f64() >= p {
                                s.set(r, c, keep);
                                a.set(r, c, a.get(r, c) * keep);
                            } else {
                                a.set(r, c, 0.0);
                            }
                        }
                    }
                    Some(s)
                } else {
                    None
                };
                relu_active.push(active);
                dropout_scale.push(scale);
                inputs.push(a);
            } else {
                if z.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite head output".into()));
                }
                return Ok((
                    z,
                    ForwardCache {
                        version: self.version,
                        rows: n,
                        inputs,
                        relu_active,
                        dropout_scale,
                    },
                ));
            }
        }
        unreachable!("loop returns at the last layer");
    }

    /// Eval-mode forward that also builds a backward cache. No dropout is
    /// applied and no rng state is consumed, so this is a pure function of
    /// the input; the cache yields exact gradients of the eval network
    /// (used for input-gradient scoring).
    pub fn forward_eval(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, head expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let n = batch.rows();
        let mut inputs = vec![batch.clone()];
        let mut relu_active = Vec::new();
        let mut dropout_scale = Vec::new();
        for l in 0..self.n_layers() {
            let z = self.linear(l, &inputs[l]);
            if l + 1 < self.n_layers() {
                let out_l = self.weights[l].rows();
                let mut active = Matrix::zeros(n, out_l);
                let mut a = Matrix::zeros(n, out_l);
                for r in 0..n {
                    for c in 0..out_l {
                        let v = z.get(r, c);
                        if v > 0.0 {
                            active.set(r, c, 1.0);
                            a.set(r, c, v);
                        }
                    }
                }
                relu_active.push(active);
                dropout_scale.push(None);
                inputs.push(a);
            } else {
                if z.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite head output".into()));
                }
                return Ok((
                    z,
                    ForwardCache {
                        version: self.version,
                        rows: n,
                        inputs,
                        relu_active,
                        dropout_scale,
                    },
                ));
            }
        }
        unreachable!("loop returns at the last layer");
    }

    /// Post-activation features entering the final linear layer, eval mode.
    /// For a single-layer network this is the input itself.
    pub fn penultimate(&self, batch: &Matrix) -> Result<Matrix> {
        let (_, cache) = self.forward_eval(batch)?;
        Ok(cache.inputs.last().expect("at least one layer").clone())
    }

    /// Smallest |pre-activation| over all hidden units of the batch, eval
    /// mode; +inf when there are no hidden layers. Finite-difference
    /// gradient checks reject sample points that sit too close to a ReLU
    /// kink.
    pub fn min_abs_hidden_preactivation(&self, batch: &Matrix) -> Result<f64> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, head expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut cur = batch.clone();
        let mut min_abs = f64::INFINITY;
        for l in 0..self.n_layers() - 1 {
            let mut z = self.linear(l, &cur);
            for v in z.data() {
                min_abs = min_abs.min(v.abs());
            }
            for v in z.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            cur = z;
        }
        Ok(min_abs)
    }

    /// Pure eval-mode forward: deterministic function of the input,
    /// independent of the dropout rate, callable concurrently on a shared
    /// head.
    pub fn output(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, head expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut cur = batch.clone();
        for l in 0..self.n_layers() {
            let mut z = self.linear(l, &cur);
            if l + 1 < self.n_layers() {
                for v in z.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            cur = z;
        }
        if cur.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite head output".into()));
        }
        Ok(cur)
    }

    fn linear(&self, l: usize, input: &Matrix) -> Matrix {
        let w = &self.weights[l];
        let b = &self.biases[l];
        let n = input.rows();
        let mut z = Matrix::zeros(n, w.rows());
        for r in 0..n {
            let x = input.row(r);
            let zr = z.row_mut(r);
            for (o, zo) in zr.iter_mut().enumerate() {
                let wrow = w.row(o);
                let mut acc = b[o];
                for (wi, xi) in wrow.iter().zip(x) {
                    acc += wi * xi;
                }
                *zo = acc;
            }
        }
        z
    }

    /// Exact gradients of the network under upstream `d_out` (same shape as
    /// the forward output), evaluated with the same dropout masks as the
    /// cached forward. Also returns dL/dinput, needed by the ODIN baseline.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Matrix) -> Result<(Gradients, Matrix)> {
        if cache.version != self.version {
            return Err(Error::Contract(
                "stale forward cache: parameters changed since the forward pass".into(),
            ));
        }
        if d_out.rows() != cache.rows || d_out.cols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                d_out.rows(),
                d_out.cols(),
                cache.rows,
                self.output_dim()
            )));
        }
        let n = cache.rows;
        let mut grads = Gradients {
            weights: self
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let mut dz = d_out.clone();
        for l in (0..self.n_layers()).rev() {
            let input = &cache.inputs[l];
            let w = &self.weights[l];
            let (out_l, in_l) = (w.rows(), w.cols());
            // dW = dZ^T . input, db = column sums of dZ
            {
                let gw = &mut grads.weights[l];
                let gb = &mut grads.biases[l];
                for r in 0..n {
                    let dzr = dz.row(r);
                    let xr = input.row(r);
                    for o in 0..out_l {
                        let d = dzr[o];
                        if d != 0.0 {
                            let grow = gw.row_mut(o);
                            for (gi, xi) in grow.iter_mut().zip(xr) {
                                *gi += d * xi;
                            }
                            gb[o] += d;
                        }
                    }
                }
            }
            // dInput = dZ . W
            let mut din = Matrix::zeros(n, in_l);
            for r in 0..n {
                let dzr = dz.row(r);
                let dr = din.row_mut(r);
                for o in 0..out_l {
                    let d = dzr[o];
                    if d != 0.0 {
                        let wrow = w.row(o);
                        for (di, wi) in dr.iter_mut().zip(wrow) {
                            *di += d * wi;
                        }
                    }
                }
            }
            if l == 0 {
                return Ok((grads, din));
            }
            // Through dropout then ReLU of the previous hidden layer.
            let active = &cache.relu_active[l - 1];
            let scale = cache.dropout_scale[l - 1].as_ref();
            for r in 0..n {
                for c in 0..in_l {
                    let mut v = din.get(r, c) * active.get(r, c);
                    if let Some(s) = scale {
                        v *= s.get(r, c);
                    }
                    din.set(r, c, v);
                }
            }
            dz = din;
        }
        unreachable!("loop returns at layer 0");
    }

    /// Flat parameter vector: per layer, weight rows then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let wl = w.data().len();
            w.data_mut().copy_from_slice(&flat[off..off + wl]);
            off += wl;
            let bl = b.len();
            b.copy_from_slice(&flat[off..off + bl]);
            off += bl;
        }
        self.version += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.data().len() + b.len())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLrSchedule {
    pub step_size: usize,
    pub gamma: f64,
}

/// Adaptive-moment optimizer state. `decoupled` selects AdamW-style weight
/// decay (applied directly to the parameters); otherwise the decay is folded
/// into the gradient (classic L2).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub lr_base: f64,
    lr: f64,
    pub weight_decay: f64,
    pub decoupled: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
    pub scheduler: Option<StepLrSchedule>,
    step: u64,
    m: Option<Gradients>,
    v: Option<Gradients>,
}

impl OptimizerState {
    /// Detector defaults: AdamW, lr 1e-4, weight decay 1e-5, clip 1.0,
    /// step decay x0.9 every 10 epochs.
    pub fn adamw_default() -> Self {
        Self::adamw(
            1e-4,
            1e-5,
            Some(1.0),
            Some(StepLrSchedule {
                step_size: 10,
                gamma: 0.9,
            }),
        )
    }

    pub fn adamw(
        lr: f64,
        weight_decay: f64,
        clip_norm: Option<f64>,
        scheduler: Option<StepLrSchedule>,
    ) -> Self {
        OptimizerState {
            lr_base: lr,
            lr,
            weight_decay,
            decoupled: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm,
            scheduler,
            step: 0,
            m: None,
            v: None,
        }
    }

    /// Classifier-style Adam with coupled L2 decay, no clipping, no schedule.
    pub fn adam_l2(lr: f64, weight_decay: f64) -> Self {
        OptimizerState {
            decoupled: false,
            clip_norm: None,
            scheduler: None,
            ..Self::adamw(lr, weight_decay, None, None)
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// StepLR at epoch granularity: lr = base * gamma^(epoch / step_size).
    pub fn set_epoch(&mut self, epoch: usize) {
        if let Some(s) = self.scheduler {
            self.lr = self.lr_base * s.gamma.powi((epoch / s.step_size) as i32);
        }
    }

    fn zeros_like(mlp: &Mlp) -> Gradients {
        Gradients {
            weights: mlp
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// One optimizer step: global-norm clipping first, then the bias-corrected
/// moment update, with weight decay per the optimizer's mode. Rejects
/// non-finite gradients without touching any state.
pub fn apply_update(mlp: &mut Mlp, opt: &mut OptimizerState, mut grads: Gradients) -> Result<()> {
    if grads.weights.len() != mlp.weights.len()
        || grads
            .weights
            .iter()
            .zip(&mlp.weights)
            .any(|(g, w)| g.rows() != w.rows() || g.cols() != w.cols())
        || grads
            .biases
            .iter()
            .zip(&mlp.biases)
            .any(|(g, b)| g.len() != b.len())
    {
        return Err(Error::Shape(
            "gradient shapes do not match parameters".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradients".into()));
    }
    if let Some(clip) = opt.clip_norm {
        let norm = grads.global_norm();
        if norm > clip {
            grads.scale(clip / norm);
        }
    }
    if opt.m.is_none() {
        opt.m = Some(OptimizerState::zeros_like(mlp));
        opt.v = Some(OptimizerState::zeros_like(mlp));
    }
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    let m = opt.m.as_mut().unwrap();
    let v = opt.v.as_mut().unwrap();

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        let mut g = g;
        if !opt.decoupled && opt.weight_decay != 0.0 {
            g += opt.weight_decay * *p;
        }
        *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
        *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        if opt.decoupled && opt.weight_decay != 0.0 {
            *p -= opt.lr * opt.weight_decay * *p;
        }
        *p -= opt.lr * m_hat / (v_hat.sqrt() + opt.epsilon);
    };

    for l in 0..mlp.weights.len() {
        let pw = mlp.weights[l].data_mut();
        let gw = grads.weights[l].data();
        let mw = m.weights[l].data_mut();
        let vw = v.weights[l].data_mut();
        for i in 0..pw.len() {
            update(&mut pw[i], gw[i], &mut mw[i], &mut vw[i]);
        }
        let pb = &mut mlp.biases[l];
        let gb = &grads.biases[l];
        let mb = &mut m.biases[l];
        let vb = &mut v.biases[l];
        for i in 0..pb.len() {
            update(&mut pb[i], gb[i], &mut mb[i], &mut vb[i]);
        }
    }
    mlp.version += 1;
    Ok(())
}

// ---------------------------------------------------------------------------
// Scoring head wrapper
// ---------------------------------------------------------------------------

/// Scalar-output detector head. Scores are OOD affinities: higher = more
/// OOD-like.
#[derive(Debug, Clone)]
pub struct ScoringHead {
    mlp: Mlp,
}

impl ScoringHead {
    pub fn new(config: HeadConfig, init_rng: &mut Rng, dropout_rng: Rng) -> Result<Self> {
        if config.output_dim() != 1 {
            return Err(Error::InvalidParameter(format!(
                "scoring head must end in one unit, got {}",
                config.output_dim()
            )));
        }
        Ok(ScoringHead {
            mlp: Mlp::new(config, init_rng, dropout_rng)?,
        })
    }

    /// Wrap an existing single-output network (e.g. a loaded checkpoint).
    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.output_dim() != 1 {
            return Err(Error::InvalidParameter(format!(
                "scoring head must end in one unit, got {}",
                mlp.output_dim()
            )));
        }
        Ok(ScoringHead { mlp })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn config(&self) -> &HeadConfig {
        self.mlp.config()
    }

    pub fn set_training(&mut self, training: bool) {
        self.mlp.set_training(training);
    }

    pub fn training(&self) -> bool {
        self.mlp.training()
    }

    /// Mode-aware forward returning per-row scores and the backward cache.
    pub fn forward(&mut self, batch: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        let (out, cache) = self.mlp.forward(batch)?;
        Ok((out.data().to_vec(), cache))
    }

    /// Pure eval-mode scores.
    pub fn score(&self, batch: &Matrix) -> Result<Vec<f64>> {
        Ok(self.mlp.output(batch)?.data().to_vec())
    }

    /// Backward from dL/dscores; returns parameter gradients and dL/dinput.
    pub fn backward(&self, cache: &ForwardCache, d_scores: &[f64]) -> Result<(Gradients, Matrix)> {
        let d = Matrix::from_vec(d_scores.len(), 1, d_scores.to_vec())?;
        self.mlp.backward(cache, &d)
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header + float64 parameter payload, round-trip exact.
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"MPCK";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: HeadConfig,
    epoch: usize,
    lr: f64,
    seed: u64,
    param_count: usize,
}

pub fn save_checkpoint(mlp: &Mlp, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let header = CheckpointHeader {
        config: mlp.config().clone(),
        epoch: meta.epoch,
        lr: meta.lr,
        seed: meta.seed,
        param_count: mlp.param_count(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for v in mlp.params_flat() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&buf)?;
    Ok(())
}

/// Load a checkpoint into an eval-mode MLP. Optimizer and dropout-rng state
/// are not persisted; the head is ready for scoring or further training with
/// a fresh optimizer.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Mlp, CheckpointMeta)> {
    let mut bytes = Vec::new();
    fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[0..4] != CKPT_MAGIC {
        return Err(Error::Format("bad checkpoint magic, expected MPCK".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + hlen {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + hlen])
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    let payload = &bytes[12 + hlen..];
    if payload.len() != header.param_count * 8 {
        return Err(Error::Format(format!(
            "checkpoint payload holds {} bytes, expected {}",
            payload.len(),
            header.param_count * 8
        )));
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut init_rng = Rng::new(header.seed);
    let dropout_rng = Rng::from_seed_stream(header.seed, 2);
    let mut mlp = Mlp::new(header.config.clone(), &mut init_rng, dropout_rng)?;
    mlp.set_params_flat(&params)?;
    mlp.set_training(false);
    Ok((
        mlp,
        CheckpointMeta {
            epoch: header.epoch,
            lr: header.lr,
            seed: header.seed,
        },
    ))
}
