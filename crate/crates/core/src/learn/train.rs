//! Behavior cloning with the symmetry-consistency regularizer.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::dataset::{Dataset, Layout};
use crate::symmetry::{quaternion_alignment, ActionChunk, Observation, SymmetryOp};

use super::policy::{featurize, Policy};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Plain behavior cloning; the symmetry weight must be zero.
    Baseline,
    /// Behavior cloning plus the symmetry-consistency term.
    Equibim,
    /// Behavior cloning on original and mirrored pairs, plus the
    /// symmetry term at its configured weight.
    Augment,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::Baseline, TrainMode::Equibim, TrainMode::Augment];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::Equibim => "equibim",
            TrainMode::Augment => "augment",
        }
    }

    pub fn default_lambda(self) -> f64 {
        match self {
            TrainMode::Equibim => 1.0,
            TrainMode::Baseline | TrainMode::Augment => 0.0,
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "equibim" => Ok(TrainMode::Equibim),
            "augment" => Ok(TrainMode::Augment),
            _ => Err(Error::Config(format!("unknown training mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_sym: f64,
    pub mode: TrainMode,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Cosine-anneal the learning rate from `lr` to 0 over the epochs.
    #[serde(default)]
    pub cosine_decay: bool,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            epochs: 200,
            lambda_sym: mode.default_lambda(),
            mode,
            seed: 0,
            hidden: vec![256, 256],
            cosine_decay: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lambda_sym.is_finite() && self.lambda_sym >= 0.0) {
            return bad("lambda_sym must be a finite value >= 0");
        }
        if self.mode == TrainMode::Baseline && self.lambda_sym != 0.0 {
            return bad("lambda_sym must be 0 in baseline mode");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The mirror operator bound to a dataset layout, plus `S` on flattened
/// chunks as a constant affine map.
#[derive(Debug, Clone)]
pub struct SymContext {
    pub op: SymmetryOp,
    pub layout: Layout,
    /// `Aᵀ` of the chunk-level map, so rows map as `p ↦ p·Aᵀ + b`.
    chunk_t: Array2<f64>,
    chunk_offset: Array2<f64>,
    quat_offsets: Vec<usize>,
}

impl SymContext {
    pub fn new(op: &SymmetryOp, layout: &Layout) -> Result<Self> {
        if op.arm_dof() != layout.arm_dof {
            return Err(Error::ModeMismatch(format!(
                "operator covers {} joints per arm, layout has {}",
                op.arm_dof(),
                layout.arm_dof
            )));
        }
        let op = op.with_modes(layout.modality, layout.action_mode);
        let block = op.block_affine();
        let (d, n) = (block.dim, layout.horizon);
        let mut chunk_t = Array2::zeros((n * d, n * d));
        let mut chunk_offset = Array2::zeros((1, n * d));
        for step in 0..n {
            let base = step * d;
            for r in 0..d {
                for c in 0..d {
                    chunk_t[[base + c, base + r]] = block.matrix[r * d + c];
                }
                chunk_offset[[0, base + r]] = block.offset[r];
            }
        }
        Ok(Self {
            quat_offsets: op.quaternion_offsets(),
            op,
            layout: *layout,
            chunk_t,
            chunk_offset,
        })
    }

    fn observation(&self, features: &[f64]) -> Result<Observation> {
        let frames = features
            .chunks(self.layout.obs_len())
            .map(|f| self.layout.decode_frame(f))
            .collect::<Result<_>>()?;
        Ok(Observation { frames })
    }

    /// Features of `S(O)` given the features of `O`.
    pub fn mirror_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        let o = self.op.transform_observation(&self.observation(features)?)?;
        featurize(&self.layout, &o)
    }

    /// Flattened `S(a)` given a flattened chunk `a`.
    pub fn mirror_chunk(&self, values: &[f64]) -> Result<Vec<f64>> {
        let l = &self.layout;
        let a = ActionChunk::decode(l.action_mode, l.arm_dof, l.horizon, values)?;
        Ok(self.op.transform_action_chunk(&a)?.encode())
    }

    fn mirror_rows(&self, x: &Array2<f64>, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(x.raw_dim());
        for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
            let m = f(src.as_slice().expect("rows are contiguous"))?;
            dst.assign(&ndarray::ArrayView1::from(&m));
        }
        Ok(out)
    }

    pub fn mirror_feature_rows(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.mirror_rows(x, |r| self.mirror_features(r))
    }

    pub fn mirror_chunk_rows(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        self.mirror_rows(y, |r| self.mirror_chunk(r))
    }

    /// Records the mean over rows and steps of
    /// `‖ps − S(p)‖` per step, quaternions compared up to sign.
    pub fn record_sym(&self, tape: &mut Tape, p: Var, ps: Var) -> Var {
        let a = tape.leaf(self.chunk_t.clone());
        let b = tape.leaf(self.chunk_offset.clone());
        let sp = tape.matmul(p, a);
        let sp = tape.add_row(sp, b);
        let step = self.layout.step_len();
        let sp = if self.quat_offsets.is_empty() {
            sp
        } else {
            let (vps, vsp) = (tape.value(ps), tape.value(sp));
            let mut signs = Array2::zeros(vsp.raw_dim());
            for r in 0..vsp.nrows() {
                let row = quaternion_alignment(
                    vps.row(r).as_slice().unwrap(),
                    vsp.row(r).as_slice().unwrap(),
                    step,
                    &self.quat_offsets,
                );
                signs.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
            }
            tape.mul_const(sp, signs)
        };
        let d = tape.sub(ps, sp);
        let norms = tape.block_norms(d, step);
        tape.mean(norms)
    }

    /// Mean symmetry residual between network outputs `p` on `O` and `ps`
    /// on `S(O)`.
    pub fn sym_value(&self, p: &Array2<f64>, ps: &Array2<f64>) -> f64 {
        let mut tape = Tape::new();
        let (p, ps) = (tape.leaf(p.clone()), tape.leaf(ps.clone()));
        let v = self.record_sym(&mut tape, p, ps);
        tape.scalar(v)
    }
}

fn record_mse(tape: &mut Tape, p: Var, y: &Array2<f64>) -> Var {
    let y = tape.leaf(y.clone());
    let d = tape.sub(p, y);
    let sq = tape.square(d);
    tape.mean(sq)
}

/// Feature and label rows of one mini-batch, with their mirror images.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub xs: Array2<f64>,
    /// Mirrored labels; only needed in augment mode.
    pub ys: Option<Array2<f64>>,
}

impl Batch {
    pub fn new(ctx: &SymContext, x: Array2<f64>, y: Array2<f64>, with_labels: bool) -> Result<Self> {
        let xs = ctx.mirror_feature_rows(&x)?;
        let ys = if with_labels {
            Some(ctx.mirror_chunk_rows(&y)?)
        } else {
            None
        };
        Ok(Self { x, y, xs, ys })
    }
}

/// Loss terms of one recorded forward pass.
struct Graph {
    tape: Tape,
    params: Vec<Var>,
    bc: Var,
    sym: Option<Var>,
    total: Var,
    /// Network output on `S(O)`, when it was recorded.
    ps: Option<Var>,
    p: Var,
}

fn record_loss(policy: &Policy, ctx: &SymContext, batch: &Batch, lambda: f64, augment: bool) -> Graph {
    let mut tape = Tape::new();
    let params: Vec<Var> = policy.params().map(|p| tape.leaf(p.clone())).collect();
    let p = policy.record(&mut tape, &params, &batch.x);
    let bc = record_mse(&mut tape, p, &batch.y);
    let mut total = bc;
    let mut ps = None;
    let mut sym = None;
    if lambda > 0.0 || augment {
        ps = Some(policy.record(&mut tape, &params, &batch.xs));
    }
    if lambda > 0.0 {
        let s = ctx.record_sym(&mut tape, p, ps.unwrap());
        let weighted = tape.scale(s, lambda);
        total = tape.add(total, weighted);
        sym = Some(s);
    }
    if augment {
        let ys = batch.ys.as_ref().expect("augment batches carry mirrored labels");
        let aug = record_mse(&mut tape, ps.unwrap(), ys);
        total = tape.add(total, aug);
    }
    Graph {
        tape,
        params,
        bc,
        sym,
        total,
        ps,
        p,
    }
}

/// `L_bc + λ·L_sym` on one batch.
pub fn total_loss(policy: &Policy, ctx: &SymContext, batch: &Batch, lambda: f64) -> f64 {
    let g = record_loss(policy, ctx, batch, lambda, false);
    g.tape.scalar(g.total)
}

/// Symmetry-consistency loss of a single observation, through the same
/// recorded graph used in training.
pub fn sym_loss(policy: &Policy, o: &Observation, op: &SymmetryOp) -> Result<f64> {
    let ctx = SymContext::new(op, &policy.layout)?;
    let f = featurize(&policy.layout, o)?;
    let n = f.len();
    let x = Array2::from_shape_vec((1, n), f).unwrap();
    let batch = Batch::new(&ctx, x, Array2::zeros((1, policy.output_dim())), false)?;
    let g = record_loss(policy, &ctx, &batch, 1.0, false);
    Ok(g.tape.scalar(g.sym.unwrap()))
}

/// Losses are sample-weighted means over the epoch's mini-batches, taken
/// before each update; `grad_norm` is the mean over mini-batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub bc_loss: f64,
    pub sym_loss: f64,
    pub grad_norm: f64,
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,bc_loss,sym_loss,grad_norm\n");
    for m in metrics {
        out.push_str(&format!("{},{},{},{}\n", m.epoch, m.bc_loss, m.sym_loss, m.grad_norm));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub metrics: Vec<EpochMetrics>,
    /// Epoch whose loss went non-finite; `policy` is then the last finite one.
    pub diverged: Option<usize>,
}

/// Feature and label rows for every `(episode, step)` of a dataset.
pub fn dataset_rows(ds: &Dataset) -> Result<(Array2<f64>, Array2<f64>)> {
    let layout = ds.layout();
    let (m, obs, act) = (layout.history, layout.obs_len(), layout.act_len());
    let n = ds.n_samples();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut x = Array2::zeros((n, m * obs));
    let mut y = Array2::zeros((n, act));
    let mut row = 0;
    for ep in &ds.episodes {
        if ep.obs_len != obs || ep.act_len != act {
            return Err(Error::ShapeMismatch("episode sizes differ from manifest".into()));
        }
        for t in 0..ep.len() {
            for k in 0..m {
                let idx = (t + k + 1).saturating_sub(m);
                let src = &ep.observations[idx * obs..(idx + 1) * obs];
                for (d, s) in x.slice_mut(s![row, k * obs..(k + 1) * obs]).iter_mut().zip(src) {
                    *d = f64::from(*s);
                }
            }
            let src = &ep.actions[t * act..(t + 1) * act];
            for (d, s) in y.row_mut(row).iter_mut().zip(src) {
                *d = f64::from(*s);
            }
            row += 1;
        }
    }
    Ok((x, y))
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    fn new(policy: &Policy) -> Self {
        let zeros: Vec<Array2<f64>> = policy.params().map(|p| Array2::zeros(p.raw_dim())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, policy: &mut Policy, grads: &[Array2<f64>], cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in policy.params_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            });
        }
    }
}

/// Trains on a dataset. The operator's modes are rebound to the dataset's.
pub fn train(ds: &Dataset, op: &SymmetryOp, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (x, y) = dataset_rows(ds)?;
    train_rows(ds.layout(), &x, &y, op, cfg)
}

/// Trains on explicit feature and label rows.
pub fn train_rows(
    layout: Layout,
    x: &Array2<f64>,
    y: &Array2<f64>,
    op: &SymmetryOp,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.nrows() != n || y.ncols() != layout.act_len() || x.ncols() != Policy::input_len(&layout) {
        return Err(Error::ShapeMismatch("training rows do not match layout".into()));
    }
    let ctx = SymContext::new(op, &layout)?;
    let augment = cfg.mode == TrainMode::Augment;
    let mut policy = Policy::new(layout, &cfg.hidden, cfg.seed);
    let mut adam = Adam::new(&policy);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.gen::<u64>();
    let mut order: Vec<usize> = (0..n).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let last_good = policy.clone();
        let lr = if cfg.cosine_decay {
            0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        } else {
            cfg.lr
        };
        order.shuffle(&mut rng);
        let (mut bc_sum, mut sym_sum, mut grad_sum) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        let mut finite = true;
        for idx in order.chunks(cfg.batch_size) {
            let bx = x.select(ndarray::Axis(0), idx);
            let by = y.select(ndarray::Axis(0), idx);
            let batch = Batch::new(&ctx, bx, by, augment)?;
            let g = record_loss(&policy, &ctx, &batch, cfg.lambda_sym, augment);
            let total = g.tape.scalar(g.total);
            if !total.is_finite() {
                finite = false;
                break;
            }
            let sym = match (g.sym, g.ps) {
                (Some(s), _) => g.tape.scalar(s),
                (None, Some(ps)) => ctx.sym_value(g.tape.value(g.p), g.tape.value(ps)),
                (None, None) => {
                    let ps = policy.forward_batch(&batch.xs)?;
                    ctx.sym_value(g.tape.value(g.p), &ps)
                }
            };
            let mut grads = g.tape.backward(g.total);
            let grads: Vec<Array2<f64>> = g
                .params
                .iter()
                .zip(policy.params())
                .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Array2::zeros(p.raw_dim())))
                .collect();
            let norm = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() {
                finite = false;
                break;
            }
            adam.step(&mut policy, &grads, cfg, lr);
            let rows = idx.len() as f64;
            bc_sum += rows * g.tape.scalar(g.bc);
            sym_sum += rows * sym;
            grad_sum += norm;
            batches += 1;
        }
        if !finite || !policy.is_finite() {
            return Ok(TrainOutcome {
                policy: last_good,
                metrics,
                diverged: Some(epoch),
            });
        }
        metrics.push(EpochMetrics {
            epoch,
            bc_loss: bc_sum / n as f64,
            sym_loss: sym_sum / n as f64,
            grad_norm: grad_sum / batches as f64,
        });
    }
    Ok(TrainOutcome {
        policy,
        metrics,
        diverged: None,
    })
}

/// Tape gradients of `L_bc + λ·L_sym` on `batch`, one array per parameter
/// tensor.
pub fn gradients(policy: &Policy, ctx: &SymContext, batch: &Batch, lambda: f64) -> Vec<Array2<f64>> {
    let g = record_loss(policy, ctx, batch, lambda, false);
    let mut grads = g.tape.backward(g.total);
    g.params
        .iter()
        .zip(policy.params())
        .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Array2::zeros(p.raw_dim())))
        .collect()
}

/// Central-difference step of [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradient magnitude below which errors are measured absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between tape gradients and central differences
/// over `samples` parameters drawn uniformly per tensor, then per entry.
/// The error is `|g − ĝ| / max(|g|, |ĝ|, GRAD_CHECK_FLOOR)`.
pub fn grad_check(
    policy: &Policy,
    ctx: &SymContext,
    batch: &Batch,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let grads = gradients(policy, ctx, batch, lambda);
    let mut probe = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tensors = grads.len();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let t = rng.gen_range(0..n_tensors);
        let i = rng.gen_range(0..grads[t].len());
        let at = |p: &mut Policy, delta: f64| {
            let cell = &mut p.params_mut().nth(t).unwrap().as_slice_mut().unwrap()[i];
            *cell += delta;
        };
        at(&mut probe, GRAD_CHECK_STEP);
        let up = total_loss(&probe, ctx, batch, lambda);
        at(&mut probe, -2.0 * GRAD_CHECK_STEP);
        let down = total_loss(&probe, ctx, batch, lambda);
        probe.params_mut().nth(t).unwrap().as_slice_mut().unwrap()[i] =
            policy.params().nth(t).unwrap().as_slice().unwrap()[i];
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let analytic = grads[t].as_slice().unwrap()[i];
        let denom = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}
