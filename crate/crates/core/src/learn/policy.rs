//! Tanh MLP policies over featurized observations.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::dataset::Layout;
use crate::symmetry::{arm_dim, ActionChunk, ActionMode, Modality, Observation};

use super::tape::{normalize_quat_rows, Tape, Var};

/// Flattens an observation: for each history frame, oldest first, the
/// visual block (row-major image, or sorted points as `x y z` triples)
/// followed by the proprioceptive block.
pub fn featurize(layout: &Layout, o: &Observation) -> Result<Vec<f64>> {
    if o.frames.len() != layout.history {
        return Err(Error::ShapeMismatch(format!(
            "observation has {} frames, layout expects {}",
            o.frames.len(),
            layout.history
        )));
    }
    let mut out = Vec::with_capacity(layout.history * layout.obs_len());
    for f in &o.frames {
        out.extend(layout.encode_frame(f)?);
    }
    Ok(out)
}

/// Robot-frame `x` that positions are centered on; `y` is already centered on
/// the mirror plane.
const POSITION_CENTER_X: f64 = 0.3;
/// Metric coordinates are divided by this, m.
const POSITION_SCALE: f64 = 0.15;

/// Fixed per-column `(shift, scale)` of one step block: Cartesian positions
/// are centered and rescaled, everything else passes through.
fn step_affine(layout: &Layout) -> (Vec<f64>, Vec<f64>) {
    let arm = arm_dim(layout.action_mode, layout.arm_dof);
    let mut shift = vec![0.0; 2 * arm];
    let mut scale = vec![1.0; 2 * arm];
    if layout.action_mode == ActionMode::Ee {
        for a in 0..2 {
            shift[a * arm] = POSITION_CENTER_X;
            for c in 0..3 {
                scale[a * arm + c] = POSITION_SCALE;
            }
        }
    }
    (shift, scale)
}

/// Inputs enter the network as `(x − shift) / scale`, column-wise. Both
/// vectors depend only on the layout and are mirror-compatible.
pub fn input_affine(layout: &Layout) -> (Vec<f64>, Vec<f64>) {
    let (mut shift, mut scale) = (Vec::new(), Vec::new());
    let (step_shift, step_scale) = step_affine(layout);
    for _ in 0..layout.history {
        match layout.modality {
            Modality::Image => {
                shift.extend(std::iter::repeat_n(0.0, layout.visual_len()));
                scale.extend(std::iter::repeat_n(1.0, layout.visual_len()));
            }
            Modality::PointCloud => {
                for _ in 0..layout.n_points {
                    shift.extend([POSITION_CENTER_X, 0.0, 0.0]);
                    scale.extend([POSITION_SCALE; 3]);
                }
            }
        }
        shift.extend_from_slice(&step_shift);
        scale.extend_from_slice(&step_scale);
    }
    (shift, scale)
}

/// Network outputs leave as `shift + scale · h`, column-wise, before
/// quaternion normalization.
pub fn output_affine(layout: &Layout) -> (Vec<f64>, Vec<f64>) {
    let (s, k) = step_affine(layout);
    (s.repeat(layout.horizon), k.repeat(layout.horizon))
}

/// Columns of the quaternion `w` components in a flattened action chunk.
pub fn chunk_quaternion_columns(layout: &Layout) -> Vec<usize> {
    if layout.action_mode != ActionMode::Ee {
        return Vec::new();
    }
    let arm = arm_dim(ActionMode::Ee, layout.arm_dof);
    let step = layout.step_len();
    (0..layout.horizon)
        .flat_map(|s| [s * step + 3, s * step + arm + 3])
        .collect()
}

/// Fully connected network: tanh hidden layers, linear output, unit
/// quaternions in end-effector mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub layout: Layout,
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    /// `sizes[k] × sizes[k + 1]`.
    pub weights: Vec<Array2<f64>>,
    /// `1 × sizes[k + 1]`.
    pub biases: Vec<Array2<f64>>,
}

impl Policy {
    pub fn input_len(layout: &Layout) -> usize {
        layout.history * layout.obs_len()
    }

    fn layer_sizes(layout: &Layout, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![Self::input_len(layout)];
        sizes.extend_from_slice(hidden);
        sizes.push(layout.act_len());
        sizes
    }

    pub fn zeros(layout: Layout, hidden: &[usize]) -> Self {
        let sizes = Self::layer_sizes(&layout, hidden);
        let weights = sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = sizes.windows(2).map(|w| Array2::zeros((1, w[1]))).collect();
        Self {
            layout,
            sizes,
            weights,
            biases,
        }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn new(layout: Layout, hidden: &[usize], seed: u64) -> Self {
        let mut p = Self::zeros(layout, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut p.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-limit..limit));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params().map(|p| p.len()).sum()
    }

    /// Parameter tensors in storage order: `W0, b0, W1, b1, ...`.
    pub fn params(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "policy expects {} features, got {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Feature rows as the first layer sees them.
    pub fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        let (shift, scale) = input_affine(&self.layout);
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, s), k) in row.iter_mut().zip(&shift).zip(&scale) {
                *v = (*v - s) / k;
            }
        }
        out
    }

    fn has_output_affine(&self) -> bool {
        self.layout.action_mode == ActionMode::Ee
    }

    /// Network outputs for a batch of feature rows.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let last = self.weights.len() - 1;
        let mut h = self.standardize(x).dot(&self.weights[0]) + &self.biases[0];
        for k in 1..=last {
            h.mapv_inplace(f64::tanh);
            h = h.dot(&self.weights[k]) + &self.biases[k];
        }
        if self.has_output_affine() {
            let (shift, scale) = output_affine(&self.layout);
            for mut row in h.rows_mut() {
                for ((v, s), k) in row.iter_mut().zip(&shift).zip(&scale) {
                    *v = s + k * *v;
                }
            }
        }
        normalize_quat_rows(&mut h, &chunk_quaternion_columns(&self.layout));
        Ok(h)
    }

    /// Records the same computation as [`Policy::forward_batch`] on `tape`,
    /// given parameter leaves in [`Policy::params`] order and raw feature
    /// rows.
    pub fn record(&self, tape: &mut Tape, params: &[Var], x: &Array2<f64>) -> Var {
        let last = self.weights.len() - 1;
        let x = tape.leaf(self.standardize(x));
        let mut h = tape.matmul(x, params[0]);
        h = tape.add_row(h, params[1]);
        for k in 1..=last {
            h = tape.tanh(h);
            h = tape.matmul(h, params[2 * k]);
            h = tape.add_row(h, params[2 * k + 1]);
        }
        if self.has_output_affine() {
            let (shift, scale) = output_affine(&self.layout);
            let rows = tape.value(h).nrows();
            let scale = Array2::from_shape_fn((rows, scale.len()), |(_, c)| scale[c]);
            h = tape.mul_const(h, scale);
            let shift = tape.leaf(Array2::from_shape_vec((1, shift.len()), shift).expect("row shape"));
            h = tape.add_row(h, shift);
        }
        let cols = chunk_quaternion_columns(&self.layout);
        if cols.is_empty() {
            h
        } else {
            tape.normalize_quat(h, cols)
        }
    }

    pub fn forward(&self, features: &[f64]) -> Result<ActionChunk> {
        let x = Array2::from_shape_vec((1, features.len()), features.to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let y = self.forward_batch(&x)?;
        let l = &self.layout;
        ActionChunk::decode(l.action_mode, l.arm_dof, l.horizon, y.as_slice().unwrap())
    }

    pub fn act(&self, o: &Observation) -> Result<ActionChunk> {
        self.forward(&featurize(&self.layout, o)?)
    }
}

/// Mean squared error over the flattened chunk encodings.
pub fn bc_loss(pred: &ActionChunk, label: &ActionChunk) -> Result<f64> {
    let (a, b) = (pred.encode(), label.encode());
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "chunks encode to {} and {} values",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}
