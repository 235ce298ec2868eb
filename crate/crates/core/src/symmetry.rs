//! The bilateral mirror operator `S` on observations and action chunks.
//!
//! One [`SymmetryOp`] carries everything needed to mirror every modality:
//! the camera extrinsics that host the reflection plane, the joint-space map
//! `(P, D)` and the declared observation/action modes.
//!
//! * images flip horizontally (columns run along the lateral axis);
//! * point clouds reflect point-wise, then sort lexicographically;
//! * joint blocks go through `(P, D)` across the `[left, right]` vector;
//! * end-effector blocks reflect the pose and swap arms;
//! * gripper apertures swap arms and never change sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quat_product, reflect_point, reflect_pose, Pose, RigidTransform, UnitQuat, Vec3};
use crate::robot::JointSymmetryMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    #[serde(rename = "pointcloud")]
    PointCloud,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::PointCloud => "pointcloud",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "pointcloud" | "point_cloud" => Ok(Modality::PointCloud),
            _ => Err(Error::Config(format!("unknown modality `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Joint,
    Ee,
}

impl ActionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionMode::Joint => "joint",
            ActionMode::Ee => "ee",
        }
    }
}

impl std::str::FromStr for ActionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(ActionMode::Joint),
            "ee" => Ok(ActionMode::Ee),
            _ => Err(Error::Config(format!("unknown action mode `{s}`"))),
        }
    }
}

/// Row-major intensities, index `(row · width + col) · channels + channel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "image {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    /// Lexicographic order on `(x, y, z)`.
    pub fn sort_canonical(&mut self) {
        self.points.sort_by(|a, b| {
            a.x.total_cmp(&b.x)
                .then(a.y.total_cmp(&b.y))
                .then(a.z.total_cmp(&b.z))
        });
    }
}

/// One arm's state or command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ArmBlock {
    Joint { q: Vec<f64>, gripper: f64 },
    Ee { pose: Pose, gripper: f64 },
}

impl ArmBlock {
    pub fn mode(&self) -> ActionMode {
        match self {
            ArmBlock::Joint { .. } => ActionMode::Joint,
            ArmBlock::Ee { .. } => ActionMode::Ee,
        }
    }

    pub fn gripper(&self) -> f64 {
        match self {
            ArmBlock::Joint { gripper, .. } | ArmBlock::Ee { gripper, .. } => *gripper,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ArmBlock::Joint { q, .. } => q.len() + 1,
            ArmBlock::Ee { .. } => 8,
        }
    }

    /// Joint: `q…, gripper`. End-effector: `px py pz qw qx qy qz gripper`.
    pub fn encode_into(&self, out: &mut Vec<f64>) {
        match self {
            ArmBlock::Joint { q, gripper } => {
                out.extend_from_slice(q);
                out.push(*gripper);
            }
            ArmBlock::Ee { pose, gripper } => {
                out.extend_from_slice(&pose.position.to_array());
                out.extend_from_slice(&pose.orientation.to_array());
                out.push(*gripper);
            }
        }
    }

    pub fn decode(mode: ActionMode, arm_dof: usize, v: &[f64]) -> Result<Self> {
        let want = arm_dim(mode, arm_dof);
        if v.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "arm block needs {want} values, got {}",
                v.len()
            )));
        }
        Ok(match mode {
            ActionMode::Joint => ArmBlock::Joint {
                q: v[..arm_dof].to_vec(),
                gripper: v[arm_dof],
            },
            ActionMode::Ee => ArmBlock::Ee {
                pose: Pose::new(
                    Vec3::new(v[0], v[1], v[2]),
                    UnitQuat::new(v[3], v[4], v[5], v[6]),
                ),
                gripper: v[7],
            },
        })
    }
}

pub fn arm_dim(mode: ActionMode, arm_dof: usize) -> usize {
    match mode {
        ActionMode::Joint => arm_dof + 1,
        ActionMode::Ee => 8,
    }
}

/// Per-arm blocks in `[left, right]` layout: used for proprioception and for
/// each step of an action chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bimanual {
    pub left: ArmBlock,
    pub right: ArmBlock,
}

pub type Proprio = Bimanual;

impl Bimanual {
    pub fn mode(&self) -> Result<ActionMode> {
        let m = self.left.mode();
        if self.right.mode() != m || self.left.dim() != self.right.dim() {
            return Err(Error::ModeMismatch("left and right blocks differ".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.left.dim() + self.right.dim()
    }

    pub fn encode_into(&self, out: &mut Vec<f64>) {
        self.left.encode_into(out);
        self.right.encode_into(out);
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(&mut out);
        out
    }

    pub fn decode(mode: ActionMode, arm_dof: usize, v: &[f64]) -> Result<Self> {
        let d = arm_dim(mode, arm_dof);
        if v.len() != 2 * d {
            return Err(Error::ShapeMismatch(format!(
                "bimanual block needs {} values, got {}",
                2 * d,
                v.len()
            )));
        }
        Ok(Self {
            left: ArmBlock::decode(mode, arm_dof, &v[..d])?,
            right: ArmBlock::decode(mode, arm_dof, &v[d..])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub image: Option<ImageGrid>,
    pub cloud: Option<PointCloud>,
    pub proprio: Proprio,
}

impl Frame {
    pub fn modality(&self) -> Result<Modality> {
        match (&self.image, &self.cloud) {
            (Some(_), None) => Ok(Modality::Image),
            (None, Some(_)) => Ok(Modality::PointCloud),
            _ => Err(Error::ModeMismatch(
                "a frame carries exactly one visual modality".into(),
            )),
        }
    }
}

/// The last `m` frames, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub steps: Vec<Bimanual>,
}

impl ActionChunk {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.steps {
            s.encode_into(&mut out);
        }
        out
    }

    pub fn decode(mode: ActionMode, arm_dof: usize, horizon: usize, v: &[f64]) -> Result<Self> {
        let step = 2 * arm_dim(mode, arm_dof);
        if v.len() != step * horizon {
            return Err(Error::ShapeMismatch(format!(
                "chunk of {horizon} steps needs {} values, got {}",
                step * horizon,
                v.len()
            )));
        }
        let steps = v
            .chunks(step)
            .map(|c| Bimanual::decode(mode, arm_dof, c))
            .collect::<Result<_>>()?;
        Ok(Self { steps })
    }
}

pub fn flip_image(img: &ImageGrid) -> ImageGrid {
    let (w, c) = (img.width, img.channels);
    let mut data = vec![0.0; img.data.len()];
    for row in 0..img.height {
        for col in 0..w {
            let src = (row * w + col) * c;
            let dst = (row * w + (w - 1 - col)) * c;
            data[dst..dst + c].copy_from_slice(&img.data[src..src + c]);
        }
    }
    ImageGrid {
        data,
        ..img.clone()
    }
}

pub fn reflect_pointcloud(pc: &PointCloud, t_cam: &RigidTransform) -> PointCloud {
    let mut out = PointCloud::new(pc.points.iter().map(|&p| reflect_point(p, t_cam)).collect());
    out.sort_canonical();
    out
}

/// The fully bound mirror operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryOp {
    pub t_cam: RigidTransform,
    /// Over the concatenated `[left joints, right joints]` vector.
    pub joint_map: JointSymmetryMap,
    pub modality: Modality,
    pub action_mode: ActionMode,
}

impl SymmetryOp {
    pub fn new(
        t_cam: RigidTransform,
        joint_map: JointSymmetryMap,
        modality: Modality,
        action_mode: ActionMode,
    ) -> Result<Self> {
        if !joint_map.len().is_multiple_of(2) {
            return Err(Error::Config("joint map must cover two equal arms".into()));
        }
        let joint_map = JointSymmetryMap::new(joint_map.partner, joint_map.signs)?;
        Ok(Self {
            t_cam,
            joint_map,
            modality,
            action_mode,
        })
    }

    pub fn arm_dof(&self) -> usize {
        self.joint_map.len() / 2
    }

    pub fn with_modes(&self, modality: Modality, action_mode: ActionMode) -> Self {
        Self {
            modality,
            action_mode,
            ..self.clone()
        }
    }

    fn check_block(&self, b: &Bimanual) -> Result<()> {
        let mode = b.mode()?;
        if mode != self.action_mode {
            return Err(Error::ModeMismatch(format!(
                "block is {}, operator expects {}",
                mode.as_str(),
                self.action_mode.as_str()
            )));
        }
        if mode == ActionMode::Joint && b.left.dim() != self.arm_dof() + 1 {
            return Err(Error::ModeMismatch(format!(
                "joint block has {} joints per arm, operator expects {}",
                b.left.dim() - 1,
                self.arm_dof()
            )));
        }
        Ok(())
    }

    /// Mirrors one `[left, right]` block (proprioception or one action step).
    pub fn transform_block(&self, b: &Bimanual) -> Result<Bimanual> {
        self.check_block(b)?;
        Ok(match (&b.left, &b.right) {
            (ArmBlock::Joint { q: ql, gripper: gl }, ArmBlock::Joint { q: qr, gripper: gr }) => {
                let n = ql.len();
                let mut full = Vec::with_capacity(2 * n);
                full.extend_from_slice(ql);
                full.extend_from_slice(qr);
                let mut out = vec![0.0; 2 * n];
                self.joint_map.apply_slice(&full, &mut out);
                let right_q = out.split_off(n);
                Bimanual {
                    left: ArmBlock::Joint { q: out, gripper: *gr },
                    right: ArmBlock::Joint {
                        q: right_q,
                        gripper: *gl,
                    },
                }
            }
            (ArmBlock::Ee { pose: pl, gripper: gl }, ArmBlock::Ee { pose: pr, gripper: gr }) => {
                Bimanual {
                    left: ArmBlock::Ee {
                        pose: reflect_pose(pr, &self.t_cam),
                        gripper: *gr,
                    },
                    right: ArmBlock::Ee {
                        pose: reflect_pose(pl, &self.t_cam),
                        gripper: *gl,
                    },
                }
            }
            _ => unreachable!("checked by mode()"),
        })
    }

    pub fn transform_frame(&self, f: &Frame) -> Result<Frame> {
        let modality = f.modality()?;
        if modality != self.modality {
            return Err(Error::ModeMismatch(format!(
                "frame is {}, operator expects {}",
                modality.as_str(),
                self.modality.as_str()
            )));
        }
        Ok(Frame {
            image: f.image.as_ref().map(flip_image),
            cloud: f.cloud.as_ref().map(|c| reflect_pointcloud(c, &self.t_cam)),
            proprio: self.transform_block(&f.proprio)?,
        })
    }

    pub fn transform_observation(&self, o: &Observation) -> Result<Observation> {
        Ok(Observation {
            frames: o
                .frames
                .iter()
                .map(|f| self.transform_frame(f))
                .collect::<Result<_>>()?,
        })
    }

    pub fn transform_action_chunk(&self, a: &ActionChunk) -> Result<ActionChunk> {
        Ok(ActionChunk {
            steps: a
                .steps
                .iter()
                .map(|s| self.transform_block(s))
                .collect::<Result<_>>()?,
        })
    }

    /// `S` on the flat encoding of one `[left, right]` block, as an affine
    /// map `v ↦ A·v + b`. Quaternion entries come out un-canonicalized; apply
    /// [`canonicalize_quaternions`] afterwards for an exact match with
    /// [`SymmetryOp::transform_block`].
    pub fn block_affine(&self) -> AffineMap {
        let dof = self.arm_dof();
        match self.action_mode {
            ActionMode::Joint => {
                let d = dof + 1;
                let mut map = AffineMap::zeros(2 * d);
                for i in 0..2 * dof {
                    let (arm, k) = (i / dof, i % dof);
                    let src = arm * d + k;
                    let p = self.joint_map.partner[i];
                    let dst = (p / dof) * d + p % dof;
                    map.set(dst, src, self.joint_map.signs[i]);
                }
                map.set(d + dof, dof, 1.0);
                map.set(dof, d + dof, 1.0);
                map
            }
            ActionMode::Ee => {
                let mut map = AffineMap::zeros(16);
                // Position: p ↦ Rcᵀ M Rc p + Rcᵀ (M t − t).
                let rot = |v: Vec3| {
                    let pc = self.t_cam.rotation.rotate(v).mirror_y();
                    self.t_cam.rotation.conjugate().rotate(pc)
                };
                let lin: Vec<Vec3> = [Vec3::X, Vec3::Y, Vec3::Z].into_iter().map(rot).collect();
                let offset = reflect_point(Vec3::ZERO, &self.t_cam).to_array();
                // Orientation: q ↦ qc* ⊗ F(qc ⊗ q), F = diag(1, -1, 1, -1).
                let qc = self.t_cam.rotation.to_array();
                let qc_conj = self.t_cam.rotation.conjugate().to_array();
                let quat_col = |k: usize| {
                    let mut e = [0.0; 4];
                    e[k] = 1.0;
                    let inner = quat_product(qc, e);
                    let flipped = [inner[0], -inner[1], inner[2], -inner[3]];
                    quat_product(qc_conj, flipped)
                };
                for (src_arm, dst_arm) in [(0usize, 1usize), (1, 0)] {
                    let (s, d) = (src_arm * 8, dst_arm * 8);
                    for (c, col) in lin.iter().enumerate() {
                        let col = col.to_array();
                        for r in 0..3 {
                            map.set(d + r, s + c, col[r]);
                        }
                    }
                    for r in 0..3 {
                        map.offset[d + r] = offset[r];
                    }
                    for c in 0..4 {
                        let col = quat_col(c);
                        for r in 0..4 {
                            map.set(d + 3 + r, s + 3 + c, col[r]);
                        }
                    }
                    map.set(d + 7, s + 7, 1.0);
                }
                map
            }
        }
    }

    /// Offsets of quaternion `w` components within one encoded block.
    pub fn quaternion_offsets(&self) -> Vec<usize> {
        match self.action_mode {
            ActionMode::Joint => vec![],
            ActionMode::Ee => vec![3, 11],
        }
    }
}

/// Dense `v ↦ A·v + b`, `A` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            matrix: vec![0.0; dim * dim],
            offset: vec![0.0; dim],
        }
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        self.matrix[row * self.dim + col] = v;
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|r| {
                let row = &self.matrix[r * self.dim..(r + 1) * self.dim];
                row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + self.offset[r]
            })
            .collect()
    }
}

/// Flips the sign of each 4-vector starting at `offsets` (within blocks of
/// `block` values) into canonical sign.
pub fn canonicalize_quaternions(v: &mut [f64], block: usize, offsets: &[usize]) {
    for chunk in v.chunks_mut(block) {
        for &o in offsets {
            let q = [chunk[o], chunk[o + 1], chunk[o + 2], chunk[o + 3]];
            if crate::geometry::canonical_sign(q) < 0.0 {
                for c in &mut chunk[o..o + 4] {
                    *c = -*c;
                }
            }
        }
    }
}

/// Sign to apply to each quaternion in `b` so that it lies in the same
/// hemisphere as the matching quaternion in `a` (`q` and `-q` are one
/// rotation). Entries outside quaternion blocks are `1.0`.
pub fn quaternion_alignment(a: &[f64], b: &[f64], block: usize, offsets: &[usize]) -> Vec<f64> {
    let mut signs = vec![1.0; b.len()];
    for (start, (ca, cb)) in (0..).step_by(block).zip(a.chunks(block).zip(b.chunks(block))) {
        for &o in offsets {
            let dot: f64 = (0..4).map(|k| ca[o + k] * cb[o + k]).sum();
            if dot < 0.0 {
                signs[start + o..start + o + 4].fill(-1.0);
            }
        }
    }
    signs
}

/// Mean over steps of the per-step L2 norm of the encoded difference, with
/// quaternions compared up to sign.
pub fn chunk_distance(a: &ActionChunk, b: &ActionChunk) -> Result<f64> {
    if a.horizon() != b.horizon() || a.horizon() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "chunks have {} and {} steps",
            a.horizon(),
            b.horizon()
        )));
    }
    let mut total = 0.0;
    for (sa, sb) in a.steps.iter().zip(&b.steps) {
        let mode = sa.mode()?;
        if mode != sb.mode()? || sa.dim() != sb.dim() {
            return Err(Error::ShapeMismatch("step layouts differ".into()));
        }
        let offsets: &[usize] = match mode {
            ActionMode::Joint => &[],
            ActionMode::Ee => &[3, 11],
        };
        let (ea, eb) = (sa.encode(), sb.encode());
        let signs = quaternion_alignment(&ea, &eb, ea.len(), offsets);
        total += ea
            .iter()
            .zip(&eb)
            .zip(&signs)
            .map(|((x, y), s)| (x - s * y).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    Ok(total / a.horizon() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuat;
    use crate::robot::{discover_joint_symmetry, fixtures, parse_robot, DiscoveryConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planar_map() -> JointSymmetryMap {
        let m = parse_robot(fixtures::PLANAR_PAIR).unwrap();
        discover_joint_symmetry(&m, "left_tool", "right_tool", &RigidTransform::IDENTITY, &DiscoveryConfig::default())
            .unwrap()
    }

    fn spatial_map() -> JointSymmetryMap {
        let m = parse_robot(fixtures::SPATIAL_PAIR).unwrap();
        discover_joint_symmetry(&m, "left_tool", "right_tool", &RigidTransform::IDENTITY, &DiscoveryConfig::default())
            .unwrap()
    }

    fn tilted_camera() -> RigidTransform {
        RigidTransform::new(
            UnitQuat::from_rpy(0.3, -0.2, 0.5),
            Vec3::new(0.1, -0.4, 0.9),
        )
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        Pose::new(
            Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            UnitQuat::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
        )
    }

    fn random_block(rng: &mut impl Rng, mode: ActionMode, dof: usize) -> Bimanual {
        let mut arm = || match mode {
            ActionMode::Joint => ArmBlock::Joint {
                q: (0..dof).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                gripper: rng.gen_range(0.0..1.0),
            },
            ActionMode::Ee => ArmBlock::Ee {
                pose: random_pose(rng),
                gripper: rng.gen_range(0.0..1.0),
            },
        };
        Bimanual {
            left: arm(),
            right: arm(),
        }
    }

    #[test]
    fn flip_image_examples() {
        let one = ImageGrid::new(1, 1, 1, vec![0.7]).unwrap();
        assert_eq!(flip_image(&one), one);
        let two = ImageGrid::new(2, 1, 1, vec![0.1, 0.9]).unwrap();
        assert_eq!(flip_image(&two).data, vec![0.9, 0.1]);
        let rgb = ImageGrid::new(3, 2, 2, (0..12).map(f64::from).collect()).unwrap();
        let f = flip_image(&rgb);
        assert_eq!(f.get(1, 0, 1), rgb.get(1, 2, 1));
        assert_eq!(flip_image(&f), rgb);
    }

    #[test]
    fn image_shape_checked() {
        assert!(ImageGrid::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn pointcloud_examples() {
        let id = RigidTransform::IDENTITY;
        let single = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0)]);
        assert_eq!(reflect_pointcloud(&single, &id).points, vec![Vec3::new(1.0, -2.0, 3.0)]);

        let mut on_plane = PointCloud::new(vec![
            Vec3::new(0.3, 0.0, 0.1),
            Vec3::new(-0.2, 0.0, 0.5),
            Vec3::new(0.3, 0.0, -0.4),
        ]);
        on_plane.sort_canonical();
        assert_eq!(reflect_pointcloud(&on_plane, &id), on_plane);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cam = tilted_camera();
        let mut cloud = PointCloud::new(
            (0..50)
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        );
        cloud.sort_canonical();
        let twice = reflect_pointcloud(&reflect_pointcloud(&cloud, &cam), &cam);
        for (a, b) in twice.points.iter().zip(&cloud.points) {
            assert!(a.max_abs_diff(*b) < 1e-12);
        }
    }

    #[test]
    fn joint_block_uses_discovered_map() {
        let s = SymmetryOp::new(RigidTransform::IDENTITY, planar_map(), Modality::Image, ActionMode::Joint).unwrap();
        let b = Bimanual {
            left: ArmBlock::Joint { q: vec![0.3, -0.1], gripper: 0.2 },
            right: ArmBlock::Joint { q: vec![0.0, 0.0], gripper: 0.9 },
        };
        let m = s.transform_block(&b).unwrap();
        assert_eq!(m.left, ArmBlock::Joint { q: vec![-0.0, -0.0], gripper: 0.9 });
        assert_eq!(m.right, ArmBlock::Joint { q: vec![-0.3, 0.1], gripper: 0.2 });
    }

    #[test]
    fn ee_symmetric_chunk_is_fixed_point() {
        let s = SymmetryOp::new(RigidTransform::IDENTITY, planar_map(), Modality::Image, ActionMode::Ee).unwrap();
        let step = Bimanual {
            left: ArmBlock::Ee { pose: Pose::new(Vec3::new(0.2, 0.3, 0.1), UnitQuat::IDENTITY), gripper: 0.5 },
            right: ArmBlock::Ee { pose: Pose::new(Vec3::new(0.2, -0.3, 0.1), UnitQuat::IDENTITY), gripper: 0.5 },
        };
        let chunk = ActionChunk { steps: vec![step.clone(), step] };
        assert_eq!(s.transform_action_chunk(&chunk).unwrap(), chunk);
    }

    #[test]
    fn zero_joint_chunk_stays_zero() {
        let s = SymmetryOp::new(RigidTransform::IDENTITY, spatial_map(), Modality::Image, ActionMode::Joint).unwrap();
        let step = Bimanual {
            left: ArmBlock::Joint { q: vec![0.0; 3], gripper: 0.0 },
            right: ArmBlock::Joint { q: vec![0.0; 3], gripper: 0.0 },
        };
        let chunk = ActionChunk { steps: vec![step; 4] };
        let m = s.transform_action_chunk(&chunk).unwrap();
        assert!(m.encode().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mode_mismatch_rejected() {
        let s = SymmetryOp::new(RigidTransform::IDENTITY, planar_map(), Modality::Image, ActionMode::Ee).unwrap();
        let b = Bimanual {
            left: ArmBlock::Joint { q: vec![0.0; 2], gripper: 0.0 },
            right: ArmBlock::Joint { q: vec![0.0; 2], gripper: 0.0 },
        };
        assert!(matches!(s.transform_block(&b), Err(Error::ModeMismatch(_))));
        let frame = Frame {
            image: None,
            cloud: Some(PointCloud::default()),
            proprio: b,
        };
        assert!(matches!(s.transform_frame(&frame), Err(Error::ModeMismatch(_))));
    }

    #[test]
    fn affine_map_matches_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for mode in [ActionMode::Joint, ActionMode::Ee] {
            let s = SymmetryOp::new(tilted_camera(), spatial_map(), Modality::PointCloud, mode).unwrap();
            let aff = s.block_affine();
            for _ in 0..200 {
                let b = random_block(&mut rng, mode, 3);
                let mut got = aff.apply(&b.encode());
                let n = got.len();
                canonicalize_quaternions(&mut got, n, &s.quaternion_offsets());
                let want = s.transform_block(&b).unwrap().encode();
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12, "{mode:?}: {got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn chunk_distance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ActionChunk { steps: vec![random_block(&mut rng, ActionMode::Joint, 2)] };
        assert_eq!(chunk_distance(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        if let ArmBlock::Joint { q, .. } = &mut b.steps[0].left {
            q[1] += 0.3;
        }
        assert!((chunk_distance(&a, &b).unwrap() - 0.3).abs() < 1e-12);
        let c = ActionChunk { steps: vec![a.steps[0].clone(); 2] };
        assert!(chunk_distance(&a, &c).is_err());

        let qa = [0.0, 0.0, 0.0, 0.5, 0.5, -0.5, 0.5, 1.0];
        let qb = [0.0, 0.0, 0.0, -0.5, -0.5, 0.5, -0.5, 1.0];
        let signs = quaternion_alignment(&qa, &qb, 8, &[3]);
        assert_eq!(signs, vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn distance_is_symmetric_and_s_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for mode in [ActionMode::Joint, ActionMode::Ee] {
            let s = SymmetryOp::new(tilted_camera(), spatial_map(), Modality::Image, mode).unwrap();
            for _ in 0..100 {
                let a = ActionChunk { steps: (0..3).map(|_| random_block(&mut rng, mode, 3)).collect() };
                let b = ActionChunk { steps: (0..3).map(|_| random_block(&mut rng, mode, 3)).collect() };
                let d = chunk_distance(&a, &b).unwrap();
                assert_eq!(d, chunk_distance(&b, &a).unwrap());
                let ds = chunk_distance(
                    &s.transform_action_chunk(&a).unwrap(),
                    &s.transform_action_chunk(&b).unwrap(),
                )
                .unwrap();
                assert!((d - ds).abs() < 1e-9, "{mode:?} {d} {ds}");
            }
        }
    }

    proptest! {
        #[test]
        fn action_chunk_involution(seed in any::<u64>(), ee in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mode = if ee { ActionMode::Ee } else { ActionMode::Joint };
            let s = SymmetryOp::new(tilted_camera(), spatial_map(), Modality::Image, mode).unwrap();
            let a = ActionChunk { steps: (0..4).map(|_| random_block(&mut rng, mode, 3)).collect() };
            let twice = s.transform_action_chunk(&s.transform_action_chunk(&a).unwrap()).unwrap();
            for (x, y) in twice.encode().iter().zip(a.encode()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn encode_decode_round_trip(seed in any::<u64>(), ee in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mode = if ee { ActionMode::Ee } else { ActionMode::Joint };
            let a = ActionChunk { steps: (0..3).map(|_| random_block(&mut rng, mode, 3)).collect() };
            let back = ActionChunk::decode(mode, 3, 3, &a.encode()).unwrap();
            for (x, y) in back.encode().iter().zip(a.encode()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
