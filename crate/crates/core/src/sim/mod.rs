//! Kinematic dual-arm table-top simulator.
//!
//! Two planar 3R arms mounted mirror-symmetrically on a torso move over a
//! table at `z = 0`. Joints track absolute targets under a per-step rate
//! limit. Grasping is attach/detach: a closed gripper within tolerance picks
//! up the free object, which then follows the end effector rigidly. There are
//! no contact dynamics, so the world commutes exactly with the mirror.

pub mod dataset;
mod expert;
mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compose, invert, reflect_pose, Pose, RigidTransform, UnitQuat, Vec3};
use crate::robot::{
    discover_joint_symmetry, fixtures, forward_kinematics, ik_dls, parse_robot, DiscoveryConfig,
    IkConfig, JointVector, RobotModel,
};
use crate::symmetry::{
    ActionChunk, ActionMode, ArmBlock, Bimanual, Frame, ImageGrid, Modality, Observation,
    PointCloud, SymmetryOp,
};

pub use expert::PlanarArm;
pub use render::{render_image, render_pointcloud, Scene, Segment};

/// Max joint motion per step, radians.
pub const RATE_LIMIT: f64 = 0.15;
/// Max gripper aperture change per step.
pub const GRIPPER_RATE: f64 = 0.25;
/// Apertures below this count as closed.
pub const GRIPPER_CLOSED: f64 = 0.5;
/// End-effector to object distance within which a closed gripper attaches, m.
pub const GRASP_TOLERANCE: f64 = 0.02;
pub const OBJECT_RADIUS: f64 = 0.03;
pub const LINK_HALF_WIDTH: f64 = 0.015;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Left, Arm::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Left => Arm::Right,
            Arm::Right => Arm::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideFilter {
    Left,
    Right,
    Both,
}

impl SideFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            SideFilter::Left => "left",
            SideFilter::Right => "right",
            SideFilter::Both => "both",
        }
    }

    pub fn mirrored(self) -> SideFilter {
        match self {
            SideFilter::Left => SideFilter::Right,
            SideFilter::Right => SideFilter::Left,
            SideFilter::Both => SideFilter::Both,
        }
    }
}

impl std::str::FromStr for SideFilter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(SideFilter::Left),
            "right" => Ok(SideFilter::Right),
            "both" => Ok(SideFilter::Both),
            _ => Err(Error::Config(format!("unknown side filter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    ReachTouch,
    PickPlace,
    Handover,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::ReachTouch, TaskId::PickPlace, TaskId::Handover];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::ReachTouch => "reach_touch",
            TaskId::PickPlace => "pick_place",
            TaskId::Handover => "handover",
        }
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reach_touch" => Ok(TaskId::ReachTouch),
            "pick_place" => Ok(TaskId::PickPlace),
            "handover" => Ok(TaskId::Handover),
            _ => Err(Error::Config(format!("unknown task `{s}`"))),
        }
    }
}

/// Object spawn box on one side; the other side is its mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnRegion {
    pub x: [f64; 2],
    /// Range of `|y|`, strictly positive so every spawn has a side.
    pub abs_y: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub side: SideFilter,
    pub spawn: SpawnRegion,
    /// Success tolerance, m.
    pub tolerance: f64,
    /// Episode length cap, steps.
    pub cap: usize,
}

/// Place target for pick-and-place, on the object's side.
pub const PLACE_TARGET: [f64; 2] = [0.44, 0.06];
/// Exchange point for handover, on the sagittal plane.
pub const EXCHANGE_POINT: [f64; 2] = [0.42, 0.0];
/// Handover target, on the side opposite the object.
pub const HANDOVER_TARGET: [f64; 2] = [0.32, 0.24];

impl TaskSpec {
    pub fn new(id: TaskId, side: SideFilter) -> Self {
        Self {
            id,
            side,
            spawn: SpawnRegion {
                x: [0.30, 0.38],
                abs_y: [0.18, 0.28],
            },
            tolerance: 0.02,
            cap: 200,
        }
    }

    /// Task target for an object spawned at `object`.
    pub fn target_for(&self, object: Vec3) -> Vec3 {
        let side = object.y.signum();
        match self.id {
            TaskId::ReachTouch => object,
            TaskId::PickPlace => Vec3::new(PLACE_TARGET[0], side * PLACE_TARGET[1], 0.0),
            TaskId::Handover => Vec3::new(HANDOVER_TARGET[0], -side * HANDOVER_TARGET[1], 0.0),
        }
    }
}

/// Coarse progress tag, maintained by [`Simulator::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Free,
    Held,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Joint positions per arm, `[left, right]`.
    pub q: [Vec<f64>; 2],
    /// Apertures in `[0, 1]`; `1` is open.
    pub gripper: [f64; 2],
    pub object: Pose,
    pub attached: Option<Arm>,
    pub target: Vec3,
    pub step: usize,
    pub phase: Phase,
}

impl WorldState {
    pub fn joint_vector(&self) -> JointVector {
        let mut v = self.q[0].clone();
        v.extend_from_slice(&self.q[1]);
        JointVector(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub modality: Modality,
    pub action_mode: ActionMode,
    /// Square image side, pixels.
    pub image_size: usize,
    pub n_points: usize,
    /// Observation history `m`.
    pub history: usize,
    /// Action horizon `n`.
    pub horizon: usize,
    /// Lateral field of view of the image, m.
    pub field_of_view: f64,
    pub point_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            modality: Modality::Image,
            action_mode: ActionMode::Joint,
            image_size: 64,
            n_points: 256,
            history: 2,
            horizon: 8,
            field_of_view: 0.8,
            point_seed: 0,
        }
    }
}

/// Head camera: looking down at the table from 1 m, with camera `y` along
/// the robot's lateral axis so the mirror plane is the camera `y`-normal
/// plane.
pub fn default_camera() -> RigidTransform {
    RigidTransform::new(UnitQuat::new(0.0, 0.0, 1.0, 0.0), Vec3::new(0.3, 0.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: RobotModel,
    pub tips: [String; 2],
    pub t_cam: RigidTransform,
    pub symmetry: SymmetryOp,
    pub cfg: SimConfig,
    /// Link indices along each arm, base first, tip last.
    arm_links: [Vec<usize>; 2],
    arms: [PlanarArm; 2],
    home: [Vec<f64>; 2],
    limits: Vec<[f64; 2]>,
    dof: usize,
}

impl Simulator {
    /// The bundled table-top robot with the default camera.
    pub fn tabletop(cfg: SimConfig) -> Result<Self> {
        let model = parse_robot(fixtures::TABLETOP_DUAL_ARM)?;
        Self::new(model, "left_ee", "right_ee", default_camera(), cfg)
    }

    pub fn new(
        model: RobotModel,
        left_tip: &str,
        right_tip: &str,
        t_cam: RigidTransform,
        cfg: SimConfig,
    ) -> Result<Self> {
        if cfg.modality == Modality::Image && cfg.image_size < 8 {
            return Err(Error::Config("image resolution must be at least 8x8".into()));
        }
        if cfg.history == 0 || cfg.horizon == 0 {
            return Err(Error::Config("history and horizon must be positive".into()));
        }
        let joint_map =
            discover_joint_symmetry(&model, left_tip, right_tip, &t_cam, &DiscoveryConfig::default())?;
        let dof = model.n_actuated() / 2;
        let mut arm_links: [Vec<usize>; 2] = Default::default();
        let mut arms = Vec::with_capacity(2);
        for (k, tip) in [left_tip, right_tip].into_iter().enumerate() {
            let chain = model.chain_to(tip)?;
            let actuated: Vec<usize> = chain.iter().filter_map(|&ji| model.actuated_index(ji)).collect();
            if actuated != (k * dof..(k + 1) * dof).collect::<Vec<_>>() {
                return Err(Error::Structure(
                    "actuated joints must list the left arm first, then the right arm".into(),
                ));
            }
            let first = chain
                .iter()
                .position(|&ji| model.joints[ji].is_actuated())
                .expect("arm has actuated joints");
            let link_index = |name: &str| model.links.iter().position(|l| l.name == name).unwrap();
            arm_links[k] = std::iter::once(link_index(&model.joints[chain[first]].child))
                .chain(chain[first + 1..].iter().map(|&ji| link_index(&model.joints[ji].child)))
                .collect();
            arms.push(PlanarArm::from_chain(&model, &chain[first..])?);
        }
        let mut arms: [PlanarArm; 2] = [arms[0], arms[1]];
        // The right elbow branch mirrors the left one through the joint map.
        arms[1].elbow = joint_map.signs[1] * arms[0].elbow;
        let symmetry = SymmetryOp::new(t_cam, joint_map, cfg.modality, cfg.action_mode)?;
        let limits = model.limits();
        let mut sim = Self {
            model,
            tips: [left_tip.to_string(), right_tip.to_string()],
            t_cam,
            symmetry,
            cfg,
            arm_links,
            arms,
            home: [vec![], vec![]],
            limits,
            dof,
        };
        let home_left = sim.solve_ik(Arm::Left, Vec3::new(0.18, 0.42, 0.0));
        let mut full = home_left.clone();
        full.extend(vec![0.0; dof]);
        let mut mirrored = vec![0.0; 2 * dof];
        sim.symmetry.joint_map.apply_slice(&full, &mut mirrored);
        sim.home = [home_left, mirrored[dof..].to_vec()];
        Ok(sim)
    }

    pub fn with_config(&self, cfg: SimConfig) -> Result<Self> {
        let mut s = self.clone();
        s.symmetry = s.symmetry.with_modes(cfg.modality, cfg.action_mode);
        s.cfg = cfg;
        Ok(s)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn home(&self) -> &[Vec<f64>; 2] {
        &self.home
    }

    pub fn arm(&self, arm: Arm) -> &PlanarArm {
        &self.arms[arm.index()]
    }

    fn arm_limits(&self, arm: Arm) -> &[[f64; 2]] {
        &self.limits[arm.index() * self.dof..(arm.index() + 1) * self.dof]
    }

    /// Analytic joint solution placing `arm`'s tool at `p` pointing along `+x`,
    /// clamped to limits.
    pub fn solve_ik(&self, arm: Arm, p: Vec3) -> Vec<f64> {
        let q = self.arms[arm.index()].inverse(p.x, p.y, 0.0);
        q.iter()
            .zip(self.arm_limits(arm))
            .map(|(v, [lo, hi])| v.clamp(*lo, *hi))
            .collect()
    }

    pub fn reset(&self, task: &TaskSpec, seed: u64) -> WorldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = match task.side {
            SideFilter::Left => 1.0,
            SideFilter::Right => -1.0,
            SideFilter::Both => {
                if rng.gen_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let x = rng.gen_range(task.spawn.x[0]..=task.spawn.x[1]);
        let y = side * rng.gen_range(task.spawn.abs_y[0]..=task.spawn.abs_y[1]);
        let object = Vec3::new(x, y, 0.0);
        WorldState {
            q: self.home.clone(),
            gripper: [1.0, 1.0],
            object: Pose::new(object, UnitQuat::IDENTITY),
            attached: None,
            target: task.target_for(object),
            step: 0,
            phase: Phase::Free,
        }
    }

    pub fn ee_pose(&self, state: &WorldState, arm: Arm) -> Pose {
        forward_kinematics(&self.model, &state.joint_vector(), &self.tips[arm.index()])
            .expect("tips validated at construction")
    }

    fn ee_poses(&self, q: &JointVector) -> [Pose; 2] {
        Arm::BOTH.map(|a| {
            forward_kinematics(&self.model, q, &self.tips[a.index()]).expect("tips validated")
        })
    }

    /// Planar distance from `arm`'s tool to the object.
    pub fn grasp_distance(&self, state: &WorldState, arm: Arm) -> f64 {
        planar_distance(self.ee_pose(state, arm).position, state.object.position)
    }

    /// Joint targets for one arm's command block.
    pub(crate) fn joint_target(&self, state: &WorldState, arm: Arm, block: &ArmBlock) -> Result<Vec<f64>> {
        let k = arm.index();
        let target = match block {
            ArmBlock::Joint { q, .. } => {
                if q.len() != self.dof {
                    return Err(Error::ShapeMismatch(format!(
                        "joint command has {} entries, arm has {}",
                        q.len(),
                        self.dof
                    )));
                }
                q.clone()
            }
            ArmBlock::Ee { pose, .. } => {
                let seed = state.joint_vector();
                let out = ik_dls(&self.model, &seed, &self.tips[k], pose, &IkConfig::default())?;
                out.q.0[k * self.dof..(k + 1) * self.dof].to_vec()
            }
        };
        Ok(target)
    }

    /// Advances one control step toward the absolute command `cmd`.
    pub fn step(&self, state: &WorldState, cmd: &Bimanual) -> Result<WorldState> {
        let mut flat = Vec::new();
        cmd.encode_into(&mut flat);
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("command contains a non-finite value".into()));
        }
        let before = self.ee_poses(&state.joint_vector());
        let mut next = state.clone();
        for (arm, block) in [(Arm::Left, &cmd.left), (Arm::Right, &cmd.right)] {
            let k = arm.index();
            let target = self.joint_target(state, arm, block)?;
            for ((q, t), [lo, hi]) in next.q[k].iter_mut().zip(&target).zip(self.arm_limits(arm)) {
                let t = t.clamp(*lo, *hi);
                *q = (*q + (t - *q).clamp(-RATE_LIMIT, RATE_LIMIT)).clamp(*lo, *hi);
            }
            let g = block.gripper().clamp(0.0, 1.0);
            let cur = state.gripper[k];
            next.gripper[k] = cur + (g - cur).clamp(-GRIPPER_RATE, GRIPPER_RATE);
        }
        let after = self.ee_poses(&next.joint_vector());

        if let Some(holder) = state.attached {
            let k = holder.index();
            let moved = compose(&after[k].to_transform(), &invert(&before[k].to_transform()));
            next.object = compose(&moved, &state.object.to_transform()).as_pose();
            if next.gripper[k] >= GRIPPER_CLOSED {
                next.attached = None;
                next.object.position.z = 0.0;
            }
        }
        if next.attached.is_none() {
            let candidates: Vec<(Arm, f64)> = Arm::BOTH
                .into_iter()
                .filter(|a| next.gripper[a.index()] < GRIPPER_CLOSED && state.attached != Some(*a))
                .map(|a| (a, planar_distance(after[a.index()].position, next.object.position)))
                .filter(|(_, d)| *d <= GRASP_TOLERANCE)
                .collect();
            // Nearest closed gripper wins; an exact tie goes to the left arm.
            let winner = candidates
                .iter()
                .copied()
                .reduce(|best, c| if c.1 < best.1 { c } else { best });
            if let Some((arm, _)) = winner {
                next.attached = Some(arm);
            }
        }
        next.step = state.step + 1;
        next.phase = match next.attached {
            Some(_) => Phase::Held,
            None => Phase::Free,
        };
        Ok(next)
    }

    pub fn success(&self, state: &WorldState, task: &TaskSpec) -> bool {
        if state.attached.is_some() || state.step > task.cap {
            return false;
        }
        match task.id {
            TaskId::ReachTouch => Arm::BOTH
                .into_iter()
                .any(|a| self.grasp_distance(state, a) <= task.tolerance),
            TaskId::PickPlace | TaskId::Handover => {
                planar_distance(state.object.position, state.target) <= task.tolerance
            }
        }
    }

    /// `S` applied to the world: arms exchange through the joint map,
    /// grippers swap, the object and target reflect.
    pub fn mirror_state(&self, state: &WorldState) -> WorldState {
        let full = state.joint_vector();
        let mut out = vec![0.0; full.len()];
        self.symmetry.joint_map.apply_slice(&full.0, &mut out);
        let right = out.split_off(self.dof);
        let target = reflect_pose(&Pose::new(state.target, UnitQuat::IDENTITY), &self.t_cam).position;
        WorldState {
            q: [out, right],
            gripper: [state.gripper[1], state.gripper[0]],
            object: reflect_pose(&state.object, &self.t_cam),
            attached: state.attached.map(Arm::other),
            target,
            step: state.step,
            phase: state.phase,
        }
    }

    /// Segments of both arms and the object disc.
    pub fn scene(&self, state: &WorldState) -> Scene {
        let q = state.joint_vector();
        let mut segments = Vec::new();
        for arm in Arm::BOTH {
            let pts: Vec<Vec3> = self.arm_links[arm.index()]
                .iter()
                .map(|&li| {
                    forward_kinematics(&self.model, &q, &self.model.links[li].name)
                        .expect("link exists")
                        .position
                })
                .collect();
            for (stratum, w) in pts.windows(2).enumerate() {
                segments.push(Segment {
                    a: w[0],
                    b: w[1],
                    stratum,
                });
            }
        }
        Scene {
            segments,
            discs: vec![(state.object.position, OBJECT_RADIUS)],
        }
    }

    pub fn render_image(&self, state: &WorldState) -> ImageGrid {
        render_image(
            &self.scene(state),
            &self.t_cam,
            self.cfg.image_size,
            self.cfg.image_size,
            self.cfg.field_of_view,
        )
    }

    pub fn render_pointcloud(&self, state: &WorldState) -> PointCloud {
        render_pointcloud(&self.scene(state), self.cfg.n_points, self.cfg.point_seed)
    }

    pub fn proprio(&self, state: &WorldState) -> Bimanual {
        let block = |arm: Arm| {
            let k = arm.index();
            match self.cfg.action_mode {
                ActionMode::Joint => ArmBlock::Joint {
                    q: state.q[k].clone(),
                    gripper: state.gripper[k],
                },
                ActionMode::Ee => ArmBlock::Ee {
                    pose: self.ee_pose(state, arm),
                    gripper: state.gripper[k],
                },
            }
        };
        Bimanual {
            left: block(Arm::Left),
            right: block(Arm::Right),
        }
    }

    pub fn frame(&self, state: &WorldState) -> Frame {
        let (image, cloud) = match self.cfg.modality {
            Modality::Image => (Some(self.render_image(state)), None),
            Modality::PointCloud => (None, Some(self.render_pointcloud(state))),
        };
        Frame {
            image,
            cloud,
            proprio: self.proprio(state),
        }
    }

    /// Command block that holds `arm` where it is.
    pub fn hold(&self, state: &WorldState, arm: Arm) -> ArmBlock {
        let k = arm.index();
        match self.cfg.action_mode {
            ActionMode::Joint => ArmBlock::Joint {
                q: state.q[k].clone(),
                gripper: state.gripper[k],
            },
            ActionMode::Ee => ArmBlock::Ee {
                pose: self.ee_pose(state, arm),
                gripper: state.gripper[k],
            },
        }
    }

    /// Command block from joint targets, in the configured action mode.
    pub fn command_block(&self, arm: Arm, q: Vec<f64>, gripper: f64) -> ArmBlock {
        match self.cfg.action_mode {
            ActionMode::Joint => ArmBlock::Joint { q, gripper },
            ActionMode::Ee => {
                let mut full = vec![0.0; 2 * self.dof];
                let k = arm.index();
                full[k * self.dof..(k + 1) * self.dof].copy_from_slice(&q);
                let pose = forward_kinematics(&self.model, &JointVector(full), &self.tips[k])
                    .expect("tips validated");
                ArmBlock::Ee { pose, gripper }
            }
        }
    }

    /// Per-step scripted command.
    pub fn expert_command(&self, state: &WorldState, task: &TaskSpec) -> Bimanual {
        expert::command(self, state, task)
    }

    /// The next `n` expert commands, obtained by rolling the expert forward
    /// on a copy of the state.
    pub fn scripted_expert(&self, state: &WorldState, task: &TaskSpec) -> Result<ActionChunk> {
        let mut s = state.clone();
        let mut steps = Vec::with_capacity(self.cfg.horizon);
        for _ in 0..self.cfg.horizon {
            let cmd = self.expert_command(&s, task);
            s = self.step(&s, &cmd)?;
            steps.push(cmd);
        }
        Ok(ActionChunk { steps })
    }

    /// Runs `controller` from `state` until success or the cap.
    pub fn rollout(
        &self,
        task: &TaskSpec,
        mut state: WorldState,
        controller: &mut dyn Controller,
    ) -> Result<Episode> {
        let mut history: Vec<Frame> = Vec::new();
        let mut states = vec![state.clone()];
        while state.step < task.cap && !self.success(&state, task) {
            let frame = self.frame(&state);
            if history.is_empty() {
                history = vec![frame; self.cfg.history];
            } else {
                history.remove(0);
                history.push(frame);
            }
            let obs = Observation {
                frames: history.clone(),
            };
            let cmd = controller.act(self, &state, &obs)?;
            state = self.step(&state, &cmd)?;
            states.push(state.clone());
        }
        let success = self.success(&state, task);
        if success {
            states.last_mut().expect("non-empty").phase = Phase::Done;
        }
        Ok(Episode { states, success })
    }
}

/// Closed-loop command source for [`Simulator::rollout`].
pub trait Controller {
    fn act(&mut self, sim: &Simulator, state: &WorldState, obs: &Observation) -> Result<Bimanual>;
}

/// The scripted expert as a controller.
#[derive(Debug, Clone, Copy)]
pub struct ExpertController {
    pub task: TaskSpec,
}

impl Controller for ExpertController {
    fn act(&mut self, sim: &Simulator, state: &WorldState, _obs: &Observation) -> Result<Bimanual> {
        Ok(sim.expert_command(state, &self.task))
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub states: Vec<WorldState>,
    pub success: bool,
}

pub fn planar_distance(a: Vec3, b: Vec3) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}
