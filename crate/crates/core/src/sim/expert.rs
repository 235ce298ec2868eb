//! Scripted experts: waypoint phase machines over the world state.
//!
//! Every decision reads only mirror-covariant quantities (distances, the
//! object's lateral offset from each tool, the target side), and joint
//! targets come from a closed-form planar solver whose elbow branch is
//! mirrored between the arms. The expert therefore commutes with `S` except
//! on exact lateral ties, which go to the left arm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Vec3, UnitQuat};
use crate::robot::{forward_kinematics, JointKind, JointVector, RobotModel};
use crate::symmetry::Bimanual;

use super::{planar_distance, Arm, Simulator, TaskId, TaskSpec, WorldState, EXCHANGE_POINT};

/// Tool-to-object distance at which the expert closes the gripper, m.
const CLOSE_RADIUS: f64 = 0.04;
/// Object-to-goal distance at which the expert opens the gripper, m.
const RELEASE_RADIUS: f64 = 0.015;
/// Largest per-step joint change the expert commands, rad.
pub const EXPERT_STEP: f64 = 0.05;

/// A 3R arm rotating about vertical axes, links along the local `x` axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm {
    pub base: Vec3,
    pub lengths: [f64; 3],
    /// `-1` or `+1`: which elbow branch [`PlanarArm::inverse`] returns.
    pub elbow: f64,
}

impl PlanarArm {
    /// Reads a chain `[revolute, revolute, revolute, fixed tool]` starting at
    /// the first actuated joint.
    pub fn from_chain(model: &RobotModel, chain: &[usize]) -> Result<Self> {
        let unsupported = || Error::Structure("simulator arms must be planar 3R chains with z axes".into());
        if chain.len() != 4 {
            return Err(unsupported());
        }
        let joints: Vec<_> = chain.iter().map(|&ji| &model.joints[ji]).collect();
        for (i, j) in joints.iter().enumerate() {
            let kind_ok = if i < 3 {
                j.kind == JointKind::Revolute && j.axis.max_abs_diff(Vec3::Z) < 1e-12
            } else {
                j.kind == JointKind::Fixed
            };
            let flat = j.origin_rpy.iter().all(|v| *v == 0.0)
                && j.origin_xyz[2] == 0.0
                && (i == 0 || j.origin_xyz[1] == 0.0);
            if !kind_ok || !flat {
                return Err(unsupported());
            }
        }
        let zero = JointVector::zeros(model.n_actuated());
        let mount = forward_kinematics(model, &zero, &joints[0].child)?;
        if mount.orientation.rotation_gap(UnitQuat::IDENTITY) > 1e-12 || mount.position.z != 0.0 {
            return Err(unsupported());
        }
        Ok(Self {
            base: mount.position,
            lengths: [joints[1].origin_xyz[0], joints[2].origin_xyz[0], joints[3].origin_xyz[0]],
            elbow: -1.0,
        })
    }

    /// Joint angles putting the tool at `(x, y)` with heading `yaw`.
    /// Unreachable targets are approached along the straight-arm direction.
    pub fn inverse(&self, x: f64, y: f64, yaw: f64) -> Vec<f64> {
        let [a1, a2, a3] = self.lengths;
        let wx = x - a3 * yaw.cos() - self.base.x;
        let wy = y - a3 * yaw.sin() - self.base.y;
        let c2 = ((wx * wx + wy * wy - a1 * a1 - a2 * a2) / (2.0 * a1 * a2)).clamp(-1.0, 1.0);
        let q2 = self.elbow * c2.acos();
        let q1 = wy.atan2(wx) - (a2 * q2.sin()).atan2(a1 + a2 * q2.cos());
        let q3 = wrap_angle(yaw - q1 - q2);
        vec![q1, q2, q3]
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut v = a % two_pi;
    if v > std::f64::consts::PI {
        v -= two_pi;
    } else if v < -std::f64::consts::PI {
        v += two_pi;
    }
    v
}

/// Arm whose tool is laterally nearer the object; ties go left.
fn nearer_arm(sim: &Simulator, state: &WorldState) -> Arm {
    let y = state.object.position.y;
    let dl = (y - sim.ee_pose(state, Arm::Left).position.y).abs();
    let dr = (y - sim.ee_pose(state, Arm::Right).position.y).abs();
    if dr < dl {
        Arm::Right
    } else {
        Arm::Left
    }
}

/// Tool position that brings the held object onto `goal` with the tool
/// heading along `+x`.
fn carry_target(sim: &Simulator, state: &WorldState, arm: Arm, goal: Vec3) -> Vec3 {
    let ee = sim.ee_pose(state, arm);
    let local = ee.orientation.conjugate().rotate(state.object.position - ee.position);
    Vec3::new(goal.x - local.x, goal.y - local.y, 0.0)
}

type Plan = [Option<(Vec<f64>, f64)>; 2];

fn approach(sim: &Simulator, state: &WorldState, arm: Arm, plan: &mut Plan) {
    let q = sim.solve_ik(arm, state.object.position);
    let g = if sim.grasp_distance(state, arm) <= CLOSE_RADIUS { 0.0 } else { 1.0 };
    plan[arm.index()] = Some((q, g));
}

fn carry(sim: &Simulator, state: &WorldState, arm: Arm, goal: Vec3, plan: &mut Plan) {
    let q = sim.solve_ik(arm, carry_target(sim, state, arm, goal));
    let g = if planar_distance(state.object.position, goal) <= RELEASE_RADIUS { 1.0 } else { 0.0 };
    plan[arm.index()] = Some((q, g));
}

pub(super) fn command(sim: &Simulator, state: &WorldState, task: &TaskSpec) -> Bimanual {
    let mut plan: Plan = [None, None];
    let obj = state.object.position;
    match task.id {
        TaskId::ReachTouch => approach(sim, state, nearer_arm(sim, state), &mut plan),
        TaskId::PickPlace => match state.attached {
            Some(holder) => carry(sim, state, holder, state.target, &mut plan),
            None if planar_distance(obj, state.target) <= task.tolerance => {}
            None => approach(sim, state, nearer_arm(sim, state), &mut plan),
        },
        TaskId::Handover => {
            let receiver = if state.target.y > 0.0 { Arm::Left } else { Arm::Right };
            let giver = receiver.other();
            let exchange = Vec3::new(EXCHANGE_POINT[0], EXCHANGE_POINT[1], 0.0);
            let exchanging = planar_distance(obj, exchange) <= CLOSE_RADIUS
                && sim.grasp_distance(state, receiver) <= CLOSE_RADIUS;
            match state.attached {
                Some(a) if a == receiver => carry(sim, state, receiver, state.target, &mut plan),
                _ if exchanging => {
                    plan[giver.index()] = Some((state.q[giver.index()].clone(), 1.0));
                    plan[receiver.index()] = Some((sim.solve_ik(receiver, obj), 0.0));
                }
                Some(_) => {
                    let q = sim.solve_ik(giver, carry_target(sim, state, giver, exchange));
                    plan[giver.index()] = Some((q, 0.0));
                    plan[receiver.index()] = Some((sim.solve_ik(receiver, exchange), 1.0));
                }
                None if planar_distance(obj, state.target) <= task.tolerance => {}
                None => approach(sim, state, giver, &mut plan),
            }
        }
    }
    let block = |arm: Arm, p: &Option<(Vec<f64>, f64)>| {
        let (goal, g) = match p {
            Some((q, g)) => (q.clone(), *g),
            None => (sim.home()[arm.index()].clone(), 1.0),
        };
        let q = state.q[arm.index()]
            .iter()
            .zip(&goal)
            .map(|(c, t)| c + (t - c).clamp(-EXPERT_STEP, EXPERT_STEP))
            .collect();
        sim.command_block(arm, q, g)
    };
    Bimanual {
        left: block(Arm::Left, &plan[0]),
        right: block(Arm::Right, &plan[1]),
    }
}
