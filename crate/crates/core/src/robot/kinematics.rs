use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{compose, Pose, RigidTransform, UnitQuat};

use super::{Joint, JointKind, JointVector, RobotModel};

fn joint_motion(j: &Joint, q: f64) -> RigidTransform {
    match j.kind {
        JointKind::Revolute => RigidTransform::from_rotation(UnitQuat::from_axis_angle(j.axis, q)),
        JointKind::Prismatic => RigidTransform::from_translation(j.axis.scale(q)),
        JointKind::Fixed => RigidTransform::IDENTITY,
    }
}

fn check_len(model: &RobotModel, q: &JointVector) -> Result<()> {
    if q.len() != model.n_actuated() {
        return Err(Error::LengthMismatch {
            expected: model.n_actuated(),
            actual: q.len(),
        });
    }
    Ok(())
}

fn joint_value(model: &RobotModel, q: &JointVector, ji: usize) -> f64 {
    model.actuated_index(ji).map_or(0.0, |k| q.0[k])
}

/// Pose of `tip` in the root frame.
pub fn forward_kinematics(model: &RobotModel, q: &JointVector, tip: &str) -> Result<Pose> {
    check_len(model, q)?;
    let mut t = RigidTransform::IDENTITY;
    for ji in model.chain_to(tip)? {
        let j = &model.joints[ji];
        t = compose(&t, &j.origin);
        t = compose(&t, &joint_motion(j, joint_value(model, q, ji)));
    }
    Ok(t.as_pose())
}

/// Root-frame transform of every link, indexed like `model.links`.
pub fn link_transforms(model: &RobotModel, q: &JointVector) -> Result<Vec<RigidTransform>> {
    check_len(model, q)?;
    model
        .links
        .iter()
        .map(|l| forward_kinematics(model, q, &l.name).map(|p| p.to_transform()))
        .collect()
}

/// Geometric Jacobian of `tip`: one `[v; ω]` column per actuated joint,
/// zero for joints off the chain.
pub fn jacobian(model: &RobotModel, q: &JointVector, tip: &str) -> Result<Vec<[f64; 6]>> {
    check_len(model, q)?;
    let chain = model.chain_to(tip)?;
    let mut cols = vec![[0.0; 6]; model.n_actuated()];
    let mut frames = Vec::with_capacity(chain.len());
    let mut t = RigidTransform::IDENTITY;
    for &ji in &chain {
        let j = &model.joints[ji];
        t = compose(&t, &j.origin);
        frames.push((ji, t));
        t = compose(&t, &joint_motion(j, joint_value(model, q, ji)));
    }
    let p_tip = t.translation;
    for (ji, frame) in frames {
        let j = &model.joints[ji];
        let Some(k) = model.actuated_index(ji) else {
            continue;
        };
        let a = frame.rotation.rotate(j.axis);
        let col = match j.kind {
            JointKind::Revolute => {
                let v = a.cross(p_tip - frame.translation);
                [v.x, v.y, v.z, a.x, a.y, a.z]
            }
            JointKind::Prismatic => [a.x, a.y, a.z, 0.0, 0.0, 0.0],
            JointKind::Fixed => continue,
        };
        cols[k] = col;
    }
    Ok(cols)
}

#[derive(Debug, Clone, Copy)]
pub struct IkConfig {
    /// λ in `Jᵀ(JJᵀ + λ²I)⁻¹e`.
    pub damping: f64,
    pub iterations: usize,
    /// Early exit once the combined error norm falls below this.
    pub tolerance: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 1e-2,
            iterations: 20,
            tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IkOutcome {
    pub q: JointVector,
    pub error: f64,
    /// False when the solver diverged and `q` is the unchanged seed.
    pub improved: bool,
}

fn pose_error(target: &Pose, current: &Pose) -> [f64; 6] {
    let dp = target.position - current.position;
    let dr = target.orientation.mul(current.orientation.conjugate()).log();
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
}

fn norm6(e: &[f64; 6]) -> f64 {
    e.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Damped-least-squares IK for `tip`, moving only joints on its chain and
/// clamping to limits. Falls back to the seed when the error grows.
pub fn ik_dls(
    model: &RobotModel,
    seed: &JointVector,
    tip: &str,
    target: &Pose,
    cfg: &IkConfig,
) -> Result<IkOutcome> {
    let limits = model.limits();
    let mut q = seed.clone();
    let start_err = norm6(&pose_error(target, &forward_kinematics(model, &q, tip)?));
    let mut err = start_err;
    let lambda2 = cfg.damping * cfg.damping;
    for _ in 0..cfg.iterations {
        if err < cfg.tolerance {
            break;
        }
        let e = pose_error(target, &forward_kinematics(model, &q, tip)?);
        let cols = jacobian(model, &q, tip)?;
        let n = cols.len();
        let jm = DMatrix::from_fn(6, n, |r, c| cols[c][r]);
        let mut jjt = &jm * jm.transpose();
        for i in 0..6 {
            jjt[(i, i)] += lambda2;
        }
        let Some(chol) = jjt.cholesky() else {
            break;
        };
        let y = chol.solve(&DVector::from_row_slice(&e));
        let dq = jm.transpose() * y;
        for k in 0..n {
            q.0[k] = (q.0[k] + dq[k]).clamp(limits[k][0], limits[k][1]);
        }
        err = norm6(&pose_error(target, &forward_kinematics(model, &q, tip)?));
    }
    if !err.is_finite() || err > start_err {
        return Ok(IkOutcome {
            q: seed.clone(),
            error: start_err,
            improved: false,
        });
    }
    Ok(IkOutcome {
        q,
        error: err,
        improved: true,
    })
}
