//! Joint-space mirror map `q ↦ P·D·q`.
//!
//! Joints of the two arm chains are paired by depth (`P`). Each pair gets a
//! sign (`D`) by probing: with every joint at zero, one left joint is moved by
//! `δ` and the sign whose partner motion reproduces the mirrored tip pose is
//! kept. The resulting map is then validated on random configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{reflect_pose, Pose, RigidTransform};

use super::{forward_kinematics, JointVector, RobotModel};

/// Signed permutation over actuated-joint indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSymmetryMap {
    /// `partner[i]` is the index joint `i` maps onto.
    pub partner: Vec<usize>,
    /// Diagonal of `D`, each `+1.0` or `-1.0`.
    pub signs: Vec<f64>,
}

impl JointSymmetryMap {
    /// Builds a map and checks that it is an involution with paired-equal signs.
    pub fn new(partner: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        let n = partner.len();
        if signs.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: signs.len(),
            });
        }
        for (i, &p) in partner.iter().enumerate() {
            if p >= n || partner[p] != i {
                return Err(Error::Config(format!(
                    "joint pairing is not an involution at index {i}"
                )));
            }
            if signs[i] != signs[p] || signs[i].abs() != 1.0 {
                return Err(Error::Config(format!(
                    "joint signs at {i} and {p} must be equal and ±1"
                )));
            }
        }
        Ok(Self { partner, signs })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            partner: (0..n).collect(),
            signs: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.partner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partner.is_empty()
    }

    /// `out[P(i)] = signs[i] · q[i]`, on a raw slice.
    pub fn apply_slice(&self, q: &[f64], out: &mut [f64]) {
        for (i, &p) in self.partner.iter().enumerate() {
            out[p] = self.signs[i] * q[i];
        }
    }
}

pub fn apply_joint_symmetry(map: &JointSymmetryMap, q: &JointVector) -> Result<JointVector> {
    if q.len() != map.len() {
        return Err(Error::LengthMismatch {
            expected: map.len(),
            actual: q.len(),
        });
    }
    let mut out = vec![0.0; q.len()];
    map.apply_slice(&q.0, &mut out);
    Ok(JointVector(out))
}

#[derive(Debug, Clone, Copy)]
pub struct DiscoveryConfig {
    /// Probe displacement, radians or meters.
    pub delta: f64,
    /// Validation configurations, at least 16.
    pub samples: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            samples: 64,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCertificate {
    pub samples: usize,
    /// Max tip position discrepancy, meters.
    pub max_position_error: f64,
    /// Max component-wise quaternion discrepancy.
    pub max_orientation_error: f64,
}

impl SymmetryCertificate {
    pub fn max_error(&self) -> f64 {
        self.max_position_error.max(self.max_orientation_error)
    }
}

struct ArmChains {
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Actuated indices along each arm below the shared trunk.
fn arm_chains(model: &RobotModel, left_tip: &str, right_tip: &str) -> Result<ArmChains> {
    let lc = model.chain_to(left_tip)?;
    let rc = model.chain_to(right_tip)?;
    let shared = lc.iter().zip(&rc).take_while(|(a, b)| a == b).count();
    for &ji in &lc[..shared] {
        if model.joints[ji].is_actuated() {
            return Err(Error::Structure(format!(
                "actuated joint `{}` is shared by both arms",
                model.joints[ji].name
            )));
        }
    }
    let act = |chain: &[usize]| -> Vec<usize> {
        chain.iter().filter_map(|&ji| model.actuated_index(ji)).collect()
    };
    let left = act(&lc[shared..]);
    let right = act(&rc[shared..]);
    if left.len() != right.len() {
        return Err(Error::Structure(format!(
            "arm chains have {} and {} actuated joints",
            left.len(),
            right.len()
        )));
    }
    if left.len() + right.len() != model.n_actuated() {
        return Err(Error::Structure(
            "actuated joints outside the two arm chains are not supported".into(),
        ));
    }
    Ok(ArmChains { left, right })
}

fn pose_gap(a: &Pose, b: &Pose) -> (f64, f64) {
    (
        a.position.max_abs_diff(b.position),
        a.orientation.rotation_gap(b.orientation),
    )
}

/// Mirror discrepancy at `q`: FK of each tip under `PDq` against the
/// reflected FK of its partner tip under `q`.
fn mirror_gap(
    model: &RobotModel,
    map: &JointSymmetryMap,
    q: &JointVector,
    left_tip: &str,
    right_tip: &str,
    plane: &RigidTransform,
) -> Result<(f64, f64)> {
    let mirrored = apply_joint_symmetry(map, q)?;
    let mut worst = (0.0f64, 0.0f64);
    for (src, dst) in [(left_tip, right_tip), (right_tip, left_tip)] {
        let expected = reflect_pose(&forward_kinematics(model, q, src)?, plane);
        let got = forward_kinematics(model, &mirrored, dst)?;
        let (p, o) = pose_gap(&expected, &got);
        worst = (worst.0.max(p), worst.1.max(o));
    }
    Ok(worst)
}

fn sample_configuration(model: &RobotModel, rng: &mut impl Rng) -> JointVector {
    JointVector(
        model
            .limits()
            .iter()
            .map(|&[lo, hi]| {
                let (lo, hi) = (lo.max(-std::f64::consts::PI), hi.min(std::f64::consts::PI));
                if hi > lo {
                    rng.gen_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect(),
    )
}

pub fn discover_joint_symmetry(
    model: &RobotModel,
    left_tip: &str,
    right_tip: &str,
    plane: &RigidTransform,
    cfg: &DiscoveryConfig,
) -> Result<JointSymmetryMap> {
    if cfg.samples < 16 {
        return Err(Error::Config(format!(
            "symmetry discovery needs at least 16 samples, got {}",
            cfg.samples
        )));
    }
    let chains = arm_chains(model, left_tip, right_tip)?;
    let n = model.n_actuated();
    let zero = JointVector::zeros(n);

    let home_gap = {
        let expected = reflect_pose(&forward_kinematics(model, &zero, left_tip)?, plane);
        pose_gap(&expected, &forward_kinematics(model, &zero, right_tip)?)
    };
    if home_gap.0.max(home_gap.1) > cfg.tolerance {
        return Err(Error::Asymmetry(format!(
            "tips `{left_tip}` and `{right_tip}` are not mirror images at the zero configuration \
             (position gap {:.3e} m, orientation gap {:.3e})",
            home_gap.0, home_gap.1
        )));
    }

    let mut partner: Vec<usize> = (0..n).collect();
    let mut signs = vec![1.0; n];
    for (&li, &ri) in chains.left.iter().zip(&chains.right) {
        partner[li] = ri;
        partner[ri] = li;
        let mut probe = zero.clone();
        probe.0[li] = cfg.delta;
        let expected = reflect_pose(&forward_kinematics(model, &probe, left_tip)?, plane);
        let mut best: Option<(f64, f64)> = None;
        for sign in [1.0, -1.0] {
            let mut candidate = zero.clone();
            candidate.0[ri] = sign * cfg.delta;
            let (p, o) = pose_gap(&expected, &forward_kinematics(model, &candidate, right_tip)?);
            let gap = p.max(o);
            if gap <= cfg.tolerance && best.is_none_or(|(_, g)| gap < g) {
                best = Some((sign, gap));
            }
        }
        let Some((sign, _)) = best else {
            return Err(Error::Asymmetry(format!(
                "no sign of joint `{}` reproduces the mirror of joint `{}`",
                model.actuated_joints().nth(ri).map_or("?", |j| j.name.as_str()),
                model.actuated_joints().nth(li).map_or("?", |j| j.name.as_str()),
            )));
        };
        signs[li] = sign;
        signs[ri] = sign;
    }
    let map = JointSymmetryMap::new(partner, signs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.samples {
        let q = sample_configuration(model, &mut rng);
        let (p, o) = mirror_gap(model, &map, &q, left_tip, right_tip, plane)?;
        if p.max(o) > cfg.tolerance {
            return Err(Error::Asymmetry(format!(
                "per-joint signs fail on a sampled configuration (position gap {p:.3e} m, \
                 orientation gap {o:.3e})"
            )));
        }
    }
    Ok(map)
}

/// Worst mirror discrepancy of `map` over `samples` random configurations
/// drawn from `seed`.
pub fn symmetry_certificate(
    model: &RobotModel,
    map: &JointSymmetryMap,
    left_tip: &str,
    right_tip: &str,
    plane: &RigidTransform,
    samples: usize,
    seed: u64,
) -> Result<SymmetryCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cert = SymmetryCertificate {
        samples,
        max_position_error: 0.0,
        max_orientation_error: 0.0,
    };
    for _ in 0..samples {
        let q = sample_configuration(model, &mut rng);
        let (p, o) = mirror_gap(model, map, &q, left_tip, right_tip, plane)?;
        cert.max_position_error = cert.max_position_error.max(p);
        cert.max_orientation_error = cert.max_orientation_error.max(o);
    }
    Ok(cert)
}
