//! Kinematic trees read from URDF-subset documents, forward kinematics, and
//! discovery of the joint-space mirror map.

mod discovery;
pub mod fixtures;
mod kinematics;
mod urdf;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

pub use discovery::{
    apply_joint_symmetry, discover_joint_symmetry, symmetry_certificate, DiscoveryConfig,
    JointSymmetryMap, SymmetryCertificate,
};
pub use kinematics::{forward_kinematics, ik_dls, jacobian, link_transforms, IkConfig, IkOutcome};
pub use urdf::{load_robot, parse_robot, to_urdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin_xyz: [f64; 3],
    pub origin_rpy: [f64; 3],
    pub origin: RigidTransform,
    /// Unit axis in the joint frame. Unused for fixed joints.
    pub axis: Vec3,
    /// `[lower, upper]` in radians or meters.
    pub limits: [f64; 2],
}

impl Joint {
    pub fn is_actuated(&self) -> bool {
        self.kind != JointKind::Fixed
    }
}

/// Ordered joint positions over the actuated joints of a model, in document
/// order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A validated kinematic tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub root: String,
    /// Joint index whose child is the given link.
    parent_joint: HashMap<String, usize>,
    /// Joint index -> position in the actuated vector.
    actuated_index: Vec<Option<usize>>,
    n_actuated: usize,
}

impl RobotModel {
    pub fn new(name: String, links: Vec<Link>, mut joints: Vec<Joint>) -> Result<Self> {
        let mut link_names = HashSet::new();
        for l in &links {
            if !link_names.insert(l.name.as_str()) {
                return Err(Error::Structure(format!("duplicate link `{}`", l.name)));
            }
        }
        let mut joint_names = HashSet::new();
        let mut parent_joint = HashMap::new();
        for (i, j) in joints.iter_mut().enumerate() {
            if !joint_names.insert(j.name.clone()) {
                return Err(Error::Structure(format!("duplicate joint `{}`", j.name)));
            }
            for link in [&j.parent, &j.child] {
                if !link_names.contains(link.as_str()) {
                    return Err(Error::Structure(format!(
                        "joint `{}` references unknown link `{link}`",
                        j.name
                    )));
                }
            }
            if parent_joint.insert(j.child.clone(), i).is_some() {
                return Err(Error::Structure(format!(
                    "link `{}` has more than one parent joint",
                    j.child
                )));
            }
            if j.is_actuated() {
                let n = j.axis.norm();
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::Validation(format!("joint `{}` has a zero axis", j.name)));
                }
                if (n - 1.0).abs() > 1e-9 {
                    j.axis = j.axis.scale(1.0 / n);
                }
                if !(j.limits[0] <= j.limits[1]) {
                    return Err(Error::Validation(format!(
                        "joint `{}` has lower limit above upper limit",
                        j.name
                    )));
                }
            }
        }
        let roots: Vec<&Link> = links
            .iter()
            .filter(|l| !parent_joint.contains_key(&l.name))
            .collect();
        let root = match roots.as_slice() {
            [r] => r.name.clone(),
            [] => return Err(Error::Structure("kinematic graph has a cycle (no root link)".into())),
            many => {
                let names: Vec<&str> = many.iter().map(|l| l.name.as_str()).collect();
                return Err(Error::Structure(format!(
                    "kinematic graph is disconnected (roots: {})",
                    names.join(", ")
                )));
            }
        };
        // Every link must reach the root by following parent joints.
        for l in &links {
            let mut cur = l.name.as_str();
            let mut steps = 0;
            while let Some(&ji) = parent_joint.get(cur) {
                cur = joints[ji].parent.as_str();
                steps += 1;
                if steps > joints.len() {
                    return Err(Error::Structure(format!(
                        "cycle through link `{}`",
                        l.name
                    )));
                }
            }
        }
        let mut n_actuated = 0;
        let actuated_index = joints
            .iter()
            .map(|j| {
                j.is_actuated().then(|| {
                    n_actuated += 1;
                    n_actuated - 1
                })
            })
            .collect();
        Ok(Self {
            name,
            links,
            joints,
            root,
            parent_joint,
            actuated_index,
            n_actuated,
        })
    }

    pub fn n_actuated(&self) -> usize {
        self.n_actuated
    }

    pub fn has_link(&self, name: &str) -> bool {
        self.links.iter().any(|l| l.name == name)
    }

    /// Actuated-vector position of joint `joint_index`, if actuated.
    pub fn actuated_index(&self, joint_index: usize) -> Option<usize> {
        self.actuated_index[joint_index]
    }

    pub fn actuated_joints(&self) -> impl Iterator<Item = &Joint> {
        self.joints.iter().filter(|j| j.is_actuated())
    }

    pub fn joint_by_name(&self, name: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.name == name)
    }

    /// Joint indices from the root down to `link`.
    pub fn chain_to(&self, link: &str) -> Result<Vec<usize>> {
        if !self.has_link(link) {
            return Err(Error::UnknownLink(link.to_string()));
        }
        let mut chain = Vec::new();
        let mut cur = link;
        while let Some(&ji) = self.parent_joint.get(cur) {
            chain.push(ji);
            cur = &self.joints[ji].parent;
        }
        chain.reverse();
        Ok(chain)
    }

    /// Actuated limits in actuated-vector order.
    pub fn limits(&self) -> Vec<[f64; 2]> {
        self.actuated_joints().map(|j| j.limits).collect()
    }
}

#[cfg(test)]
mod tests;
