//! Bilateral-symmetry toolkit for bimanual imitation learning.
//!
//! * [`geometry`]: rigid transforms and the sagittal reflection.
//! * [`robot`]: URDF-subset models, forward kinematics, joint mirror maps.
//! * [`symmetry`]: the mirror operator on observations and action chunks.
//! * [`sim`]: a kinematic dual-arm table-top simulator with scripted experts.
//! * [`learn`]: MLP policies, reverse-mode autodiff and symmetry-regularized
//!   behavior cloning.
//! * [`eval`]: rollouts, equivariance metrics, experiment grids and reports.

pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod learn;
pub mod robot;
pub mod sim;
pub mod symmetry;

pub use error::{Error, Result};
