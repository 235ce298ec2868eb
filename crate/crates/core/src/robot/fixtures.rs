//! Robot descriptions shipped with the crate.

/// Single planar arm: 0.3 m upper arm, 0.2 m forearm, tool frame `tool`.
pub const TWO_LINK_ARM: &str = include_str!("../../fixtures/two_link_arm.urdf");

/// Mirrored planar 2×2-DoF arms mounted at `y = ±0.25`; tips `left_tool`, `right_tool`.
pub const PLANAR_PAIR: &str = include_str!("../../fixtures/planar_pair.urdf");

/// [`PLANAR_PAIR`] with the right forearm lengthened by 1 cm.
pub const PLANAR_PAIR_PERTURBED: &str = include_str!("../../fixtures/planar_pair_perturbed.urdf");

/// Mirrored spatial 2×3-DoF arms (yaw, pitch, pitch) on tilted mounts;
/// tips `left_tool`, `right_tool`.
pub const SPATIAL_PAIR: &str = include_str!("../../fixtures/spatial_pair.urdf");

/// The simulator's planar 2×3-DoF table-top arms; tips `left_ee`, `right_ee`.
pub const TABLETOP_DUAL_ARM: &str = include_str!("../../fixtures/tabletop_dual_arm.urdf");
