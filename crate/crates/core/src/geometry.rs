//! Rigid-body primitives and the sagittal reflection.
//!
//! The mirror operator reflects across the plane whose normal is the `y` axis
//! of a camera frame `T_cam` (robot frame -> camera frame). Points are mapped
//! with `T_cam^-1 · R_y · T_cam`, `R_y = diag(1, -1, 1)`. Orientations are
//! conjugated by the same reflection so that the result stays a proper
//! rotation and the operator remains an involution on poses.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

/// The reflection `R_y = diag(1, -1, 1)`.
pub const REFLECTION_Y: Mat3 = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Mirror image across the `y = 0` plane of the frame the vector lives in.
    pub fn mirror_y(self) -> Vec3 {
        Vec3::new(self.x, -self.y, self.z)
    }

    pub fn max_abs_diff(self, o: Vec3) -> f64 {
        (self.x - o.x)
            .abs()
            .max((self.y - o.y).abs())
            .max((self.z - o.z).abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// Unit quaternion `(w, x, y, z)` kept in canonical sign: `w >= 0`, ties
/// broken lexicographically on `x`, then `y`, then `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes. A zero or non-finite input yields identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Self::IDENTITY;
        }
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    /// Canonicalizes the sign of components that are already unit-norm.
    pub fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        if canonical_sign([w, x, y, z]) < 0.0 {
            Self {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Self { w, x, y, z }
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn w(self) -> f64 {
        self.w
    }
    pub fn x(self) -> f64 {
        self.x
    }
    pub fn y(self) -> f64 {
        self.y
    }
    pub fn z(self) -> f64 {
        self.z
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis.scale(1.0 / n);
        Self::canonical(c, a.x * s, a.y * s, a.z * s)
    }

    /// Fixed-axis roll/pitch/yaw, `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (0.5 * roll).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sy, cy) = (0.5 * yaw).sin_cos();
        Self::new(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )
    }

    pub fn conjugate(self) -> Self {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ o`.
    pub fn mul(self, o: UnitQuat) -> UnitQuat {
        let [a, b, c, d] = quat_product(self.to_array(), o.to_array());
        Self::new(a, b, c, d)
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn max_abs_diff(self, o: UnitQuat) -> f64 {
        self.to_array()
            .iter()
            .zip(o.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Component-wise gap that ignores the `q ≡ -q` ambiguity at the
    /// canonical-sign boundary.
    pub fn rotation_gap(self, o: UnitQuat) -> f64 {
        let a = self.to_array();
        let b = o.to_array();
        let minus = (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
        let plus = (0..4).map(|i| (a[i] + b[i]).abs()).fold(0.0, f64::max);
        minus.min(plus)
    }

    /// Rotation vector (axis · angle) of this rotation, angle in `[0, π]`.
    pub fn log(self) -> Vec3 {
        let v = Vec3::new(self.x, self.y, self.z);
        let s = v.norm();
        if s < 1e-300 {
            return Vec3::ZERO;
        }
        let angle = 2.0 * s.atan2(self.w);
        v.scale(angle / s)
    }
}

/// +1 when `q` is already in canonical sign, -1 otherwise.
pub fn canonical_sign(q: [f64; 4]) -> f64 {
    for c in q {
        if c > 0.0 {
            return 1.0;
        }
        if c < 0.0 {
            return -1.0;
        }
    }
    1.0
}

/// Hamilton product on raw component arrays.
pub fn quat_product(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [w1, x1, y1, z1] = a;
    let [w2, x2, y2, z2] = b;
    [
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ]
}

pub fn quat_to_matrix(q: UnitQuat) -> Mat3 {
    let [w, x, y, z] = q.to_array();
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Converts a proper rotation matrix. Rejects inputs whose `RᵀR - I` residual
/// exceeds `1e-6` or whose determinant is not `+1`.
pub fn matrix_to_quat(m: &Mat3) -> Result<UnitQuat> {
    let residual = orthonormality_residual(m);
    let det = mat_det(m);
    if !(residual <= 1e-6) || !((det - 1.0).abs() <= 1e-6) {
        return Err(Error::NonOrthonormal { residual, det });
    }
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        ]
    };
    Ok(UnitQuat::from_array(q))
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Max-abs entry of `RᵀR - I`.
pub fn orthonormality_residual(m: &Mat3) -> f64 {
    let mtm = mat_mul(&mat_transpose(m), m);
    let mut worst: f64 = 0.0;
    for (i, row) in mtm.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    if worst.is_nan() {
        f64::INFINITY
    } else {
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: Vec3::ZERO,
        orientation: UnitQuat::IDENTITY,
    };

    pub fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn to_transform(self) -> RigidTransform {
        RigidTransform::new(self.orientation, self.position)
    }

    pub fn is_finite(self) -> bool {
        self.position.is_finite() && self.orientation.is_finite()
    }
}

/// `p ↦ rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: UnitQuat::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: UnitQuat, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(UnitQuat::IDENTITY, t)
    }

    pub fn from_rotation(r: UnitQuat) -> Self {
        Self::new(r, Vec3::ZERO)
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn as_pose(&self) -> Pose {
        Pose::new(self.translation, self.rotation)
    }

    /// 4×4 homogeneous matrix, row-major.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = quat_to_matrix(self.rotation);
        let t = self.translation.to_array();
        let mut h = [[0.0; 4]; 4];
        for i in 0..3 {
            h[i][..3].copy_from_slice(&r[i]);
            h[i][3] = t[i];
        }
        h[3][3] = 1.0;
        h
    }
}

/// `a ∘ b`: apply `b` first, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::new(a.rotation.mul(b.rotation), a.apply(b.translation))
}

pub fn invert(a: &RigidTransform) -> RigidTransform {
    let r = a.rotation.conjugate();
    RigidTransform::new(r, -r.rotate(a.translation))
}

/// Mirror a point across the camera-frame `y = 0` plane.
pub fn reflect_point(p: Vec3, t_cam: &RigidTransform) -> Vec3 {
    let in_cam = t_cam.apply(p).mirror_y();
    invert(t_cam).apply(in_cam)
}

/// Orientation of `R_y · R(q) · R_y`, canonicalized.
pub fn reflect_rotation(q: UnitQuat) -> UnitQuat {
    UnitQuat::canonical(q.w, -q.x, q.y, -q.z)
}

/// Mirror a pose: position through [`reflect_point`], orientation by
/// conjugation with the reflection expressed in the camera frame.
pub fn reflect_pose(pose: &Pose, t_cam: &RigidTransform) -> Pose {
    let position = reflect_point(pose.position, t_cam);
    let in_cam = t_cam.rotation.mul(pose.orientation);
    let orientation = t_cam.rotation.conjugate().mul(reflect_rotation(in_cam));
    Pose::new(position, orientation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> UnitQuat {
        loop {
            let v: [f64; 4] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n > 0.1 && n < 1.0 {
                return UnitQuat::from_array(v);
            }
        }
    }

    fn random_vec(rng: &mut impl Rng) -> Vec3 {
        Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        )
    }

    // 4×4 homogeneous oracle: T⁻¹ · diag(1,-1,1,1) · T · [p; 1].
    fn reflect_point_oracle(p: Vec3, t: &RigidTransform) -> Vec3 {
        let h = t.to_homogeneous();
        let hinv = invert(t).to_homogeneous();
        let m = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let mul = |a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]| {
            let mut o = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    o[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            o
        };
        let full = mul(&hinv, &mul(&m, &h));
        let v = [p.x, p.y, p.z, 1.0];
        let r: Vec<f64> = (0..3)
            .map(|i| (0..4).map(|k| full[i][k] * v[k]).sum())
            .collect();
        Vec3::new(r[0], r[1], r[2])
    }

    #[test]
    fn reflect_point_examples() {
        let id = RigidTransform::IDENTITY;
        assert_eq!(reflect_point(Vec3::new(1.0, 2.0, 3.0), &id), Vec3::new(1.0, -2.0, 3.0));
        assert_eq!(reflect_point(Vec3::ZERO, &id), Vec3::ZERO);
        let shifted = RigidTransform::from_translation(Vec3::new(0.0, 1.0, 0.0));
        let p = Vec3::new(1.0, 2.0, 3.0);
        let expected = Vec3::new(1.0, -4.0, 3.0);
        assert!(reflect_point(p, &shifted).max_abs_diff(expected) < 1e-15);
        assert!(reflect_point_oracle(p, &shifted).max_abs_diff(expected) < 1e-15);
    }

    #[test]
    fn reflect_point_matches_homogeneous_oracle_and_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let t = RigidTransform::new(random_quat(&mut rng), random_vec(&mut rng));
            let p = random_vec(&mut rng);
            let r = reflect_point(p, &t);
            assert!(r.max_abs_diff(reflect_point_oracle(p, &t)) < 1e-12);
            assert!(reflect_point(r, &t).max_abs_diff(p) < 1e-12);
        }
    }

    #[test]
    fn reflect_rotation_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(reflect_rotation(UnitQuat::IDENTITY), UnitQuat::IDENTITY);
        let rz = UnitQuat::new(h, 0.0, 0.0, h);
        assert!(reflect_rotation(rz).max_abs_diff(UnitQuat::new(h, 0.0, 0.0, -h)) < 1e-12);
        let ry = UnitQuat::new(h, 0.0, h, 0.0);
        assert!(reflect_rotation(ry).max_abs_diff(ry) < 1e-12);
    }

    #[test]
    fn reflect_rotation_is_matrix_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let oracle = mat_mul(&REFLECTION_Y, &mat_mul(&quat_to_matrix(q), &REFLECTION_Y));
            let got = quat_to_matrix(reflect_rotation(q));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((oracle[i][j] - got[i][j]).abs() < 1e-9);
                }
            }
            assert!((mat_det(&got) - 1.0).abs() < 1e-9);
            assert!(orthonormality_residual(&got) < 1e-9);
        }
    }

    #[test]
    fn reflect_pose_examples() {
        let id = RigidTransform::IDENTITY;
        assert_eq!(reflect_pose(&Pose::IDENTITY, &id), Pose::IDENTITY);
        let p = Pose::new(Vec3::new(0.2, 0.3, 0.1), UnitQuat::IDENTITY);
        let r = reflect_pose(&p, &id);
        assert_eq!(r.position, Vec3::new(0.2, -0.3, 0.1));
        assert_eq!(r.orientation, UnitQuat::IDENTITY);
    }

    #[test]
    fn reflect_pose_is_involution_and_matches_matrix_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let t = RigidTransform::new(random_quat(&mut rng), random_vec(&mut rng));
            let pose = Pose::new(random_vec(&mut rng), random_quat(&mut rng));
            let once = reflect_pose(&pose, &t);
            let twice = reflect_pose(&once, &t);
            assert!(twice.position.max_abs_diff(pose.position) < 1e-12);
            assert!(twice.orientation.max_abs_diff(pose.orientation) < 1e-12);

            // Rc^T · M · Rc · R · M
            let rc = quat_to_matrix(t.rotation);
            let n = mat_mul(&mat_transpose(&rc), &mat_mul(&REFLECTION_Y, &rc));
            let oracle = mat_mul(&n, &mat_mul(&quat_to_matrix(pose.orientation), &REFLECTION_Y));
            let got = quat_to_matrix(once.orientation);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((oracle[i][j] - got[i][j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let a = RigidTransform::new(random_quat(&mut rng), random_vec(&mut rng));
            let c = compose(&a, &invert(&a));
            assert!(c.translation.norm() < 1e-12);
            assert!(c.rotation.max_abs_diff(UnitQuat::IDENTITY) < 1e-12);
        }
    }

    #[test]
    fn matrix_quat_round_trip() {
        let ident = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(matrix_to_quat(&ident).unwrap(), UnitQuat::IDENTITY);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let back = matrix_to_quat(&quat_to_matrix(q)).unwrap();
            worst = worst.max(back.max_abs_diff(q));
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn matrix_to_quat_rejects_bad_input() {
        let skewed = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            matrix_to_quat(&skewed),
            Err(Error::NonOrthonormal { .. })
        ));
        assert!(matrix_to_quat(&REFLECTION_Y).is_err());
    }

    #[test]
    fn canonical_sign_ties() {
        let q = UnitQuat::new(0.0, -1.0, 0.0, 0.0);
        assert_eq!(q.to_array(), [0.0, 1.0, 0.0, 0.0]);
        let q = UnitQuat::new(-0.5, 0.5, 0.5, 0.5);
        assert_eq!(q.to_array(), [0.5, -0.5, -0.5, -0.5]);
    }

    #[test]
    fn rpy_matches_axis_composition() {
        let (r, p, y) = (0.3, -0.7, 1.1);
        let composed = UnitQuat::from_axis_angle(Vec3::Z, y)
            .mul(UnitQuat::from_axis_angle(Vec3::Y, p))
            .mul(UnitQuat::from_axis_angle(Vec3::X, r));
        assert!(UnitQuat::from_rpy(r, p, y).max_abs_diff(composed) < 1e-12);
    }
}
