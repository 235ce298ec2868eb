use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;

use super::fixtures::*;
use super::*;
use crate::geometry::{quat_to_matrix, UnitQuat};

fn dof(model: &RobotModel) -> usize {
    model.n_actuated()
}

fn discover(text: &str, left: &str, right: &str) -> Result<JointSymmetryMap> {
    let model = parse_robot(text)?;
    discover_joint_symmetry(
        &model,
        left,
        right,
        &RigidTransform::IDENTITY,
        &DiscoveryConfig::default(),
    )
}

#[test]
fn minimal_document() {
    let m = parse_robot(r#"<robot name="one"><link name="base"/></robot>"#).unwrap();
    assert_eq!(m.links.len(), 1);
    assert!(m.joints.is_empty());
    assert_eq!(m.root, "base");
}

#[test]
fn two_link_fixture_structure() {
    let m = parse_robot(TWO_LINK_ARM).unwrap();
    let names: Vec<&str> = m.links.iter().map(|l| l.name.as_str()).collect();
    assert_eq!(names, ["base", "upper_arm", "forearm", "tool"]);
    let revolute: Vec<&Joint> = m.joints.iter().filter(|j| j.kind == JointKind::Revolute).collect();
    assert_eq!(revolute.len(), 2);
    assert_eq!((revolute[0].parent.as_str(), revolute[0].child.as_str()), ("base", "upper_arm"));
    assert_eq!((revolute[1].parent.as_str(), revolute[1].child.as_str()), ("upper_arm", "forearm"));
    assert_eq!(revolute[1].origin_xyz, [0.3, 0.0, 0.0]);
    assert_eq!(m.joint_by_name("tool_mount").unwrap().kind, JointKind::Fixed);
    assert_eq!(dof(&m), 2);
}

#[test]
fn unknown_link_is_named() {
    let doc = r#"<robot name="r"><link name="a"/>
        <joint name="j" type="fixed"><parent link="a"/><child link="ghost"/></joint></robot>"#;
    match parse_robot(doc) {
        Err(Error::Structure(msg)) => assert!(msg.contains("ghost"), "{msg}"),
        other => panic!("expected structure error, got {other:?}"),
    }
}

#[test]
fn malformed_markup_reports_position() {
    let doc = "<robot name=\"r\">\n  <link name=\"a\">\n</robot>";
    match parse_robot(doc) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
    let doc = "<robot name=\"r\">\n<link name=\"a\"/>\n<joint name=\"j\" type=\"revolute\">\n<parent link=\"a\"/><child link=\"a\"/>\n<origin xyz=\"1 2\"/></joint></robot>";
    match parse_robot(doc) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (5, 1)),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn cyclic_and_disconnected_trees_are_rejected() {
    let cyclic = r#"<robot name="r"><link name="root"/><link name="a"/><link name="b"/>
        <joint name="j1" type="fixed"><parent link="a"/><child link="b"/></joint>
        <joint name="j2" type="fixed"><parent link="b"/><child link="a"/></joint></robot>"#;
    assert!(matches!(parse_robot(cyclic), Err(Error::Structure(_))));
    let disconnected = r#"<robot name="r"><link name="a"/><link name="b"/></robot>"#;
    assert!(matches!(parse_robot(disconnected), Err(Error::Structure(_))));
}

#[test]
fn revolute_joint_needs_axis() {
    let doc = r#"<robot name="r"><link name="a"/><link name="b"/>
        <joint name="j" type="revolute"><parent link="a"/><child link="b"/>
        <limit lower="-1" upper="1"/></joint></robot>"#;
    assert!(matches!(parse_robot(doc), Err(Error::Validation(_))));
}

#[test]
fn serialize_round_trip_is_identical() {
    for text in [TWO_LINK_ARM, PLANAR_PAIR, SPATIAL_PAIR, TABLETOP_DUAL_ARM] {
        let m = parse_robot(text).unwrap();
        let again = parse_robot(&to_urdf(&m)).unwrap();
        assert_eq!(m, again);
    }
}

#[test]
fn fk_two_link_examples() {
    let m = parse_robot(TWO_LINK_ARM).unwrap();
    let zero = forward_kinematics(&m, &JointVector(vec![0.0, 0.0]), "tool").unwrap();
    assert!(zero.position.max_abs_diff(Vec3::new(0.5, 0.0, 0.0)) < 1e-15);
    assert_eq!(zero.orientation, UnitQuat::IDENTITY);

    let q = JointVector(vec![FRAC_PI_2, 0.0]);
    let tip = forward_kinematics(&m, &q, "tool").unwrap();
    assert!(tip.position.max_abs_diff(Vec3::new(0.0, 0.5, 0.0)) < 1e-12);

    // Homogeneous-matrix oracle: Rz(q1)·Tx(0.3)·Rz(q2)·Tx(0.2).
    let rz = |a: f64| {
        let (s, c) = a.sin_cos();
        [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    };
    let tx = |d: f64| [[1.0, 0.0, 0.0, d], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let mul = |a: [[f64; 4]; 4], b: [[f64; 4]; 4]| {
        let mut o = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                o[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        o
    };
    for (a, b) in [(FRAC_PI_2, 0.0), (0.4, -1.1), (-2.0, 2.5)] {
        let h = mul(mul(rz(a), tx(0.3)), mul(rz(b), tx(0.2)));
        let tip = forward_kinematics(&m, &JointVector(vec![a, b]), "tool").unwrap();
        assert!(tip.position.max_abs_diff(Vec3::new(h[0][3], h[1][3], h[2][3])) < 1e-12);
        let r = quat_to_matrix(tip.orientation);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - h[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fk_errors() {
    let m = parse_robot(TWO_LINK_ARM).unwrap();
    assert!(matches!(
        forward_kinematics(&m, &JointVector(vec![0.0, 0.0]), "nope"),
        Err(Error::UnknownLink(_))
    ));
    assert!(matches!(
        forward_kinematics(&m, &JointVector(vec![0.0]), "tool"),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn jacobian_matches_finite_differences() {
    let m = parse_robot(SPATIAL_PAIR).unwrap();
    let q = JointVector(vec![0.3, -0.4, 0.9, -0.2, 0.5, 0.1]);
    let j = jacobian(&m, &q, "left_tool").unwrap();
    let h = 1e-6;
    for k in 0..dof(&m) {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp.0[k] += h;
        qm.0[k] -= h;
        let pp = forward_kinematics(&m, &qp, "left_tool").unwrap().position;
        let pm = forward_kinematics(&m, &qm, "left_tool").unwrap().position;
        let fd = (pp - pm).scale(0.5 / h);
        assert!((fd.x - j[k][0]).abs() < 1e-6);
        assert!((fd.y - j[k][1]).abs() < 1e-6);
        assert!((fd.z - j[k][2]).abs() < 1e-6);
    }
}

#[test]
fn ik_reaches_reachable_pose() {
    let m = parse_robot(SPATIAL_PAIR).unwrap();
    let goal_q = JointVector(vec![0.4, 0.3, 0.8, 0.0, 0.0, 0.0]);
    let target = forward_kinematics(&m, &goal_q, "left_tool").unwrap();
    let seed = JointVector(vec![0.2, 0.1, 0.5, 0.0, 0.0, 0.0]);
    let cfg = IkConfig {
        iterations: 200,
        ..IkConfig::default()
    };
    let out = ik_dls(&m, &seed, "left_tool", &target, &cfg).unwrap();
    assert!(out.improved);
    let got = forward_kinematics(&m, &out.q, "left_tool").unwrap();
    assert!(got.position.max_abs_diff(target.position) < 1e-6);
    // right arm untouched
    assert_eq!(&out.q.0[3..], &[0.0, 0.0, 0.0]);
}

#[test]
fn planar_pair_signs_and_pairing() {
    let map = discover(PLANAR_PAIR, "left_tool", "right_tool").unwrap();
    assert_eq!(map.partner, vec![2, 3, 0, 1]);
    assert_eq!(map.signs, vec![-1.0; 4]);
    let q = JointVector(vec![0.3, -0.1, 0.0, 0.0]);
    let mirrored = apply_joint_symmetry(&map, &q).unwrap();
    assert_eq!(mirrored.0, vec![0.0, 0.0, -0.3, 0.1]);
}

#[test]
fn spatial_pair_signs() {
    let map = discover(SPATIAL_PAIR, "left_tool", "right_tool").unwrap();
    assert_eq!(map.partner, vec![3, 4, 5, 0, 1, 2]);
    // yaw about the plane-parallel z axis flips; pitch about the plane normal does not
    assert_eq!(map.signs, vec![-1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
}

#[test]
fn duplicated_arm_with_reversed_axes() {
    // Right arm axes point along -z: reflected axis equals minus the partner's,
    // so motions already mirror and the signs are +1.
    let text = PLANAR_PAIR.replace(
        "<child link=\"right_upper_arm\"/>\n    <origin xyz=\"0 0 0\" rpy=\"0 0 0\"/>\n    <axis xyz=\"0 0 1\"/>",
        "<child link=\"right_upper_arm\"/>\n    <origin xyz=\"0 0 0\" rpy=\"0 0 0\"/>\n    <axis xyz=\"0 0 -1\"/>",
    );
    assert_ne!(text, PLANAR_PAIR);
    let map = discover(&text, "left_tool", "right_tool").unwrap();
    assert_eq!(map.signs, vec![1.0, -1.0, 1.0, -1.0]);
}

#[test]
fn perturbed_pair_is_rejected() {
    assert!(matches!(
        discover(PLANAR_PAIR_PERTURBED, "left_tool", "right_tool"),
        Err(Error::Asymmetry(_))
    ));
}

#[test]
fn mismatched_chains_are_rejected() {
    assert!(matches!(
        discover(SPATIAL_PAIR, "left_tool", "right_upper_arm"),
        Err(Error::Structure(_))
    ));
}

#[test]
fn too_few_samples_rejected() {
    let m = parse_robot(PLANAR_PAIR).unwrap();
    let cfg = DiscoveryConfig {
        samples: 8,
        ..DiscoveryConfig::default()
    };
    assert!(discover_joint_symmetry(&m, "left_tool", "right_tool", &RigidTransform::IDENTITY, &cfg).is_err());
}

#[test]
fn certificate_on_fresh_samples() {
    for (text, l, r) in [
        (PLANAR_PAIR, "left_tool", "right_tool"),
        (SPATIAL_PAIR, "left_tool", "right_tool"),
        (TABLETOP_DUAL_ARM, "left_ee", "right_ee"),
    ] {
        let m = parse_robot(text).unwrap();
        let plane = RigidTransform::IDENTITY;
        let map = discover_joint_symmetry(&m, l, r, &plane, &DiscoveryConfig::default()).unwrap();
        let cert = symmetry_certificate(&m, &map, l, r, &plane, 256, 0xfeed).unwrap();
        assert!(cert.max_position_error < 1e-6, "{cert:?}");
        assert!(cert.max_orientation_error < 1e-6, "{cert:?}");
    }
}

#[test]
fn discovery_in_a_rotated_camera_frame() {
    // A camera whose y axis coincides with the robot's lateral axis gives the
    // same plane, so the same map.
    let m = parse_robot(SPATIAL_PAIR).unwrap();
    let cam = RigidTransform::new(
        UnitQuat::from_axis_angle(Vec3::Y, std::f64::consts::PI),
        Vec3::new(0.3, 0.0, 1.0),
    );
    let map = discover_joint_symmetry(&m, "left_tool", "right_tool", &cam, &DiscoveryConfig::default()).unwrap();
    assert_eq!(map.signs, vec![-1.0, 1.0, 1.0, -1.0, 1.0, 1.0]);
}

proptest! {
    #[test]
    fn joint_symmetry_is_involution(q in proptest::collection::vec(-3.0f64..3.0, 6)) {
        let map = discover(SPATIAL_PAIR, "left_tool", "right_tool").unwrap();
        let q = JointVector(q);
        let twice = apply_joint_symmetry(&map, &apply_joint_symmetry(&map, &q).unwrap()).unwrap();
        prop_assert_eq!(twice, q);
    }
}
