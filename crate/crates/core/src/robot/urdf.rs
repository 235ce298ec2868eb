//! Reader and writer for the URDF subset used by this crate.
//!
//! Grammar (elements outside this list are ignored, e.g. `visual`, `inertial`):
//!
//! ```text
//! robot  : <robot name=S> (link | joint)* </robot>
//! link   : <link name=S/>
//! joint  : <joint name=S type=("revolute"|"prismatic"|"fixed")>
//!            <parent link=S/> <child link=S/>
//!            <origin xyz="x y z" rpy="r p y"/>?      default zeros
//!            <axis xyz="x y z"/>                      required unless fixed
//!            <limit lower=F upper=F/>                 required unless fixed
//!          </joint>
//! ```
//!
//! `rpy` is fixed-axis roll/pitch/yaw in radians. Axes are normalized on read.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, UnitQuat, Vec3};

use super::{Joint, JointKind, Link, RobotModel};

pub fn parse_robot(text: &str) -> Result<RobotModel> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::Parse {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "robot" {
        return Err(parse_err(&doc, root, "root element must be <robot>"));
    }
    let name = root.attribute("name").unwrap_or("robot").to_string();

    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in root.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "link" => {
                let name = required_attr(&doc, node, "name")?;
                links.push(Link {
                    name: name.to_string(),
                });
            }
            "joint" => joints.push(parse_joint(&doc, node)?),
            _ => {}
        }
    }
    RobotModel::new(name, links, joints)
}

pub fn load_robot(path: impl AsRef<Path>) -> Result<RobotModel> {
    let text = std::fs::read_to_string(path)?;
    parse_robot(&text)
}

fn parse_joint(doc: &roxmltree::Document, node: roxmltree::Node) -> Result<Joint> {
    let name = required_attr(doc, node, "name")?.to_string();
    let kind = match required_attr(doc, node, "type")? {
        "revolute" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        other => {
            return Err(parse_err(
                doc,
                node,
                &format!("joint `{name}`: unsupported type `{other}`"),
            ))
        }
    };
    let child_el = |tag: &str| {
        node.children()
            .find(|c| c.is_element() && c.tag_name().name() == tag)
    };
    let parent = match child_el("parent") {
        Some(el) => required_attr(doc, el, "link")?.to_string(),
        None => return Err(parse_err(doc, node, &format!("joint `{name}` has no <parent>"))),
    };
    let child = match child_el("child") {
        Some(el) => required_attr(doc, el, "link")?.to_string(),
        None => return Err(parse_err(doc, node, &format!("joint `{name}` has no <child>"))),
    };
    let (xyz, rpy) = match child_el("origin") {
        Some(el) => (
            triple_attr(doc, el, "xyz")?.unwrap_or([0.0; 3]),
            triple_attr(doc, el, "rpy")?.unwrap_or([0.0; 3]),
        ),
        None => ([0.0; 3], [0.0; 3]),
    };
    let axis = match child_el("axis") {
        Some(el) => triple_attr(doc, el, "xyz")?.map(Vec3::from_array),
        None => None,
    };
    let limits = match child_el("limit") {
        Some(el) => Some([
            float_attr(doc, el, "lower")?.unwrap_or(0.0),
            float_attr(doc, el, "upper")?.unwrap_or(0.0),
        ]),
        None => None,
    };

    let (axis, limits) = match kind {
        JointKind::Fixed => (axis.unwrap_or(Vec3::X), limits.unwrap_or([0.0, 0.0])),
        _ => {
            let axis = axis.ok_or_else(|| {
                Error::Validation(format!("{kind:?} joint `{name}` is missing <axis>"))
            })?;
            let limits = limits.ok_or_else(|| {
                Error::Validation(format!("{kind:?} joint `{name}` is missing <limit>"))
            })?;
            (axis, limits)
        }
    };

    Ok(Joint {
        name,
        kind,
        parent,
        child,
        origin_xyz: xyz,
        origin_rpy: rpy,
        origin: RigidTransform::new(
            UnitQuat::from_rpy(rpy[0], rpy[1], rpy[2]),
            Vec3::from_array(xyz),
        ),
        axis,
        limits,
    })
}

fn parse_err(doc: &roxmltree::Document, node: roxmltree::Node, message: &str) -> Error {
    let pos = doc.text_pos_at(node.range().start);
    Error::Parse {
        line: pos.row,
        column: pos.col,
        message: message.to_string(),
    }
}

fn required_attr<'a>(
    doc: &roxmltree::Document,
    node: roxmltree::Node<'a, 'a>,
    attr: &str,
) -> Result<&'a str> {
    node.attribute(attr).ok_or_else(|| {
        parse_err(
            doc,
            node,
            &format!("<{}> is missing attribute `{attr}`", node.tag_name().name()),
        )
    })
}

fn float_attr(doc: &roxmltree::Document, node: roxmltree::Node, attr: &str) -> Result<Option<f64>> {
    match node.attribute(attr) {
        None => Ok(None),
        Some(s) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| parse_err(doc, node, &format!("attribute `{attr}`: `{s}` is not a number"))),
    }
}

fn triple_attr(
    doc: &roxmltree::Document,
    node: roxmltree::Node,
    attr: &str,
) -> Result<Option<[f64; 3]>> {
    let Some(s) = node.attribute(attr) else {
        return Ok(None);
    };
    let vals: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(doc, node, &format!("attribute `{attr}`: `{s}` is not numeric")))?;
    match vals.as_slice() {
        [a, b, c] => Ok(Some([*a, *b, *c])),
        _ => Err(parse_err(
            doc,
            node,
            &format!("attribute `{attr}` needs 3 values, got {}", vals.len()),
        )),
    }
}

/// Writes the model back in the subset grammar. Floats use the shortest
/// round-trip representation, so `parse_robot(to_urdf(m)) == m`.
pub fn to_urdf(model: &RobotModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<robot name=\"{}\">", model.name);
    for link in &model.links {
        let _ = writeln!(out, "  <link name=\"{}\"/>", link.name);
    }
    for j in &model.joints {
        let kind = match j.kind {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        };
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{kind}\">", j.name);
        let _ = writeln!(out, "    <parent link=\"{}\"/>", j.parent);
        let _ = writeln!(out, "    <child link=\"{}\"/>", j.child);
        let [x, y, z] = j.origin_xyz;
        let [r, p, yw] = j.origin_rpy;
        let _ = writeln!(out, "    <origin xyz=\"{x:?} {y:?} {z:?}\" rpy=\"{r:?} {p:?} {yw:?}\"/>");
        if j.kind != JointKind::Fixed {
            let a = j.axis;
            let _ = writeln!(out, "    <axis xyz=\"{:?} {:?} {:?}\"/>", a.x, a.y, a.z);
            let _ = writeln!(
                out,
                "    <limit lower=\"{:?}\" upper=\"{:?}\"/>",
                j.limits[0], j.limits[1]
            );
        }
        let _ = writeln!(out, "  </joint>");
    }
    out.push_str("</robot>\n");
    out
}
