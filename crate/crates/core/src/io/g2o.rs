//! A subset of the g2o text format.
//!
//! Supported lines:
//! - `VERTEX_SE3:QUAT id x y z qx qy qz qw`: camera→world pose
//! - `VERTEX_TRACKXYZ id x y z` or `VERTEX_XYZ id x y z`
//! - `EDGE_PROJECT_XYZ2UV:EXPMAP point cam u v i00 i01 i11`: upper triangle of the information matrix
//! - `PARAMS_CAMERAPARAMETERS id f cx cy baseline`
//! - `FIX id`: fixes the camera with that id
//!
//! Anything else is skipped and counted.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{Matrix2, Quaternion, UnitQuaternion, Vector2, Vector3};

use super::{parse_finite, parse_index, ParseError, Problem, WriteError};
use crate::geometry::{Intrinsics, Pose};
use crate::graph::{BAGraph, CameraId, CameraVertex, Observation, PointId, PointVertex};

/// Quaternions whose norm is within this distance of 1 are renormalized
/// silently; larger deviations are renormalized with a warning.
pub const QUATERNION_TOLERANCE: f64 = 1e-3;

/// Norms below this cannot be renormalized.
const MIN_QUATERNION_NORM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct G2oProblem {
    pub problem: Problem,
    /// Lines with unrecognized tags.
    pub skipped: usize,
    /// Quaternions renormalized beyond [`QUATERNION_TOLERANCE`].
    pub renormalized: usize,
    /// True when no `PARAMS_CAMERAPARAMETERS` line was present.
    pub default_intrinsics: bool,
}

fn default_intrinsics() -> Intrinsics {
    Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0)
}

struct Line<'a> {
    number: usize,
    fields: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn arity(&self, n: usize) -> Result<(), ParseError> {
        if self.fields.len() != n + 1 {
            return Err(ParseError::Invalid {
                line: self.number,
                message: format!("{} expects {n} values, found {}", self.fields[0], self.fields.len() - 1),
            });
        }
        Ok(())
    }

    fn id(&self, i: usize) -> Result<u32, ParseError> {
        parse_index(self.number, self.fields[i])
    }

    fn num(&self, i: usize) -> Result<f64, ParseError> {
        parse_finite(self.number, self.fields[i])
    }
}

pub fn parse_g2o_bytes(bytes: &[u8]) -> Result<G2oProblem, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Utf8)?;
    parse_g2o_subset(text)
}

pub fn parse_g2o_subset(text: &str) -> Result<G2oProblem, ParseError> {
    let mut cameras = Vec::new();
    let mut points = Vec::new();
    let mut observations = Vec::new();
    let mut params: Option<Intrinsics> = None;
    let mut fixed = Vec::new();
    let (mut skipped, mut renormalized) = (0, 0);

    for (i, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_ascii_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let line = Line { number: i + 1, fields };
        match line.fields[0] {
            "VERTEX_SE3:QUAT" => {
                line.arity(8)?;
                let t = Vector3::new(line.num(2)?, line.num(3)?, line.num(4)?);
                let q = Quaternion::new(line.num(8)?, line.num(5)?, line.num(6)?, line.num(7)?);
                let norm = q.norm();
                if norm < MIN_QUATERNION_NORM {
                    return Err(ParseError::Invalid {
                        line: line.number,
                        message: format!("quaternion norm {norm} cannot be normalized"),
                    });
                }
                if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
                    warn!("line {}: renormalizing quaternion of norm {norm}", line.number);
                    renormalized += 1;
                }
                let cam_to_world = Pose::new(UnitQuaternion::from_quaternion(q), t);
                cameras.push(CameraVertex::new(line.id(1)?, cam_to_world.inverse(), 0));
            }
            "VERTEX_TRACKXYZ" | "VERTEX_XYZ" => {
                line.arity(4)?;
                let x = Vector3::new(line.num(2)?, line.num(3)?, line.num(4)?);
                points.push(PointVertex::new(line.id(1)?, x));
            }
            "EDGE_PROJECT_XYZ2UV:EXPMAP" => {
                line.arity(7)?;
                let info = Matrix2::new(line.num(5)?, line.num(6)?, line.num(6)?, line.num(7)?);
                let sigma = info.try_inverse().ok_or_else(|| ParseError::Invalid {
                    line: line.number,
                    message: "singular information matrix".into(),
                })?;
                let mut o = Observation::new(
                    CameraId(line.id(2)?),
                    PointId(line.id(1)?),
                    Vector2::new(line.num(3)?, line.num(4)?),
                );
                o.sigma = sigma;
                observations.push(o);
            }
            "PARAMS_CAMERAPARAMETERS" => {
                line.arity(5)?;
                if params.is_none() {
                    let (f, cx, cy) = (line.num(2)?, line.num(3)?, line.num(4)?);
                    params = Some(Intrinsics::new(f, f, cx, cy, 2.0 * cx, 2.0 * cy));
                }
            }
            "FIX" => {
                for j in 1..line.fields.len() {
                    fixed.push(line.id(j)?);
                }
            }
            _ => skipped += 1,
        }
    }

    for c in cameras.iter_mut() {
        c.fixed = fixed.contains(&c.id.0);
    }
    let default_intrinsics_used = params.is_none();
    let k = params.unwrap_or_else(default_intrinsics);
    let graph = BAGraph::build(cameras, points, observations, vec![k])?;
    Ok(G2oProblem {
        problem: Problem::new(graph),
        skipped,
        renormalized,
        default_intrinsics: default_intrinsics_used,
    })
}

/// Serialize a graph in the supported subset. Only the first intrinsics
/// entry is written, so every camera must reference an identical one.
pub fn write_g2o(graph: &BAGraph) -> Result<String, WriteError> {
    let k = graph.intrinsics().first().copied().unwrap_or_else(default_intrinsics);
    for (i, other) in graph.intrinsics().iter().enumerate() {
        if other.fx != k.fx || other.fy != k.fx || other.cx != k.cx || other.cy != k.cy
            || other.width != 2.0 * k.cx || other.height != 2.0 * k.cy
        {
            return Err(WriteError::Unrepresentable(i));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "PARAMS_CAMERAPARAMETERS 0 {} {} {} 0", k.fx, k.cx, k.cy);
    for c in graph.cameras() {
        let p = c.pose.inverse();
        let (t, q) = (p.translation, p.rotation.quaternion());
        let _ = writeln!(
            out,
            "VERTEX_SE3:QUAT {} {} {} {} {} {} {} {}",
            c.id.0, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        );
    }
    for c in graph.cameras().iter().filter(|c| c.fixed) {
        let _ = writeln!(out, "FIX {}", c.id.0);
    }
    for p in graph.points() {
        let x = p.position;
        let _ = writeln!(out, "VERTEX_TRACKXYZ {} {} {} {}", p.id.0, x.x, x.y, x.z);
    }
    for o in graph.observations() {
        let info = o.sigma.try_inverse().unwrap_or_else(Matrix2::identity);
        let _ = writeln!(
            out,
            "EDGE_PROJECT_XYZ2UV:EXPMAP {} {} {} {} {} {} {}",
            o.point.0, o.camera.0, o.measurement.x, o.measurement.y, info[(0, 0)], info[(0, 1)], info[(1, 1)]
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_identity_camera() {
        let g = parse_g2o_subset("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\n").unwrap();
        let cams = g.problem.graph.cameras();
        assert_eq!(cams.len(), 1);
        assert_eq!(cams[0].pose, Pose::identity());
        assert_eq!(g.skipped, 0);
        assert!(g.default_intrinsics);
    }

    #[test]
    fn non_unit_quaternion_is_renormalized_with_warning() {
        let g = parse_g2o_subset("VERTEX_SE3:QUAT 0 1 2 3 0 0 0 0.5\n").unwrap();
        assert_eq!(g.renormalized, 1);
        let pose = g.problem.graph.cameras()[0].pose;
        assert!((pose.rotation.quaternion().norm() - 1.0).abs() < 1e-12);
        assert!((pose.center() - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-12);

        let slight = parse_g2o_subset("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1.0004\n").unwrap();
        assert_eq!(slight.renormalized, 0);

        assert!(matches!(
            parse_g2o_subset("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 0\n"),
            Err(ParseError::Invalid { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_tags_are_counted() {
        let text = "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1
VERTEX_SE2 1 0 0 0
EDGE_SE3:QUAT 0 1 0 0 0 0 0 0 1
# comment
FOO bar
VERTEX_SE3:QUAT 1 1 0 0 0 0 0 1
VERTEX_TRACKXYZ 0 0 0 5
EDGE_PROJECT_XYZ2UV:EXPMAP 0 0 320 240 1 0 1
EDGE_PROJECT_XYZ2UV:EXPMAP 0 1 220 240 4 0 4
";
        let g = parse_g2o_subset(text).unwrap();
        assert_eq!(g.skipped, 3);
        let graph = &g.problem.graph;
        assert_eq!(graph.cameras().len(), 2);
        assert_eq!(graph.observations().len(), 2);
        assert!((graph.observations()[1].sigma - Matrix2::identity() * 0.25).norm() < 1e-15);
    }

    #[test]
    fn arity_and_tokens_are_checked() {
        assert!(matches!(
            parse_g2o_subset("VERTEX_XYZ 0 1 2\n"),
            Err(ParseError::Invalid { line: 1, .. })
        ));
        assert!(matches!(
            parse_g2o_subset("\nVERTEX_XYZ 0 1 2 inf\n"),
            Err(ParseError::Token { line: 2, .. })
        ));
    }
}
