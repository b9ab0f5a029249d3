//! Native JSON problem documents.
//!
//! Top-level keys: `intrinsics[]`, `cameras[]`, `points[]`, `observations[]`
//! and an optional `ground_truth` with `poses[]` and `points[]` in camera and
//! point order. Quaternions are written `[w, x, y, z]`, covariances row-major.

use nalgebra::{Matrix2, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{ParseError, Problem};
use crate::geometry::{Intrinsics, Pose};
use crate::graph::{BAGraph, CameraId, CameraVertex, Estimates, Observation, PointId, PointVertex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: CameraId,
    #[serde(flatten)]
    pub pose: PoseRecord,
    pub intrinsics_ref: usize,
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub is_virtual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: PointId,
    pub position: [f64; 3],
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub optimized_before: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub camera: CameraId,
    pub point: PointId,
    pub measurement: [f64; 2],
    #[serde(default = "identity_sigma")]
    pub sigma: [f64; 4],
}

fn identity_sigma() -> [f64; 4] {
    [1.0, 0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub poses: Vec<PoseRecord>,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub intrinsics: Vec<Intrinsics>,
    pub cameras: Vec<CameraRecord>,
    pub points: Vec<PointRecord>,
    pub observations: Vec<ObservationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthRecord>,
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        Self {
            rotation: [q.w, q.i, q.j, q.k],
            translation: p.translation.into(),
        }
    }
}

impl PoseRecord {
    /// Stored coordinates are used as-is, so a written unit quaternion reads
    /// back bit-identical; the graph rejects non-unit ones.
    fn to_pose(&self) -> Pose {
        let [w, x, y, z] = self.rotation;
        Pose::new(
            UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)),
            Vector3::from(self.translation),
        )
    }
}

impl ProblemDocument {
    pub fn from_problem(graph: &BAGraph, ground_truth: Option<&Estimates>) -> Self {
        Self {
            intrinsics: graph.intrinsics().to_vec(),
            cameras: graph
                .cameras()
                .iter()
                .map(|c| CameraRecord {
                    id: c.id,
                    pose: (&c.pose).into(),
                    intrinsics_ref: c.intrinsics_ref,
                    fixed: c.fixed,
                    is_virtual: c.is_virtual,
                })
                .collect(),
            points: graph
                .points()
                .iter()
                .map(|p| PointRecord {
                    id: p.id,
                    position: p.position.into(),
                    fixed: p.fixed,
                    optimized_before: p.optimized_before,
                })
                .collect(),
            observations: graph
                .observations()
                .iter()
                .map(|o| ObservationRecord {
                    camera: o.camera,
                    point: o.point,
                    measurement: o.measurement.into(),
                    sigma: [o.sigma[(0, 0)], o.sigma[(0, 1)], o.sigma[(1, 0)], o.sigma[(1, 1)]],
                })
                .collect(),
            ground_truth: ground_truth.map(|gt| GroundTruthRecord {
                poses: gt.poses.iter().map(PoseRecord::from).collect(),
                points: gt.points.iter().map(|x| (*x).into()).collect(),
            }),
        }
    }

    pub fn into_problem(self) -> Result<Problem, ParseError> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| CameraVertex {
                id: c.id,
                pose: c.pose.to_pose(),
                intrinsics_ref: c.intrinsics_ref,
                fixed: c.fixed,
                is_virtual: c.is_virtual,
            })
            .collect();
        let points = self
            .points
            .iter()
            .map(|p| PointVertex {
                id: p.id,
                position: Vector3::from(p.position),
                fixed: p.fixed,
                optimized_before: p.optimized_before,
            })
            .collect();
        let observations = self
            .observations
            .iter()
            .map(|o| Observation {
                camera: o.camera,
                point: o.point,
                measurement: Vector2::from(o.measurement),
                sigma: Matrix2::new(o.sigma[0], o.sigma[1], o.sigma[2], o.sigma[3]),
            })
            .collect();
        let n_cams = self.cameras.len();
        let n_pts = self.points.len();
        let graph = BAGraph::build(cameras, points, observations, self.intrinsics)?;
        let mut problem = Problem::new(graph);
        if let Some(gt) = self.ground_truth {
            if gt.poses.len() != n_cams || gt.points.len() != n_pts {
                return Err(ParseError::Json("ground_truth does not match vertex counts".into()));
            }
            let poses: Vec<Pose> = gt.poses.iter().map(PoseRecord::to_pose).collect();
            if poses.iter().any(|p| (p.rotation.quaternion().norm() - 1.0).abs() > 1e-9) {
                return Err(ParseError::Json("ground_truth has a non-unit quaternion".into()));
            }
            problem.ground_truth = Some(Estimates {
                poses,
                points: gt.points.into_iter().map(Vector3::from).collect(),
            });
        }
        Ok(problem)
    }
}

pub fn write_json(graph: &BAGraph, ground_truth: Option<&Estimates>) -> String {
    serde_json::to_string_pretty(&ProblemDocument::from_problem(graph, ground_truth))
        .expect("problem documents always serialize")
}

pub fn parse_json(text: &str) -> Result<Problem, ParseError> {
    let doc: ProblemDocument = serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))?;
    doc.into_problem()
}
