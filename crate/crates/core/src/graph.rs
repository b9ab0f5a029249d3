//! Bundle-adjustment factor graphs: camera and point vertices joined by
//! observation edges, with covisibility queries.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u32);

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Covisibility threshold used when no explicit `min_weight` is configured.
pub const DEFAULT_MIN_COVIS_WEIGHT: usize = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraVertex {
    pub id: CameraId,
    pub pose: Pose,
    pub intrinsics_ref: usize,
    pub fixed: bool,
    pub is_virtual: bool,
}

impl CameraVertex {
    pub fn new(id: u32, pose: Pose, intrinsics_ref: usize) -> Self {
        Self {
            id: CameraId(id),
            pose,
            intrinsics_ref,
            fixed: false,
            is_virtual: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointVertex {
    pub id: PointId,
    pub position: Vector3<f64>,
    pub fixed: bool,
    /// Set once the point has been refined by a local BA; never cleared.
    pub optimized_before: bool,
}

impl PointVertex {
    pub fn new(id: u32, position: Vector3<f64>) -> Self {
        Self {
            id: PointId(id),
            position,
            fixed: false,
            optimized_before: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub camera: CameraId,
    pub point: PointId,
    /// Measured pixel coordinates.
    pub measurement: Vector2<f64>,
    /// Measurement covariance, pixels².
    pub sigma: Matrix2<f64>,
}

impl Observation {
    pub fn new(camera: CameraId, point: PointId, measurement: Vector2<f64>) -> Self {
        Self {
            camera,
            point,
            measurement,
            sigma: Matrix2::identity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Camera(CameraId),
    Point(PointId),
    Intrinsics(usize),
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Camera(c) => write!(f, "camera {c}"),
            Reference::Point(p) => write!(f, "point {p}"),
            Reference::Intrinsics(i) => write!(f, "intrinsics #{i}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("dangling reference to {0}")]
    DanglingReference(Reference),
    #[error("duplicate observation of {1} by {0}")]
    DuplicateObservation(CameraId, PointId),
    #[error("duplicate id: {0}")]
    DuplicateId(Reference),
    #[error("point {0} has no observations")]
    UnobservedPoint(PointId),
    #[error("camera {0} has a non-unit quaternion")]
    InvalidQuaternion(CameraId),
    #[error("intrinsics #{0} are invalid")]
    InvalidIntrinsics(usize),
    #[error("observation of {1} by {0} has a non-SPD covariance")]
    InvalidCovariance(CameraId, PointId),
    #[error("unknown camera {0}")]
    UnknownCamera(CameraId),
}

/// An immutable, validated BA problem graph.
///
/// Vertices keep their input order; the position of a vertex in that order is
/// its *slot*, which [`Estimates`] and the assembly code index by.
#[derive(Debug, Clone, PartialEq)]
pub struct BAGraph {
    cameras: Vec<CameraVertex>,
    points: Vec<PointVertex>,
    observations: Vec<Observation>,
    intrinsics: Vec<Intrinsics>,
    camera_slot: HashMap<CameraId, usize>,
    point_slot: HashMap<PointId, usize>,
    /// (camera slot, point slot) per observation.
    obs_slots: Vec<(usize, usize)>,
    camera_obs: Vec<Vec<usize>>,
    point_obs: Vec<Vec<usize>>,
    /// Sorted point slots seen by each camera.
    camera_points: Vec<Vec<usize>>,
}

impl BAGraph {
    pub fn build(
        cameras: Vec<CameraVertex>,
        points: Vec<PointVertex>,
        observations: Vec<Observation>,
        intrinsics: Vec<Intrinsics>,
    ) -> Result<Self, GraphError> {
        for (i, k) in intrinsics.iter().enumerate() {
            if !k.is_valid() {
                return Err(GraphError::InvalidIntrinsics(i));
            }
        }
        let mut camera_slot = HashMap::with_capacity(cameras.len());
        for (slot, c) in cameras.iter().enumerate() {
            if camera_slot.insert(c.id, slot).is_some() {
                return Err(GraphError::DuplicateId(Reference::Camera(c.id)));
            }
            if (c.pose.rotation.quaternion().norm() - 1.0).abs() > 1e-9 {
                return Err(GraphError::InvalidQuaternion(c.id));
            }
            if c.intrinsics_ref >= intrinsics.len() {
                return Err(GraphError::DanglingReference(Reference::Intrinsics(
                    c.intrinsics_ref,
                )));
            }
        }
        let mut point_slot = HashMap::with_capacity(points.len());
        for (slot, p) in points.iter().enumerate() {
            if point_slot.insert(p.id, slot).is_some() {
                return Err(GraphError::DuplicateId(Reference::Point(p.id)));
            }
        }

        let mut obs_slots = Vec::with_capacity(observations.len());
        let mut camera_obs = vec![Vec::new(); cameras.len()];
        let mut point_obs = vec![Vec::new(); points.len()];
        let mut camera_points = vec![Vec::new(); cameras.len()];
        for (i, o) in observations.iter().enumerate() {
            let cs = *camera_slot
                .get(&o.camera)
                .ok_or(GraphError::DanglingReference(Reference::Camera(o.camera)))?;
            let ps = *point_slot
                .get(&o.point)
                .ok_or(GraphError::DanglingReference(Reference::Point(o.point)))?;
            let s = &o.sigma;
            if !((s[(0, 1)] - s[(1, 0)]).abs() <= 1e-12 * s.amax().max(1.0)
                && s[(0, 0)] > 0.0
                && s.determinant() > 0.0)
            {
                return Err(GraphError::InvalidCovariance(o.camera, o.point));
            }
            obs_slots.push((cs, ps));
            camera_obs[cs].push(i);
            point_obs[ps].push(i);
            camera_points[cs].push(ps);
        }
        for (cs, pts) in camera_points.iter_mut().enumerate() {
            pts.sort_unstable();
            if let Some(w) = pts.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateObservation(
                    cameras[cs].id,
                    points[w[0]].id,
                ));
            }
        }
        if let Some(ps) = point_obs.iter().position(|o| o.is_empty()) {
            return Err(GraphError::UnobservedPoint(points[ps].id));
        }

        Ok(Self {
            cameras,
            points,
            observations,
            intrinsics,
            camera_slot,
            point_slot,
            obs_slots,
            camera_obs,
            point_obs,
            camera_points,
        })
    }

    pub fn cameras(&self) -> &[CameraVertex] {
        &self.cameras
    }

    pub fn points(&self) -> &[PointVertex] {
        &self.points
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn intrinsics(&self) -> &[Intrinsics] {
        &self.intrinsics
    }

    pub fn camera_slot(&self, id: CameraId) -> Option<usize> {
        self.camera_slot.get(&id).copied()
    }

    pub fn point_slot(&self, id: PointId) -> Option<usize> {
        self.point_slot.get(&id).copied()
    }

    pub fn camera(&self, id: CameraId) -> Option<&CameraVertex> {
        self.camera_slot(id).map(|s| &self.cameras[s])
    }

    pub fn point(&self, id: PointId) -> Option<&PointVertex> {
        self.point_slot(id).map(|s| &self.points[s])
    }

    pub fn camera_intrinsics(&self, slot: usize) -> &Intrinsics {
        &self.intrinsics[self.cameras[slot].intrinsics_ref]
    }

    /// (camera slot, point slot) of observation `i`.
    pub fn observation_slots(&self, i: usize) -> (usize, usize) {
        self.obs_slots[i]
    }

    /// Observation indices made by the camera in `slot`.
    pub fn camera_observations(&self, slot: usize) -> &[usize] {
        &self.camera_obs[slot]
    }

    /// Observation indices of the point in `slot`.
    pub fn point_observations(&self, slot: usize) -> &[usize] {
        &self.point_obs[slot]
    }

    /// Sorted point slots seen by the camera in `slot`.
    pub fn camera_point_slots(&self, slot: usize) -> &[usize] {
        &self.camera_points[slot]
    }

    pub fn camera_ids(&self) -> Vec<CameraId> {
        self.cameras.iter().map(|c| c.id).collect()
    }

    fn require_camera(&self, id: CameraId) -> Result<usize, GraphError> {
        self.camera_slot(id).ok_or(GraphError::UnknownCamera(id))
    }

    /// Number of points observed by both cameras.
    pub fn covisibility_weight(&self, a: CameraId, b: CameraId) -> Result<usize, GraphError> {
        let sa = self.require_camera(a)?;
        let sb = self.require_camera(b)?;
        Ok(sorted_intersection_len(
            &self.camera_points[sa],
            &self.camera_points[sb],
        ))
    }

    /// Covisibility weights from `root` to every camera slot.
    pub fn covisibility_row(&self, root: CameraId) -> Result<Vec<usize>, GraphError> {
        let sr = self.require_camera(root)?;
        let mut weights = vec![0usize; self.cameras.len()];
        for &ps in &self.camera_points[sr] {
            for &oi in &self.point_obs[ps] {
                weights[self.obs_slots[oi].0] += 1;
            }
        }
        Ok(weights)
    }

    /// Cameras sharing at least `min_weight` points with any of `roots`,
    /// excluding the roots, in ascending id order.
    pub fn covisible_pool(
        &self,
        roots: &[CameraId],
        min_weight: usize,
    ) -> Result<Vec<CameraId>, GraphError> {
        let min_weight = min_weight.max(1);
        let mut best = vec![0usize; self.cameras.len()];
        let mut is_root = vec![false; self.cameras.len()];
        for &r in roots {
            is_root[self.require_camera(r)?] = true;
            for (slot, w) in self.covisibility_row(r)?.into_iter().enumerate() {
                best[slot] = best[slot].max(w);
            }
        }
        let mut pool: Vec<CameraId> = (0..self.cameras.len())
            .filter(|&s| !is_root[s] && best[s] >= min_weight)
            .map(|s| self.cameras[s].id)
            .collect();
        pool.sort_unstable();
        Ok(pool)
    }

    /// Copy of the graph with the given points flagged `optimized_before`.
    /// Flags already set stay set.
    pub fn with_points_optimized(&self, ids: impl IntoIterator<Item = PointId>) -> Self {
        let mut out = self.clone();
        for id in ids {
            if let Some(s) = out.point_slot(id) {
                out.points[s].optimized_before = true;
            }
        }
        out
    }

    /// Copy of the graph with its vertex states replaced by `estimates`.
    pub fn with_estimates(&self, estimates: &Estimates) -> Self {
        let mut out = self.clone();
        for (c, p) in out.cameras.iter_mut().zip(&estimates.poses) {
            c.pose = *p;
        }
        for (v, x) in out.points.iter_mut().zip(&estimates.points) {
            v.position = *x;
        }
        out
    }

    /// Copy of the graph with exactly the listed cameras marked fixed.
    pub fn with_fixed_cameras(&self, fixed: &[CameraId]) -> Self {
        let mut out = self.clone();
        for c in out.cameras.iter_mut() {
            c.fixed = fixed.contains(&c.id);
        }
        out
    }

    /// Subgraph over `cameras` (in this graph's order) keeping the points
    /// they observe at least `min_views` times between them.
    pub fn restrict_to_cameras(&self, cameras: &[CameraId], min_views: usize) -> Result<Self, GraphError> {
        let mut keep_cam = vec![false; self.cameras.len()];
        for &c in cameras {
            keep_cam[self.require_camera(c)?] = true;
        }
        let views: Vec<usize> = self
            .point_obs
            .iter()
            .map(|obs| obs.iter().filter(|&&o| keep_cam[self.obs_slots[o].0]).count())
            .collect();
        let keep_pt: Vec<bool> = views.iter().map(|&v| v >= min_views.max(1)).collect();
        let cams = self
            .cameras
            .iter()
            .zip(&keep_cam)
            .filter(|(_, &k)| k)
            .map(|(c, _)| c.clone())
            .collect();
        let pts = self
            .points
            .iter()
            .zip(&keep_pt)
            .filter(|(_, &k)| k)
            .map(|(p, _)| p.clone())
            .collect();
        let obs = self
            .observations
            .iter()
            .zip(&self.obs_slots)
            .filter(|(_, (c, p))| keep_cam[*c] && keep_pt[*p])
            .map(|(o, _)| o.clone())
            .collect();
        Self::build(cams, pts, obs, self.intrinsics.clone())
    }

    /// Copy of the graph with one more camera and its observations.
    pub fn with_camera(&self, camera: CameraVertex, observations: Vec<Observation>) -> Result<Self, GraphError> {
        let (mut cams, pts, mut obs, k) = self.clone().into_parts();
        cams.push(camera);
        obs.extend(observations);
        Self::build(cams, pts, obs, k)
    }

    /// Decompose back into the vertex and edge lists.
    pub fn into_parts(
        self,
    ) -> (
        Vec<CameraVertex>,
        Vec<PointVertex>,
        Vec<Observation>,
        Vec<Intrinsics>,
    ) {
        (self.cameras, self.points, self.observations, self.intrinsics)
    }
}

fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Vertex states aligned with a graph's camera and point slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub poses: Vec<Pose>,
    pub points: Vec<Vector3<f64>>,
}

impl Estimates {
    /// The states stored on the graph's vertices.
    pub fn from_graph(graph: &BAGraph) -> Self {
        Self {
            poses: graph.cameras.iter().map(|c| c.pose).collect(),
            points: graph.points.iter().map(|p| p.position).collect(),
        }
    }

    /// Re-index estimates of `parent` onto the slots of `sub`, whose vertices
    /// must all exist in `parent`.
    pub fn restrict(&self, parent: &BAGraph, sub: &BAGraph) -> Self {
        Self {
            poses: sub
                .cameras
                .iter()
                .map(|c| {
                    parent
                        .camera_slot(c.id)
                        .map(|s| self.poses[s])
                        .unwrap_or(c.pose)
                })
                .collect(),
            points: sub
                .points
                .iter()
                .map(|p| {
                    parent
                        .point_slot(p.id)
                        .map(|s| self.points[s])
                        .unwrap_or(p.position)
                })
                .collect(),
        }
    }

    /// Write the free-vertex states of a subgraph solution back into these
    /// (parent-aligned) estimates.
    pub fn absorb(&mut self, parent: &BAGraph, sub: &BAGraph, solved: &Estimates) {
        for (c, pose) in sub.cameras.iter().zip(&solved.poses) {
            if c.fixed {
                continue;
            }
            if let Some(s) = parent.camera_slot(c.id) {
                self.poses[s] = *pose;
            }
        }
        for (p, x) in sub.points.iter().zip(&solved.points) {
            if p.fixed {
                continue;
            }
            if let Some(s) = parent.point_slot(p.id) {
                self.points[s] = *x;
            }
        }
    }
}
