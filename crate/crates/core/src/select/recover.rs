//! Rebuilding a BA subproblem from a camera selection.

use std::collections::HashSet;

use super::{SelectError, Selection};
use crate::graph::{BAGraph, CameraId, GraphError, PointId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorPolicy {
    /// Points seen by a single selected camera are dropped.
    GeneralBA,
    /// Points seen by a single selected camera are kept, fixed, when they
    /// have been optimized before; otherwise dropped.
    SlamMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubProblem {
    /// Selected cameras, the retained points and their observations. Camera
    /// fixed flags are inherited from the parent graph.
    pub graph: BAGraph,
    /// Points observed by at least two selected cameras.
    pub free_points: Vec<PointId>,
    /// Single-view points kept as fixed priors.
    pub prior_points: Vec<PointId>,
    pub cameras: Vec<CameraId>,
    pub policy: PriorPolicy,
}

/// Takes every point seen by the selected cameras and keeps those the
/// policy allows. Virtual cameras in the selection only seed selection and
/// are never part of the result.
pub fn recover_subgraph(graph: &BAGraph, selection: &Selection, policy: PriorPolicy) -> Result<SubProblem, SelectError> {
    let mut selected = HashSet::new();
    for &c in &selection.cameras {
        let cam = graph.camera(c).ok_or(GraphError::UnknownCamera(c))?;
        if !cam.is_virtual {
            selected.insert(c);
        }
    }
    let views: Vec<usize> = (0..graph.points().len())
        .map(|p| {
            graph
                .point_observations(p)
                .iter()
                .filter(|&&o| selected.contains(&graph.observations()[o].camera))
                .count()
        })
        .collect();

    let mut points = Vec::new();
    let (mut free_points, mut prior_points) = (Vec::new(), Vec::new());
    for (p, v) in graph.points().iter().zip(&views) {
        match *v {
            0 => {}
            1 if policy == PriorPolicy::SlamMode && p.optimized_before => {
                let mut prior = p.clone();
                prior.fixed = true;
                prior_points.push(p.id);
                points.push(prior);
            }
            1 => {}
            _ => {
                free_points.push(p.id);
                points.push(p.clone());
            }
        }
    }
    if free_points.is_empty() {
        return Err(SelectError::EmptySubProblem);
    }
    let kept: HashSet<PointId> = points.iter().map(|p| p.id).collect();
    let cameras: Vec<_> = graph.cameras().iter().filter(|c| selected.contains(&c.id)).cloned().collect();
    let observations = graph
        .observations()
        .iter()
        .filter(|o| selected.contains(&o.camera) && kept.contains(&o.point))
        .cloned()
        .collect();
    let ids = cameras.iter().map(|c| c.id).collect();
    let sub = BAGraph::build(cameras, points, observations, graph.intrinsics().to_vec())?;
    Ok(SubProblem {
        graph: sub,
        free_points,
        prior_points,
        cameras: ids,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose};
    use crate::graph::{CameraVertex, Observation, PointVertex};
    use nalgebra::{Vector2, Vector3};
    use std::time::Duration;

    /// Cameras c1, c2 are selected and c3 is not. Points p1, p4 and p5 are
    /// seen by exactly one selected camera; p2, p3 and p6 by both.
    fn toy() -> BAGraph {
        let cams = (1..=3).map(|i| CameraVertex::new(i, Pose::identity(), 0)).collect();
        let pts = (1..=6).map(|i| PointVertex::new(i, Vector3::new(0.0, 0.0, 1.0))).collect();
        let edges = [
            (1, 1), (3, 1),
            (1, 2), (2, 2),
            (1, 3), (2, 3), (3, 3),
            (2, 4), (3, 4),
            (1, 5),
            (1, 6), (2, 6),
        ];
        let obs = edges
            .iter()
            .map(|&(c, p)| Observation::new(CameraId(c), PointId(p), Vector2::new(1.0, 1.0)))
            .collect();
        let k = Intrinsics::new(10.0, 10.0, 5.0, 5.0, 10.0, 10.0);
        BAGraph::build(cams, pts, obs, vec![k]).unwrap()
    }

    fn pick(ids: &[u32]) -> Selection {
        Selection::unscored(ids.iter().map(|&i| CameraId(i)).collect(), Duration::ZERO)
    }

    #[test]
    fn general_ba_drops_single_view_points() {
        let s = recover_subgraph(&toy(), &pick(&[1, 2]), PriorPolicy::GeneralBA).unwrap();
        assert_eq!(s.free_points, vec![PointId(2), PointId(3), PointId(6)]);
        assert!(s.prior_points.is_empty());
        for p in [1, 4, 5] {
            assert!(s.graph.point(PointId(p)).is_none());
        }
        assert_eq!(s.graph.observations().len(), 6);
    }

    #[test]
    fn slam_mode_keeps_optimized_single_view_points_as_priors() {
        let g = toy().with_points_optimized((1..=6).map(PointId));
        let s = recover_subgraph(&g, &pick(&[1, 2]), PriorPolicy::SlamMode).unwrap();
        assert_eq!(s.prior_points, vec![PointId(1), PointId(4), PointId(5)]);
        for p in [1, 4, 5] {
            assert!(s.graph.point(PointId(p)).unwrap().fixed);
        }
        assert!(!s.graph.point(PointId(2)).unwrap().fixed);

        // Never-optimized single-view points are still dropped.
        let partial = toy().with_points_optimized([PointId(4)]);
        let s = recover_subgraph(&partial, &pick(&[1, 2]), PriorPolicy::SlamMode).unwrap();
        assert_eq!(s.prior_points, vec![PointId(4)]);
    }

    #[test]
    fn full_selection_reproduces_the_graph() {
        let g = toy();
        // With all cameras, p5 alone stays single-view; drop it from the reference.
        let s = recover_subgraph(&g, &pick(&[1, 2, 3]), PriorPolicy::GeneralBA).unwrap();
        assert_eq!(s.graph.cameras(), g.cameras());
        assert_eq!(s.graph.points().len(), 5);
        assert_eq!(s.graph.observations().len(), g.observations().len() - 1);
    }

    #[test]
    fn empty_and_virtual() {
        assert_eq!(
            recover_subgraph(&toy(), &pick(&[1]), PriorPolicy::GeneralBA),
            Err(SelectError::EmptySubProblem)
        );
        let (mut cams, pts, obs, k) = toy().into_parts();
        cams[2].is_virtual = true;
        let g = BAGraph::build(cams, pts, obs, k).unwrap();
        let s = recover_subgraph(&g, &pick(&[1, 2, 3]), PriorPolicy::GeneralBA).unwrap();
        assert_eq!(s.cameras, vec![CameraId(1), CameraId(2)]);
        assert!(s.graph.cameras().iter().all(|c| !c.is_virtual));
    }
}
