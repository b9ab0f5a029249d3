//! Selections that do not look at the information matrix.

use std::time::Instant;

use rand::seq::index;

use super::{SelectError, Selection};
use crate::graph::{BAGraph, CameraId, GraphError};
use crate::rng::{stream, Stream};

fn check_k(k: usize) -> Result<(), SelectError> {
    if k == 0 {
        return Err(SelectError::KBelowRoots { k, roots: 1 });
    }
    Ok(())
}

/// The root plus the `k − 1` cameras sharing the most points with it, ties
/// to the lowest id.
pub fn covis_select(graph: &BAGraph, root: CameraId, k: usize) -> Result<Selection, SelectError> {
    check_k(k)?;
    let start = Instant::now();
    let weights = graph.covisibility_row(root)?;
    let mut ranked: Vec<(usize, CameraId)> = graph
        .cameras()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.id != root)
        .map(|(s, c)| (weights[s], c.id))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cameras = vec![root];
    cameras.extend(ranked.into_iter().take(k - 1).map(|(_, id)| id));
    Ok(Selection::unscored(cameras, start.elapsed()))
}

/// The root plus a uniformly random `(k − 1)`-subset of the other cameras,
/// listed in ascending id order.
pub fn random_select(graph: &BAGraph, root: CameraId, k: usize, seed: u64) -> Result<Selection, SelectError> {
    check_k(k)?;
    let start = Instant::now();
    graph.camera(root).ok_or(GraphError::UnknownCamera(root))?;
    let others: Vec<CameraId> = graph.camera_ids().into_iter().filter(|&c| c != root).collect();
    let n = (k - 1).min(others.len());
    let mut rng = stream(seed, Stream::Selection);
    let mut picked: Vec<CameraId> = index::sample(&mut rng, others.len(), n)
        .into_iter()
        .map(|i| others[i])
        .collect();
    picked.sort_unstable();
    let mut cameras = vec![root];
    cameras.extend(picked);
    Ok(Selection::unscored(cameras, start.elapsed()))
}

/// Every camera of the graph, roots first and the rest in ascending id order.
pub fn full_select(graph: &BAGraph, roots: &[CameraId]) -> Result<Selection, SelectError> {
    if roots.is_empty() {
        return Err(SelectError::NoRoots);
    }
    for &r in roots {
        graph.camera(r).ok_or(GraphError::UnknownCamera(r))?;
    }
    let mut rest: Vec<CameraId> = graph.camera_ids().into_iter().filter(|c| !roots.contains(c)).collect();
    rest.sort_unstable();
    let mut cameras = roots.to_vec();
    cameras.extend(rest);
    Ok(Selection::unscored(cameras, std::time::Duration::ZERO))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose};
    use crate::graph::{CameraVertex, Observation, PointId, PointVertex};
    use nalgebra::{Vector2, Vector3};

    /// Root c0 shares 9 points with c1, 5 with c2 and 5 with c3.
    fn weighted() -> BAGraph {
        let cams = (0..4).map(|i| CameraVertex::new(i, Pose::identity(), 0)).collect();
        let pts = (0..9).map(|i| PointVertex::new(i, Vector3::new(0.0, 0.0, 1.0))).collect();
        let mut obs = Vec::new();
        for p in 0..9 {
            obs.push(Observation::new(CameraId(0), PointId(p), Vector2::new(1.0, 1.0)));
            obs.push(Observation::new(CameraId(1), PointId(p), Vector2::new(1.0, 1.0)));
            if p < 5 {
                obs.push(Observation::new(CameraId(3), PointId(p), Vector2::new(1.0, 1.0)));
                obs.push(Observation::new(CameraId(2), PointId(p), Vector2::new(1.0, 1.0)));
            }
        }
        let k = Intrinsics::new(10.0, 10.0, 5.0, 5.0, 10.0, 10.0);
        BAGraph::build(cams, pts, obs, vec![k]).unwrap()
    }

    #[test]
    fn covis_ranks_by_weight_then_id() {
        let g = weighted();
        assert_eq!(covis_select(&g, CameraId(0), 1).unwrap().cameras, vec![CameraId(0)]);
        assert_eq!(
            covis_select(&g, CameraId(0), 3).unwrap().cameras,
            vec![CameraId(0), CameraId(1), CameraId(2)]
        );
        assert!(covis_select(&g, CameraId(0), 3).unwrap().logdet.is_none());
        assert!(matches!(covis_select(&g, CameraId(8), 3), Err(SelectError::Graph(_))));
    }

    #[test]
    fn random_is_seeded_and_full_at_k_equals_m() {
        let g = weighted();
        let all = random_select(&g, CameraId(2), 4, 3).unwrap();
        assert_eq!(all.cameras, vec![CameraId(2), CameraId(0), CameraId(1), CameraId(3)]);
        let a = random_select(&g, CameraId(2), 3, 11).unwrap();
        assert_eq!(a.cameras, random_select(&g, CameraId(2), 3, 11).unwrap().cameras);
    }

    #[test]
    fn full_lists_roots_first() {
        let g = weighted();
        let s = full_select(&g, &[CameraId(2)]).unwrap();
        assert_eq!(s.cameras, vec![CameraId(2), CameraId(0), CameraId(1), CameraId(3)]);
    }
}
