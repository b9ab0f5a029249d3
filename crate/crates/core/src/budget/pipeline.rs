//! One budget-aware local BA step: forecast visibility, budget, target size,
//! selection seeded with a virtual keyframe, recovery and solve.

use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{predict_budget, predict_visible_count, size_for_budget, BudgetError, BudgetParams, TimeModel};
use crate::assembly::{assemble, schur_camera_matrix, AssembleOptions, SchurOptions};
use crate::geometry::{self, Pose};
use crate::graph::{BAGraph, CameraId, CameraVertex, Estimates, Observation, DEFAULT_MIN_COVIS_WEIGHT};
use crate::select::{covis_select, lazier_greedy_select, recover_subgraph, PriorPolicy, Selection, DEFAULT_EPSILON};
use crate::solver::{solve, SolveConfig, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalBaMode {
    /// Select a subgraph of the budgeted size whenever it is smaller than the pool.
    BudgetAware,
    /// Always solve the full covisible subgraph; the decision is still reported.
    AlwaysFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalBaConfig {
    pub mode: LocalBaMode,
    pub solve: SolveConfig,
    pub epsilon: f64,
    pub min_weight: usize,
    pub schur: SchurOptions,
    /// Lowest-id cameras of each subproblem held fixed.
    pub n_fixed: usize,
}

impl Default for LocalBaConfig {
    fn default() -> Self {
        Self {
            mode: LocalBaMode::BudgetAware,
            solve: SolveConfig::default(),
            epsilon: DEFAULT_EPSILON,
            min_weight: DEFAULT_MIN_COVIS_WEIGHT,
            schur: SchurOptions::default(),
            n_fixed: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetDecision {
    pub n0: usize,
    pub n_future: usize,
    /// Seconds.
    pub t_b: f64,
    pub degenerate: bool,
    pub k: usize,
    /// Covisible pool size, including the current keyframe.
    pub m: usize,
    /// `k < m`: a subgraph smaller than the pool is wanted.
    pub triggered: bool,
}

#[derive(Debug, Clone)]
pub struct LocalBaOutcome {
    /// Input graph with the solved points flagged `optimized_before`.
    pub graph: BAGraph,
    pub estimates: Estimates,
    pub decision: BudgetDecision,
    /// Present when a subgraph was selected.
    pub selection: Option<Selection>,
    /// Cameras of the solved subproblem; never includes a virtual camera.
    pub cameras: Vec<CameraId>,
    pub n_points: usize,
    pub report: SolveReport,
    /// Building the selection matrix plus selecting.
    pub selection_time: Duration,
    /// Selection failed and the covisibility ranking was used instead.
    pub fallback: bool,
}

/// A virtual camera at `predicted_pose` with noise-free observations of every
/// point it sees.
pub fn make_virtual_keyframe(
    graph: &BAGraph,
    estimates: &Estimates,
    predicted_pose: &Pose,
    intrinsics_ref: usize,
) -> Result<(CameraVertex, Vec<Observation>), BudgetError> {
    let k = graph
        .intrinsics()
        .get(intrinsics_ref)
        .ok_or(BudgetError::InvalidParams("intrinsics_ref out of range"))?;
    let id = graph.cameras().iter().map(|c| c.id.0 + 1).max().unwrap_or(0);
    let mut cam = CameraVertex::new(id, *predicted_pose, intrinsics_ref);
    cam.is_virtual = true;
    let obs: Vec<Observation> = graph
        .points()
        .iter()
        .zip(&estimates.points)
        .filter_map(|(p, x)| {
            let z = geometry::project(predicted_pose, k, x).pixel()?;
            k.contains(&z).then(|| Observation::new(cam.id, p.id, z))
        })
        .collect();
    if obs.is_empty() {
        return Err(BudgetError::NoVisiblePoints);
    }
    Ok((cam, obs))
}

#[allow(clippy::too_many_arguments)]
fn select_with_virtual(
    graph: &BAGraph,
    estimates: &Estimates,
    local_cams: &[CameraId],
    current_kf: CameraId,
    predicted_pose: &Pose,
    k: usize,
    config: &LocalBaConfig,
    seed: u64,
) -> Result<(BAGraph, Selection), BudgetError> {
    let local = graph.restrict_to_cameras(local_cams, 1)?;
    let local_est = estimates.restrict(graph, &local);
    let kref = local.camera(current_kf).expect("current keyframe is local").intrinsics_ref;
    let (vcam, vobs) = make_virtual_keyframe(&local, &local_est, predicted_pose, kref)?;
    let vid = vcam.id;
    let with_virtual = local.with_camera(vcam, vobs)?;
    let mut est = local_est;
    est.poses.push(*predicted_pose);

    let free = with_virtual.with_fixed_cameras(&[]);
    let sys = assemble(&free, &est, &AssembleOptions::default())?;
    let m = schur_camera_matrix(&sys, &config.schur)?;
    let selection = lazier_greedy_select(&m, &[current_kf, vid], k + 1, config.epsilon, seed)?;
    Ok((with_virtual, selection))
}

/// Runs one local BA around `current_kf`. The subproblem's `n_fixed`
/// lowest-id cameras are held fixed to remove the gauge freedom.
#[allow(clippy::too_many_arguments)]
pub fn budget_aware_local_ba(
    graph: &BAGraph,
    estimates: &Estimates,
    current_kf: CameraId,
    predicted_pose: &Pose,
    model: &TimeModel,
    params: &BudgetParams,
    config: &LocalBaConfig,
    seed: u64,
) -> Result<LocalBaOutcome, BudgetError> {
    let slot = graph.camera_slot(current_kf).ok_or(BudgetError::UnknownCamera(current_kf))?;
    let intrinsics = graph.camera_intrinsics(slot);
    let n0 = predict_visible_count(estimates, &estimates.poses[slot], intrinsics);
    let n_future = predict_visible_count(estimates, predicted_pose, intrinsics);
    let prediction = predict_budget(n0, n_future, params)?;
    let k = size_for_budget(model, prediction.t_b);
    let pool = graph.covisible_pool(&[current_kf], config.min_weight)?;
    let m = pool.len() + 1;
    let decision = BudgetDecision {
        n0,
        n_future,
        t_b: prediction.t_b,
        degenerate: prediction.degenerate,
        k,
        m,
        triggered: k < m,
    };
    let mut local_cams = vec![current_kf];
    local_cams.extend(&pool);

    let start = Instant::now();
    let mut fallback = false;
    let (source, selection) = if decision.triggered && config.mode == LocalBaMode::BudgetAware {
        match select_with_virtual(graph, estimates, &local_cams, current_kf, predicted_pose, k, config, seed) {
            Ok((g, s)) => (Some(g), Some(s)),
            Err(e) => {
                warn!("selection failed ({e}); falling back to covisibility ranking");
                fallback = true;
                let local = graph.restrict_to_cameras(&local_cams, 1)?;
                (None, Some(covis_select(&local, current_kf, k)?))
            }
        }
    } else {
        (None, None)
    };
    let selection_time = start.elapsed();

    let chosen = selection
        .clone()
        .unwrap_or_else(|| Selection::unscored(local_cams.clone(), Duration::ZERO));
    let sub = recover_subgraph(source.as_ref().unwrap_or(graph), &chosen, PriorPolicy::SlamMode)?;
    let mut ids = sub.cameras.clone();
    ids.sort_unstable();
    ids.truncate(config.n_fixed);
    let sub_graph = sub.graph.with_fixed_cameras(&ids);
    let sub_est = estimates.restrict(graph, &sub_graph);
    let (solved, report) = solve(&sub_graph, &sub_est, &config.solve)?;
    let mut out = estimates.clone();
    out.absorb(graph, &sub_graph, &solved);

    Ok(LocalBaOutcome {
        graph: graph.with_points_optimized(sub.free_points.iter().copied()),
        estimates: out,
        decision,
        selection,
        cameras: sub.cameras,
        n_points: sub_graph.points().len(),
        report,
        selection_time,
        fallback,
    })
}
