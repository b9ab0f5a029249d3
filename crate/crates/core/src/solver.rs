//! Gauss-Newton / Levenberg-Marquardt on BA (sub)problems, solved through the
//! reduced camera system with point back-substitution.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{assemble, eliminate_points, objective, AssembleOptions, AssemblyError, NormalSystem, POSE_DOF};
use crate::graph::{BAGraph, Estimates, PointId};
use crate::linalg::CholFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    GaussNewton,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_iterations: usize,
    pub mode: SolverMode,
    /// Initial λ for `Λ + λ·diag(Λ)`.
    pub initial_damping: f64,
    /// Stop when `‖δ‖ ≤ tol·(‖x‖ + tol)`.
    pub step_tolerance: f64,
    /// Stop when `max |η| ≤ tol`.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step lowers the objective by less than `tol` relative.
    pub function_tolerance: f64,
    /// Damping increases tried within one iteration before giving up.
    pub max_rejections: usize,
    pub huber: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            mode: SolverMode::LevenbergMarquardt,
            initial_damping: 1e-4,
            step_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            function_tolerance: 1e-12,
            max_rejections: 10,
            huber: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    StepTolerance,
    FunctionTolerance,
    /// Every damped step within one iteration was rejected.
    NoProgress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Objective before the first iteration and after each iteration.
    pub trace: Vec<f64>,
    pub rejected_steps: usize,
    pub elapsed: Duration,
    pub termination: Termination,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("reduced system is not positive definite")]
    SingularSystem,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Increment for `(Λ + λ·diag Λ)·δ = η`, cameras first then points, or `None`
/// if the damped system is not positive definite.
pub(crate) fn schur_step(sys: &NormalSystem, lambda: f64) -> Option<(Vec<Vector6<f64>>, Vec<Vector3<f64>>)> {
    let damp6 = |h: &Matrix6<f64>| h + Matrix6::from_diagonal(&h.diagonal()) * lambda;
    let hcc: Vec<Matrix6<f64>> = sys.hcc.iter().map(damp6).collect();
    let reduced = eliminate_points(sys, &hcc, |h| h + Matrix3::from_diagonal(&h.diagonal()) * lambda).ok()?;
    let nc = sys.n_free_cameras();
    let dc = if nc > 0 {
        let factor = CholFactor::factor_dense(&reduced.matrix.to_dense(), &vec![POSE_DOF; nc]).ok()?;
        factor.solve(&reduced.rhs).ok()?
    } else {
        DVector::zeros(0)
    };
    let cams: Vec<Vector6<f64>> = (0..nc).map(|c| dc.fixed_rows::<6>(6 * c).into_owned()).collect();
    let points = sys
        .hcp
        .iter()
        .enumerate()
        .map(|(p, blocks)| {
            let mut r = sys.gp[p];
            for (c, w) in blocks {
                r -= w.transpose() * cams[*c];
            }
            reduced.hpp_inv[p] * r
        })
        .collect();
    Some((cams, points))
}

fn apply(graph: &BAGraph, sys: &NormalSystem, est: &Estimates, step: &(Vec<Vector6<f64>>, Vec<Vector3<f64>>)) -> Estimates {
    let mut out = est.clone();
    for (s, b) in sys.camera_block.iter().enumerate() {
        if let Some(b) = b {
            out.poses[s] = est.poses[s].retract(&step.0[*b]);
        }
    }
    for (s, b) in sys.point_block.iter().enumerate() {
        if let Some(b) = b {
            out.points[s] = est.points[s] + step.1[*b];
        }
    }
    debug_assert_eq!(out.poses.len(), graph.cameras().len());
    out
}

fn step_norms(step: &(Vec<Vector6<f64>>, Vec<Vector3<f64>>), sys: &NormalSystem, est: &Estimates) -> (f64, f64) {
    let dx = step.0.iter().map(|v| v.norm_squared()).sum::<f64>() + step.1.iter().map(|v| v.norm_squared()).sum::<f64>();
    let mut x = 0.0;
    for (s, b) in sys.camera_block.iter().enumerate() {
        if b.is_some() {
            x += est.poses[s].translation.norm_squared();
        }
    }
    for (s, b) in sys.point_block.iter().enumerate() {
        if b.is_some() {
            x += est.points[s].norm_squared();
        }
    }
    (dx.sqrt(), x.sqrt())
}

/// Refines the free vertices of `graph` starting from `initial`. Fixed
/// vertices are returned unchanged.
pub fn solve(graph: &BAGraph, initial: &Estimates, config: &SolveConfig) -> Result<(Estimates, SolveReport), SolveError> {
    if config.max_iterations == 0 {
        return Err(SolveError::InvalidConfig("max_iterations must be at least 1"));
    }
    if !(config.initial_damping > 0.0) {
        return Err(SolveError::InvalidConfig("initial damping must be positive"));
    }
    let start = Instant::now();
    let options = AssembleOptions { huber: config.huber };
    let mut est = initial.clone();
    let mut lambda = config.initial_damping;
    let mut trace = Vec::new();
    let mut rejected_steps = 0;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < config.max_iterations {
        let sys = assemble(graph, &est, &options)?;
        if trace.is_empty() {
            trace.push(sys.cost);
        }
        let grad = sys.gc.iter().flat_map(|g| g.iter()).chain(sys.gp.iter().flat_map(|g| g.iter()));
        if grad.fold(0.0f64, |m, v| m.max(v.abs())) <= config.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        let accepted = match config.mode {
            SolverMode::GaussNewton => {
                let step = schur_step(&sys, 0.0).ok_or(SolveError::SingularSystem)?;
                let next = apply(graph, &sys, &est, &step);
                let cost = objective(graph, &next, &options);
                cost.map(|c| (step, next, c))
            }
            SolverMode::LevenbergMarquardt => {
                let mut found = None;
                for _ in 0..=config.max_rejections {
                    if let Some(step) = schur_step(&sys, lambda) {
                        let next = apply(graph, &sys, &est, &step);
                        if let Some(c) = objective(graph, &next, &options).filter(|&c| c <= sys.cost) {
                            lambda = (lambda / 3.0).max(1e-12);
                            found = Some((step, next, c));
                            break;
                        }
                    }
                    rejected_steps += 1;
                    lambda *= 10.0;
                }
                found
            }
        };
        let Some((step, next, cost)) = accepted else {
            termination = Termination::NoProgress;
            break;
        };
        let (dx, x) = step_norms(&step, &sys, &est);
        est = next;
        trace.push(cost);
        if dx <= config.step_tolerance * (x + config.step_tolerance) {
            termination = Termination::StepTolerance;
            break;
        }
        if sys.cost - cost <= config.function_tolerance * sys.cost {
            termination = Termination::FunctionTolerance;
            break;
        }
    }

    let final_objective = *trace.last().expect("trace holds the initial objective");
    Ok((
        est,
        SolveReport {
            iterations,
            initial_objective: trace[0],
            final_objective,
            trace,
            rejected_steps,
            elapsed: start.elapsed(),
            termination,
        },
    ))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmseError {
    #[error("empty point subset")]
    EmptySubset,
    #[error("point {0} is missing from the estimates or the ground truth")]
    MissingPoint(PointId),
}

/// Point positions keyed by id.
pub type PointMap = HashMap<PointId, Vector3<f64>>;

pub fn point_map(graph: &BAGraph, est: &Estimates) -> PointMap {
    graph.points().iter().zip(&est.points).map(|(p, x)| (p.id, *x)).collect()
}

/// `sqrt(mean ‖x̂ − x‖²)` over `subset`.
pub fn point_rmse(estimates: &PointMap, ground_truth: &PointMap, subset: &[PointId]) -> Result<f64, RmseError> {
    if subset.is_empty() {
        return Err(RmseError::EmptySubset);
    }
    let mut sum = 0.0;
    for id in subset {
        let (Some(a), Some(b)) = (estimates.get(id), ground_truth.get(id)) else {
            return Err(RmseError::MissingPoint(*id));
        };
        sum += (a - b).norm_squared();
    }
    Ok((sum / subset.len() as f64).sqrt())
}

/// Ids present in every list, ascending.
pub fn intersect_points<'a>(sets: impl IntoIterator<Item = &'a [PointId]>) -> Vec<PointId> {
    let mut iter = sets.into_iter();
    let Some(first) = iter.next() else {
        return Vec::new();
    };
    let mut acc: std::collections::BTreeSet<PointId> = first.iter().copied().collect();
    for s in iter {
        let other: std::collections::HashSet<PointId> = s.iter().copied().collect();
        acc.retain(|p| other.contains(p));
    }
    acc.into_iter().collect()
}
