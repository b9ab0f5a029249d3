//! Local-BA time budgets from forecast point visibility, and their mapping to
//! a target subgraph size through a calibrated solve-time model.

mod model;
mod pipeline;

pub use model::{fit_time_model, size_for_budget, Calibration, TimeModel, DEFAULT_K_MIN, DEFAULT_REFIT_EVERY};
pub use pipeline::{
    budget_aware_local_ba, make_virtual_keyframe, BudgetDecision, LocalBaConfig, LocalBaMode, LocalBaOutcome,
};

pub use crate::io::TimingSample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::geometry::{self, Intrinsics, Pose};
use crate::graph::{Estimates, GraphError};
use crate::select::SelectError;
use crate::solver::SolveError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("invalid budget parameters: {0}")]
    InvalidParams(&'static str),
    #[error("no points are visible from the current pose")]
    ZeroVisibility,
    #[error("need at least 4 distinct k values, got {0}")]
    InsufficientSamples(usize),
    #[error("calibration sample k = {k} has non-positive or non-finite time {ms} ms")]
    InvalidSample { k: usize, ms: f64 },
    #[error("time model is not increasing after k = {0}")]
    NonMonotone(usize),
    #[error("no points are visible from the predicted pose")]
    NoVisiblePoints,
    #[error("camera {0} is not in the graph")]
    UnknownCamera(crate::graph::CameraId),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetParams {
    /// Prediction horizon, seconds.
    pub t_p: f64,
    /// Budget cap, seconds.
    pub t_max: f64,
    /// Visible-point count regarded as the minimum for reliable tracking.
    pub n_min: usize,
    /// Budget floor, seconds; set to `τ(k_min)` when a time model is known.
    pub t_floor: f64,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self {
            t_p: 0.5,
            t_max: 0.8,
            n_min: 240,
            t_floor: 0.0,
        }
    }
}

impl BudgetParams {
    pub fn validate(&self) -> Result<(), BudgetError> {
        if !(self.t_p > 0.0 && self.t_p <= self.t_max) {
            return Err(BudgetError::InvalidParams("need 0 < t_p <= t_max"));
        }
        if self.n_min == 0 {
            return Err(BudgetError::InvalidParams("n_min must be at least 1"));
        }
        if !(self.t_floor >= 0.0 && self.t_floor <= self.t_max) {
            return Err(BudgetError::InvalidParams("need 0 <= t_floor <= t_max"));
        }
        Ok(())
    }

    /// All times multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            t_p: self.t_p * s,
            t_max: self.t_max * s,
            t_floor: self.t_floor * s,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPrediction {
    /// Budget in seconds, within `[t_floor, t_max]`.
    pub t_b: f64,
    /// The current view already sees no more than `n_min` points, so the
    /// visibility formula gives no usable budget; `t_b` is the floor.
    pub degenerate: bool,
}

/// Number of estimated points that project inside the image of a camera at
/// `pose`, with positive depth.
pub fn predict_visible_count(estimates: &Estimates, pose: &Pose, intrinsics: &Intrinsics) -> usize {
    estimates
        .points
        .iter()
        .filter(|x| {
            geometry::project(pose, intrinsics, x)
                .pixel()
                .is_some_and(|px| intrinsics.contains(&px))
        })
        .count()
}

/// `t_b = ((N0 − N_min) / (N0 − N_future))·t_p` when visibility is falling
/// (`N_future < N0`), else `t_max`; always clamped to `[t_floor, t_max]`.
pub fn predict_budget(n0: usize, n_future: usize, params: &BudgetParams) -> Result<BudgetPrediction, BudgetError> {
    params.validate()?;
    if n0 == 0 {
        return Err(BudgetError::ZeroVisibility);
    }
    if n_future >= n0 {
        return Ok(BudgetPrediction {
            t_b: params.t_max,
            degenerate: false,
        });
    }
    if n0 <= params.n_min {
        return Ok(BudgetPrediction {
            t_b: params.t_floor,
            degenerate: true,
        });
    }
    let t = (n0 - params.n_min) as f64 / (n0 - n_future) as f64 * params.t_p;
    Ok(BudgetPrediction {
        t_b: t.clamp(params.t_floor, params.t_max),
        degenerate: false,
    })
}
