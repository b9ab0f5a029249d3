//! Keyframe-by-keyframe walk along a simulated trajectory, running one
//! budget-aware local BA per keyframe.

use std::collections::HashSet;

use lba_core::budget::{
    budget_aware_local_ba, BudgetParams, Calibration, LocalBaConfig, LocalBaMode, TimeModel, TimingSample,
    DEFAULT_REFIT_EVERY,
};
use lba_core::geometry::Pose;
use lba_core::graph::{BAGraph, CameraId, Estimates, PointId};
use lba_core::rng::{derive_seed, stream, Stream};
use lba_core::sim::{generate_scene, SceneConfig, SyntheticScene};
use nalgebra::{UnitQuaternion, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::millis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub seed: u64,
    /// First keyframe that runs a local BA; earlier ones only seed the map.
    pub first_keyframe: usize,
    /// Keyframes ahead used for the predicted pose; 0 predicts the current pose.
    pub horizon: usize,
    /// Predicted-translation noise per axis, relative to the true displacement.
    pub translation_noise: f64,
    /// Predicted-rotation noise per axis, radians.
    pub rotation_noise: f64,
    pub budget: BudgetParams,
    /// Subgraph size the budget cap maps to; budgets are rescaled so that
    /// `t_max` corresponds to `τ(reference_k)`. Defaults to 60% of the cameras.
    pub reference_k: Option<usize>,
    pub local: LocalBaConfig,
    /// Solves between online refits of the time model; `None` disables refits.
    pub refit_every: Option<usize>,
    pub timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::ci(),
            seed: 0,
            first_keyframe: 2,
            horizon: 1,
            translation_noise: 0.1,
            rotation_noise: 0.02,
            budget: BudgetParams::default(),
            reference_k: None,
            local: LocalBaConfig::default(),
            refit_every: Some(DEFAULT_REFIT_EVERY),
            timing: true,
        }
    }
}

/// One keyframe of a trace. Times are in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub mode: String,
    pub keyframe: u32,
    pub n0: usize,
    pub n_future: usize,
    pub t_b_ms: f64,
    pub k: usize,
    pub m: usize,
    pub triggered: bool,
    pub degenerate: bool,
    pub cameras: usize,
    pub points: usize,
    pub selection_ms: f64,
    pub solve_ms: f64,
    pub iterations: usize,
    pub logdet: Option<f64>,
    pub fallback: bool,
    pub refit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub rows: Vec<TraceRow>,
    /// Factor applied to the budget times.
    pub time_scale: f64,
    pub final_model: TimeModel,
    pub estimates: Estimates,
    pub ground_truth: Estimates,
}

pub fn mode_name(mode: LocalBaMode) -> &'static str {
    match mode {
        LocalBaMode::BudgetAware => "budget",
        LocalBaMode::AlwaysFull => "full",
    }
}

impl PipelineTrace {
    /// Share of triggered steps with `solve_ms ≤ factor·t_b_ms`; `None`
    /// without triggered steps.
    pub fn adherence(&self, factor: f64) -> Option<f64> {
        let triggered: Vec<&TraceRow> = self.rows.iter().filter(|r| r.triggered).collect();
        if triggered.is_empty() {
            return None;
        }
        let ok = triggered.iter().filter(|r| r.solve_ms <= factor * r.t_b_ms).count();
        Some(ok as f64 / triggered.len() as f64)
    }

    /// Population standard deviation of the solve times, ms.
    pub fn solve_std(&self) -> f64 {
        let n = self.rows.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.rows.iter().map(|r| r.solve_ms).sum::<f64>() / n;
        (self.rows.iter().map(|r| (r.solve_ms - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Budget scale mapping `t_max` onto `τ(reference_k)`.
pub fn time_scale(model: &TimeModel, params: &BudgetParams, reference_k: usize) -> f64 {
    let k = reference_k.clamp(model.k_min, model.k_max);
    model.tau(k as f64) / params.t_max
}

fn predicted_pose(config: &PipelineConfig, scene: &SyntheticScene, est: &Estimates, i: usize) -> Pose {
    let n = scene.ground_truth.poses.len();
    let mut rng = stream(derive_seed(config.seed, i as u64), Stream::Prediction);
    let mut gauss = |s: f64| -> Vector3<f64> {
        if s <= 0.0 {
            return Vector3::zeros();
        }
        let d = Normal::new(0.0, s).expect("positive scale");
        Vector3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng))
    };
    if config.horizon == 0 {
        let mut p = est.poses[i];
        p.rotation = UnitQuaternion::from_scaled_axis(gauss(config.rotation_noise)) * p.rotation;
        return p;
    }
    let now = scene.ground_truth.poses[i];
    let mut p = scene.ground_truth.poses[(i + config.horizon) % n];
    let step = (p.center() - now.center()).norm();
    let dr = gauss(config.rotation_noise);
    let dc = gauss(config.translation_noise * step);
    // Perturb the centre, then rebuild the world-to-camera translation.
    p.rotation = UnitQuaternion::from_scaled_axis(dr) * p.rotation;
    let c = scene.ground_truth.poses[(i + config.horizon) % n].center() + dc;
    p.translation = -(p.rotation * c);
    p
}

fn local_map(scene: &SyntheticScene, i: usize, optimized: &HashSet<PointId>) -> anyhow::Result<BAGraph> {
    let ids: Vec<CameraId> = scene.graph.cameras()[..=i].iter().map(|c| c.id).collect();
    let local = scene.graph.restrict_to_cameras(&ids, 2)?.with_fixed_cameras(&[]);
    Ok(local.with_points_optimized(optimized.iter().copied()))
}

/// Walks keyframes `first_keyframe..n` of a fresh scene. Both modes walk the
/// same scene and predicted poses for a given seed.
pub fn run_pipeline(config: &PipelineConfig, model: &TimeModel, mode: LocalBaMode) -> anyhow::Result<PipelineTrace> {
    config.budget.validate()?;
    let scene = generate_scene(&config.scene, config.seed)?;
    let n = scene.graph.cameras().len();
    if config.first_keyframe >= n {
        anyhow::bail!("first_keyframe {} is not below the camera count {n}", config.first_keyframe);
    }
    let reference_k = config.reference_k.unwrap_or(((0.6 * n as f64).round() as usize).max(2));
    let scale = time_scale(model, &config.budget, reference_k);
    let mut params = config.budget.scaled(scale);
    params.t_floor = params.t_floor.max(model.tau(model.k_min as f64)).min(params.t_max);
    let local_config = LocalBaConfig { mode, ..config.local };

    // Two anchor cameras at ground truth fix the frame for every local BA.
    let mut est = scene.initial.clone();
    for s in 0..2.min(n) {
        est.poses[s] = scene.ground_truth.poses[s];
    }
    let mut calibration = config.refit_every.map(|r| Calibration::new(model.clone(), r));
    let mut optimized = HashSet::new();
    let mut rows = Vec::with_capacity(n - config.first_keyframe);
    for i in config.first_keyframe..n {
        let local = local_map(&scene, i, &optimized)?;
        let local_est = est.restrict(&scene.graph, &local);
        let current = scene.graph.cameras()[i].id;
        let pose = predicted_pose(config, &scene, &est, i);
        let active = calibration.as_ref().map_or(model, |c| &c.model);
        let out = budget_aware_local_ba(
            &local,
            &local_est,
            current,
            &pose,
            active,
            &params,
            &local_config,
            derive_seed(config.seed ^ 0x5eed, i as u64),
        )?;
        est.absorb(&scene.graph, &local, &out.estimates);
        optimized.extend(out.graph.points().iter().filter(|p| p.optimized_before).map(|p| p.id));

        let solve_ms = out.report.elapsed.as_micros() as f64 / 1000.0;
        let refit = match calibration.as_mut() {
            Some(c) => c.record(TimingSample {
                k: out.cameras.len(),
                ms: solve_ms.max(1e-3),
            }),
            None => false,
        };
        let d = out.decision;
        rows.push(TraceRow {
            mode: mode_name(mode).to_string(),
            keyframe: current.0,
            n0: d.n0,
            n_future: d.n_future,
            t_b_ms: d.t_b * 1000.0,
            k: d.k,
            m: d.m,
            triggered: d.triggered,
            degenerate: d.degenerate,
            cameras: out.cameras.len(),
            points: out.n_points,
            selection_ms: millis(out.selection_time, config.timing),
            solve_ms: if config.timing { solve_ms } else { 0.0 },
            iterations: out.report.iterations,
            logdet: out.selection.as_ref().and_then(|s| s.logdet),
            fallback: out.fallback,
            refit,
        });
    }
    Ok(PipelineTrace {
        rows,
        time_scale: scale,
        final_model: calibration.map_or_else(|| model.clone(), |c| c.model),
        estimates: est,
        ground_truth: scene.ground_truth,
    })
}

pub fn write_trace_csv(rows: &[TraceRow]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
