//! Solve-time calibration: time local solves over a list of subgraph sizes
//! and fit the cubic time model.

use std::time::Instant;

use lba_core::budget::{fit_time_model, BudgetError, TimeModel, TimingSample};
use lba_core::graph::CameraId;
use lba_core::rng::derive_seed;
use lba_core::select::{covis_select, recover_subgraph, PriorPolicy};
use lba_core::sim::{generate_scene, SceneConfig};
use lba_core::solver::{solve, SolveConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub scene: SceneConfig,
    pub ks: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub solver: SolveConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::ci(),
            ks: vec![5, 10, 15, 20, 25, 30, 35, 40, 45, 50],
            repeats: 3,
            seed: 0,
            solver: SolveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutput {
    pub model: TimeModel,
    pub samples: Vec<TimingSample>,
}

/// Wall-clock time of one solve over the `k` cameras most covisible with the
/// newest camera, with the two lowest-id cameras fixed.
pub fn time_solve(scene: &lba_core::sim::SyntheticScene, k: usize, solver: &SolveConfig) -> anyhow::Result<TimingSample> {
    let g = &scene.graph;
    let root = g
        .camera_ids()
        .into_iter()
        .max()
        .ok_or_else(|| anyhow::anyhow!("scene has no cameras"))?;
    let sel = covis_select(g, root, k)?;
    let sub = recover_subgraph(g, &sel, PriorPolicy::GeneralBA)?;
    let mut ids: Vec<CameraId> = sub.cameras.clone();
    ids.sort_unstable();
    ids.truncate(2);
    let sub_graph = sub.graph.with_fixed_cameras(&ids);
    let mut est = scene.initial.restrict(g, &sub_graph);
    for &c in &ids {
        if let (Some(p), Some(s)) = (g.camera_slot(c), sub_graph.camera_slot(c)) {
            est.poses[s] = scene.ground_truth.poses[p];
        }
    }
    let start = Instant::now();
    solve(&sub_graph, &est, solver)?;
    let ms = start.elapsed().as_micros() as f64 / 1000.0;
    Ok(TimingSample {
        k: sub.cameras.len(),
        ms: ms.max(1e-3),
    })
}

/// One fresh scene per repeat; samples are ordered by repeat, then by k.
pub fn run_calibration(config: &CalibrationConfig) -> anyhow::Result<CalibrationOutput> {
    if config.repeats == 0 {
        anyhow::bail!("repeats must be at least 1");
    }
    let mut samples = Vec::with_capacity(config.repeats * config.ks.len());
    for r in 0..config.repeats {
        let scene = generate_scene(&config.scene, derive_seed(config.seed, r as u64))?;
        for &k in &config.ks {
            samples.push(time_solve(&scene, k.min(config.scene.n_cameras), &config.solver)?);
        }
    }
    let model = fit_time_model(&samples)?;
    Ok(CalibrationOutput { model, samples })
}

/// Medians of the samples at each distinct k, ascending in k.
pub fn median_by_k(samples: &[TimingSample]) -> Vec<(usize, f64)> {
    let mut ks: Vec<usize> = samples.iter().map(|s| s.k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let mut v: Vec<f64> = samples.iter().filter(|s| s.k == k).map(|s| s.ms).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            (k, if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
        })
        .collect()
}

/// True when `e` is the too-few-samples error of the model fit.
pub fn is_insufficient(e: &anyhow::Error) -> bool {
    matches!(e.downcast_ref::<BudgetError>(), Some(BudgetError::InsufficientSamples(_)))
}
