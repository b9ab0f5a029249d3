//! Randomized synthetic BA problems: a camera ring in uniform circular
//! motion looking at its centre, observing points scattered in a box.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Intrinsics, Pose};
use crate::graph::{BAGraph, CameraId, CameraVertex, Estimates, GraphError, Observation, PointId, PointVertex};
use crate::rng::{stream, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible scene configuration: {0}")]
    InfeasibleConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScales {
    /// Per-axis rotation noise, radians.
    pub rotation: f64,
    /// Per-axis camera translation noise, meters.
    pub translation: f64,
    /// Per-axis point noise, meters.
    pub point: f64,
}

impl PerturbationScales {
    pub const ZERO: Self = Self {
        rotation: 0.0,
        translation: 0.0,
        point: 0.0,
    };
}

impl Default for PerturbationScales {
    fn default() -> Self {
        Self {
            rotation: 0.02,
            translation: 0.05,
            point: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_cameras: usize,
    pub n_points: usize,
    /// Radius of the camera ring, meters.
    pub radius: f64,
    /// Amplitude of the vertical oscillation along the ring, meters.
    pub height_amplitude: f64,
    /// Half extents of the point box centred on the ring centre, meters.
    pub box_half_extents: [f64; 3],
    pub min_views_per_point: usize,
    pub min_points_per_camera: usize,
    /// Pixel noise standard deviation.
    pub pixel_noise: f64,
    pub perturbation: PerturbationScales,
    pub intrinsics: Intrinsics,
    /// Resampling attempts per point before the configuration is declared infeasible.
    pub max_retries: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl SceneConfig {
    /// 50 cameras, 6000 points.
    pub fn full_scale() -> Self {
        Self {
            n_cameras: 50,
            n_points: 6000,
            radius: 10.0,
            height_amplitude: 0.5,
            // Corners at 0.71 R keep every point metres away from the ring.
            box_half_extents: [5.0, 5.0, 2.0],
            min_views_per_point: 2,
            min_points_per_camera: 20,
            pixel_noise: 1.0,
            perturbation: PerturbationScales::default(),
            intrinsics: Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0),
            max_retries: 200,
        }
    }

    /// Desk-scale variant with 2000 points.
    pub fn ci() -> Self {
        Self {
            n_points: 2000,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InfeasibleConfig(m.to_string()));
        if self.n_cameras < 2 {
            return bad("n_cameras must be at least 2");
        }
        if self.min_views_per_point < 2 {
            return bad("min_views_per_point must be at least 2");
        }
        if self.min_views_per_point > self.n_cameras {
            return bad("min_views_per_point exceeds n_cameras");
        }
        let p = &self.perturbation;
        if !(self.pixel_noise >= 0.0 && p.rotation >= 0.0 && p.translation >= 0.0 && p.point >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if !self.intrinsics.is_valid() {
            return bad("invalid intrinsics");
        }
        if self.box_half_extents.iter().any(|&e| !(e > 0.0)) || !(self.radius > 0.0) {
            return bad("scene extents must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Noisy measurements; vertex states hold the initial estimates.
    pub graph: BAGraph,
    pub ground_truth: Estimates,
    pub initial: Estimates,
}

fn ring_pose(config: &SceneConfig, i: usize) -> Pose {
    let theta = std::f64::consts::TAU * i as f64 / config.n_cameras as f64;
    let center = Vector3::new(
        config.radius * theta.cos(),
        config.radius * theta.sin(),
        config.height_amplitude * (3.0 * theta).sin(),
    );
    Pose::look_at(center, Vector3::zeros(), Vector3::z())
}

fn visible_from(poses: &[Pose], k: &Intrinsics, x: &Vector3<f64>) -> Vec<usize> {
    poses
        .iter()
        .enumerate()
        .filter(|(_, p)| geometry::project(p, k, x).pixel().is_some_and(|px| k.contains(&px)))
        .map(|(i, _)| i)
        .collect()
}

fn sample_in_box(rng: &mut ChaCha8Rng, e: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-e[0]..e[0]),
        rng.random_range(-e[1]..e[1]),
        rng.random_range(-e[2]..e[2]),
    )
}

fn in_box(x: &Vector3<f64>, e: &[f64; 3]) -> bool {
    x.x.abs() < e[0] && x.y.abs() < e[1] && x.z.abs() < e[2]
}

pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<SyntheticScene, SimError> {
    config.validate()?;
    let k = config.intrinsics;
    let poses: Vec<Pose> = (0..config.n_cameras).map(|i| ring_pose(config, i)).collect();
    let mut geo = stream(seed, Stream::Geometry);

    let mut points = Vec::with_capacity(config.n_points);
    let mut views = Vec::with_capacity(config.n_points);
    for _ in 0..config.n_points {
        let mut accepted = None;
        for _ in 0..config.max_retries {
            let x = sample_in_box(&mut geo, &config.box_half_extents);
            let v = visible_from(&poses, &k, &x);
            if v.len() >= config.min_views_per_point {
                accepted = Some((x, v));
                break;
            }
        }
        let (x, v) = accepted.ok_or_else(|| {
            SimError::InfeasibleConfig(format!(
                "no point with {} views after {} draws",
                config.min_views_per_point, config.max_retries
            ))
        })?;
        points.push(x);
        views.push(v);
    }

    // Top up cameras that see too few points by re-drawing points inside
    // their frustum, replacing points whose removal starves no camera.
    let mut counts = vec![0usize; config.n_cameras];
    for v in &views {
        for &c in v {
            counts[c] += 1;
        }
    }
    let mut budget = config.max_retries * config.n_cameras;
    while let Some(cam) = (0..config.n_cameras).find(|&c| counts[c] < config.min_points_per_camera) {
        if budget == 0 || points.is_empty() {
            return Err(SimError::InfeasibleConfig(format!(
                "camera {cam} sees {} < {} points",
                counts[cam], config.min_points_per_camera
            )));
        }
        budget -= 1;
        let px = Vector2::new(geo.random_range(0.0..k.width), geo.random_range(0.0..k.height));
        let depth = geo.random_range(1.0..2.0 * config.radius);
        let ray = Vector3::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy, 1.0) * depth;
        let x = poses[cam].inverse().transform(&ray);
        if !in_box(&x, &config.box_half_extents) {
            continue;
        }
        let v = visible_from(&poses, &k, &x);
        if v.len() < config.min_views_per_point || !v.contains(&cam) {
            continue;
        }
        let victim = geo.random_range(0..points.len());
        let starves = views[victim]
            .iter()
            .any(|&c| !v.contains(&c) && counts[c] <= config.min_points_per_camera);
        if views[victim].contains(&cam) || starves {
            continue;
        }
        for &c in &views[victim] {
            counts[c] -= 1;
        }
        for &c in &v {
            counts[c] += 1;
        }
        points[victim] = x;
        views[victim] = v;
    }

    let mut noise_rng = stream(seed, Stream::Noise);
    let pixel = Normal::new(0.0, config.pixel_noise).expect("validated noise");
    let mut per_camera: Vec<Vec<usize>> = vec![Vec::new(); config.n_cameras];
    for (p, v) in views.iter().enumerate() {
        for &c in v {
            per_camera[c].push(p);
        }
    }
    let mut observations = Vec::new();
    for (c, pts) in per_camera.iter().enumerate() {
        for &p in pts {
            let z = geometry::project(&poses[c], &k, &points[p]).pixel().expect("visible");
            let n = Vector2::new(pixel.sample(&mut noise_rng), pixel.sample(&mut noise_rng));
            observations.push(Observation::new(CameraId(c as u32), PointId(p as u32), z + n));
        }
    }

    let ground_truth = Estimates {
        poses: poses.clone(),
        points: points.clone(),
    };
    let cameras: Vec<CameraVertex> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| CameraVertex::new(i as u32, *p, 0))
        .collect();
    let vertices: Vec<PointVertex> = points
        .iter()
        .enumerate()
        .map(|(i, x)| PointVertex::new(i as u32, *x))
        .collect();
    let gt_graph = BAGraph::build(cameras, vertices, observations, vec![k])?;
    let initial = perturb_estimates(&gt_graph, &ground_truth, &config.perturbation, seed);
    Ok(SyntheticScene {
        graph: gt_graph.with_estimates(&initial),
        ground_truth,
        initial,
    })
}

/// Ground truth plus zero-mean Gaussian noise; fixed vertices are left untouched.
pub fn perturb_estimates(
    graph: &BAGraph,
    ground_truth: &Estimates,
    scales: &PerturbationScales,
    seed: u64,
) -> Estimates {
    let mut rng = stream(seed, Stream::Perturbation);
    let mut gauss = |s: f64| -> Vector3<f64> {
        if s == 0.0 {
            return Vector3::zeros();
        }
        let n = Normal::new(0.0, s).expect("non-negative scale");
        Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))
    };
    let mut out = ground_truth.clone();
    for (c, pose) in graph.cameras().iter().zip(out.poses.iter_mut()) {
        let dr = gauss(scales.rotation);
        let dt = gauss(scales.translation);
        if c.fixed {
            continue;
        }
        pose.rotation = UnitQuaternion::from_scaled_axis(dr) * pose.rotation;
        pose.translation += dt;
    }
    for (p, x) in graph.points().iter().zip(out.points.iter_mut()) {
        let d = gauss(scales.point);
        if !p.fixed {
            *x += d;
        }
    }
    out
}
