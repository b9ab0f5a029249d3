//! Reprojection residuals, analytical Jacobians, Gauss-Newton normal
//! equations and the Schur complement onto camera states.
//!
//! Pose Jacobians are taken with respect to the right-multiplied local
//! perturbation of [`Pose::retract`]: rotation first, then translation.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix2x6, Matrix3, Matrix6, Matrix6x3, Vector2, Vector3, Vector6};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{self, Intrinsics, Pose, Projection};
use crate::graph::{BAGraph, CameraId, Estimates, Observation, PointId};
use crate::linalg::BlockSparseSPD;

pub const POSE_DOF: usize = 6;
pub const POINT_DOF: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("point {1} is behind camera {0}")]
    PointBehindCamera(CameraId, PointId),
    #[error("problem has no free variables")]
    NoFreeVariables,
    #[error("point block {0} is singular after regularization")]
    SingularPointBlock(PointId),
}

/// Whitened residual and Jacobians of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    /// `Σ^{-1/2}·(π(X) − z)`.
    pub residual: Vector2<f64>,
    pub jc: Matrix2x6<f64>,
    pub jp: Matrix2x3<f64>,
}

/// `W` with `Wᵀ·W = Σ⁻¹`, the inverse of the lower Cholesky factor of `Σ`.
pub fn whitening(sigma: &Matrix2<f64>) -> Matrix2<f64> {
    let a = sigma[(0, 0)].sqrt();
    let b = sigma[(1, 0)] / a;
    let c = (sigma[(1, 1)] - b * b).sqrt();
    Matrix2::new(1.0 / a, 0.0, -b / (a * c), 1.0 / c)
}

/// Unwhitened residual `π(X) − z`, or `None` when the point is behind.
pub fn raw_residual(pose: &Pose, k: &Intrinsics, point: &Vector3<f64>, z: &Vector2<f64>) -> Option<Vector2<f64>> {
    match geometry::project(pose, k, point) {
        Projection::Pixel(p) => Some(p - z),
        Projection::Behind => None,
    }
}

pub fn residual_and_jacobians(
    pose: &Pose,
    k: &Intrinsics,
    point: &Vector3<f64>,
    obs: &Observation,
) -> Result<Linearization, AssemblyError> {
    let pc = pose.transform(point);
    if pc.z <= geometry::DEPTH_EPS {
        return Err(AssemblyError::PointBehindCamera(obs.camera, obs.point));
    }
    let iz = 1.0 / pc.z;
    let proj = Vector2::new(k.fx * pc.x * iz + k.cx, k.fy * pc.y * iz + k.cy);
    let dpi = Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * pc.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * pc.y * iz * iz,
    );
    let r = pose.rotation.to_rotation_matrix().into_inner();
    // d(R·Exp(ω)·X)/dω = −R·[X]×,  d(R·ν)/dν = R
    let mut dpc = nalgebra::Matrix3x6::zeros();
    dpc.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-r * geometry::skew(point)));
    dpc.fixed_view_mut::<3, 3>(0, 3).copy_from(&r);

    let w = whitening(&obs.sigma);
    Ok(Linearization {
        residual: w * (proj - obs.measurement),
        jc: w * dpi * dpc,
        jp: w * dpi * r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssembleOptions {
    /// Huber threshold on the whitened residual norm; `None` is plain least squares.
    pub huber: Option<f64>,
}

/// Per-observation cost `ρ(‖r‖²)`.
fn robust_cost(sq: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(d) if sq > d * d => 2.0 * d * sq.sqrt() - d * d,
        _ => sq,
    }
}

fn robust_weight(sq: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(d) if sq > d * d => d / sq.sqrt(),
        _ => 1.0,
    }
}

/// Least-squares objective `Σ ρ(‖Σ^{-1/2}(π − z)‖²)`, `None` if any point is behind its camera.
pub fn objective(graph: &BAGraph, est: &Estimates, options: &AssembleOptions) -> Option<f64> {
    let mut total = 0.0;
    for (i, o) in graph.observations().iter().enumerate() {
        let (cs, ps) = graph.observation_slots(i);
        let r = raw_residual(&est.poses[cs], graph.camera_intrinsics(cs), &est.points[ps], &o.measurement)?;
        let rw = whitening(&o.sigma) * r;
        total += robust_cost(rw.norm_squared(), options.huber);
    }
    Some(total)
}

/// Normal equations `Λ·δ = η` over the free vertices, with `Λ` split into
/// camera, point and camera-point blocks.
#[derive(Debug, Clone)]
pub struct NormalSystem {
    /// Camera slot → free camera block.
    pub camera_block: Vec<Option<usize>>,
    /// Point slot → free point block.
    pub point_block: Vec<Option<usize>>,
    pub free_cameras: Vec<CameraId>,
    pub free_points: Vec<PointId>,
    /// Diagonal blocks of `Λcc`; camera-camera coupling only arises through points.
    pub hcc: Vec<Matrix6<f64>>,
    pub hpp: Vec<Matrix3<f64>>,
    /// `Λcp` grouped by point block: `(camera block, Λcp block)`.
    pub hcp: Vec<Vec<(usize, Matrix6x3<f64>)>>,
    /// `η = −Jᵀ·r` for cameras.
    pub gc: Vec<Vector6<f64>>,
    pub gp: Vec<Vector3<f64>>,
    /// Objective at the linearization point.
    pub cost: f64,
}

struct PointTerms {
    hpp: Matrix3<f64>,
    gp: Vector3<f64>,
    cams: Vec<(usize, Matrix6<f64>, Vector6<f64>, Option<Matrix6x3<f64>>)>,
    cost: f64,
}

pub fn assemble(graph: &BAGraph, est: &Estimates, options: &AssembleOptions) -> Result<NormalSystem, AssemblyError> {
    let mut camera_block = vec![None; graph.cameras().len()];
    let mut free_cameras = Vec::new();
    for (s, c) in graph.cameras().iter().enumerate() {
        if !c.fixed {
            camera_block[s] = Some(free_cameras.len());
            free_cameras.push(c.id);
        }
    }
    let mut point_block = vec![None; graph.points().len()];
    let mut free_points = Vec::new();
    for (s, p) in graph.points().iter().enumerate() {
        if !p.fixed {
            point_block[s] = Some(free_points.len());
            free_points.push(p.id);
        }
    }
    if free_cameras.is_empty() && free_points.is_empty() {
        return Err(AssemblyError::NoFreeVariables);
    }

    // Per-point terms are independent; merging them in point order keeps the
    // result identical for any thread count.
    let terms: Vec<PointTerms> = (0..graph.points().len())
        .into_par_iter()
        .map(|ps| {
            let mut t = PointTerms {
                hpp: Matrix3::zeros(),
                gp: Vector3::zeros(),
                cams: Vec::new(),
                cost: 0.0,
            };
            let point_free = point_block[ps].is_some();
            for &oi in graph.point_observations(ps) {
                let (cs, _) = graph.observation_slots(oi);
                let obs = &graph.observations()[oi];
                let lin = residual_and_jacobians(&est.poses[cs], graph.camera_intrinsics(cs), &est.points[ps], obs)?;
                let sq = lin.residual.norm_squared();
                t.cost += robust_cost(sq, options.huber);
                let w = robust_weight(sq, options.huber);
                if point_free {
                    t.hpp += w * lin.jp.transpose() * lin.jp;
                    t.gp -= w * lin.jp.transpose() * lin.residual;
                }
                if let Some(cb) = camera_block[cs] {
                    let hcc = w * lin.jc.transpose() * lin.jc;
                    let gc = -w * lin.jc.transpose() * lin.residual;
                    let hcp = point_free.then(|| w * lin.jc.transpose() * lin.jp);
                    t.cams.push((cb, hcc, gc, hcp));
                }
            }
            Ok(t)
        })
        .collect::<Result<_, AssemblyError>>()?;

    let nc = free_cameras.len();
    let np = free_points.len();
    let mut sys = NormalSystem {
        camera_block,
        point_block,
        free_cameras,
        free_points,
        hcc: vec![Matrix6::zeros(); nc],
        hpp: vec![Matrix3::zeros(); np],
        hcp: vec![Vec::new(); np],
        gc: vec![Vector6::zeros(); nc],
        gp: vec![Vector3::zeros(); np],
        cost: 0.0,
    };
    for (ps, t) in terms.into_iter().enumerate() {
        sys.cost += t.cost;
        let pb = sys.point_block[ps];
        if let Some(pb) = pb {
            sys.hpp[pb] = t.hpp;
            sys.gp[pb] = t.gp;
        }
        for (cb, hcc, gc, hcp) in t.cams {
            sys.hcc[cb] += hcc;
            sys.gc[cb] += gc;
            if let (Some(pb), Some(hcp)) = (pb, hcp) {
                sys.hcp[pb].push((cb, hcp));
            }
        }
    }
    Ok(sys)
}

impl NormalSystem {
    pub fn n_free_cameras(&self) -> usize {
        self.free_cameras.len()
    }

    pub fn n_free_points(&self) -> usize {
        self.free_points.len()
    }

    pub fn dim(&self) -> usize {
        POSE_DOF * self.n_free_cameras() + POINT_DOF * self.n_free_points()
    }

    /// `δ = δ_rel · mean(diag Λpp)`.
    pub fn point_regularization(&self, delta_rel: f64) -> f64 {
        if self.hpp.is_empty() {
            return 0.0;
        }
        let mean = self.hpp.iter().map(|h| h.trace()).sum::<f64>() / (POINT_DOF * self.hpp.len()) as f64;
        delta_rel * mean
    }

    /// Dense `Λ` ordered `[cameras; points]`, with `point_delta` added to the point diagonal.
    pub fn to_dense(&self, point_delta: f64) -> DMatrix<f64> {
        let nc = POSE_DOF * self.n_free_cameras();
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for (c, h) in self.hcc.iter().enumerate() {
            d.fixed_view_mut::<6, 6>(6 * c, 6 * c).copy_from(h);
        }
        for (p, h) in self.hpp.iter().enumerate() {
            let o = nc + 3 * p;
            d.fixed_view_mut::<3, 3>(o, o).copy_from(&(h + Matrix3::identity() * point_delta));
            for (c, w) in &self.hcp[p] {
                d.fixed_view_mut::<6, 3>(6 * c, o).copy_from(w);
                d.fixed_view_mut::<3, 6>(o, 6 * c).copy_from(&w.transpose());
            }
        }
        d
    }

    /// Dense `η` ordered `[cameras; points]`.
    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        let nc = POSE_DOF * self.n_free_cameras();
        for (c, v) in self.gc.iter().enumerate() {
            g.fixed_rows_mut::<6>(6 * c).copy_from(v);
        }
        for (p, v) in self.gp.iter().enumerate() {
            g.fixed_rows_mut::<3>(nc + 3 * p).copy_from(v);
        }
        g
    }
}

/// Output of eliminating the point blocks.
pub(crate) struct Reduced {
    pub matrix: BlockSparseSPD,
    pub rhs: DVector<f64>,
    /// `(Λpp + shift)⁻¹` per point block.
    pub hpp_inv: Vec<Matrix3<f64>>,
}

/// Eliminates points from the system whose camera diagonal blocks are
/// `hcc` and whose point blocks are `sys.hpp` transformed by `point_block`.
pub(crate) fn eliminate_points(
    sys: &NormalSystem,
    hcc: &[Matrix6<f64>],
    point_block: impl Fn(&Matrix3<f64>) -> Matrix3<f64> + Sync,
) -> Result<Reduced, AssemblyError> {
    let nc = sys.n_free_cameras();
    let hpp_inv: Vec<Matrix3<f64>> = sys
        .hpp
        .par_iter()
        .enumerate()
        .map(|(p, h)| {
            let reg = point_block(h);
            reg.cholesky()
                .map(|c| c.inverse())
                .ok_or(AssemblyError::SingularPointBlock(sys.free_points[p]))
        })
        .collect::<Result<_, _>>()?;

    let mut matrix = BlockSparseSPD::uniform(nc, POSE_DOF);
    let mut rhs = DVector::zeros(POSE_DOF * nc);
    for (c, h) in hcc.iter().enumerate() {
        matrix.add_block(c, c, &DMatrix::from_column_slice(6, 6, h.as_slice()));
        rhs.fixed_rows_mut::<6>(6 * c).copy_from(&sys.gc[c]);
    }
    // Dense accumulation per camera pair, then one insertion per touched block.
    let mut pairs: std::collections::BTreeMap<(usize, usize), Matrix6<f64>> = Default::default();
    for (p, cams) in sys.hcp.iter().enumerate() {
        let inv = &hpp_inv[p];
        let t: Vec<Matrix6x3<f64>> = cams.iter().map(|(_, w)| w * inv).collect();
        for (a, (ca, _)) in cams.iter().enumerate() {
            let ya = t[a] * sys.gp[p];
            let mut r = rhs.fixed_rows_mut::<6>(6 * ca);
            r -= ya;
            for (cb, wb) in cams.iter().filter(|(cb, _)| cb <= ca) {
                *pairs.entry((*ca, *cb)).or_insert_with(Matrix6::zeros) -= t[a] * wb.transpose();
            }
        }
    }
    for ((i, j), v) in pairs {
        matrix.add_block(i, j, &DMatrix::from_column_slice(6, 6, v.as_slice()));
    }
    Ok(Reduced { matrix, rhs, hpp_inv })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SchurOptions {
    /// Point-block regularization relative to `mean(diag Λpp)`.
    pub point_delta_rel: f64,
    /// Camera-matrix regularization relative to `trace(M)/dim(M)`.
    pub camera_delta_rel: f64,
}

impl Default for SchurOptions {
    fn default() -> Self {
        Self {
            point_delta_rel: 1e-8,
            camera_delta_rel: 1e-9,
        }
    }
}

/// Camera-only information matrix `M = Λcc − Λcp·Λpp⁻¹·Λcpᵀ`.
#[derive(Debug, Clone)]
pub struct CameraOnlyMatrix {
    pub matrix: BlockSparseSPD,
    /// Camera id of each block, in block order.
    pub cameras: Vec<CameraId>,
    /// Absolute regularizations applied to `Λpp` and to `M`.
    pub point_delta: f64,
    pub camera_delta: f64,
}

impl CameraOnlyMatrix {
    pub fn block_of(&self, id: CameraId) -> Option<usize> {
        self.cameras.iter().position(|&c| c == id)
    }

    pub fn n_cameras(&self) -> usize {
        self.cameras.len()
    }
}

pub fn schur_camera_matrix(sys: &NormalSystem, options: &SchurOptions) -> Result<CameraOnlyMatrix, AssemblyError> {
    if sys.n_free_cameras() == 0 {
        return Err(AssemblyError::NoFreeVariables);
    }
    let point_delta = sys.point_regularization(options.point_delta_rel);
    let reduced = eliminate_points(sys, &sys.hcc, |h| h + Matrix3::identity() * point_delta)?;
    let mut matrix = reduced.matrix;
    let camera_delta = options.camera_delta_rel * matrix.trace() / matrix.dim() as f64;
    if camera_delta > 0.0 {
        matrix.add_identity(camera_delta);
    }
    Ok(CameraOnlyMatrix {
        matrix,
        cameras: sys.free_cameras.clone(),
        point_delta,
        camera_delta,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::graph::{CameraVertex, PointVertex};
    use crate::linalg::logdet_dense;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_graph(n_cams: u32, n_pts: u32, seed: u64) -> (BAGraph, Estimates) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = Intrinsics::new(300.0, 310.0, 320.0, 240.0, 640.0, 480.0);
        let cams: Vec<CameraVertex> = (0..n_cams)
            .map(|i| {
                let c = Vector3::new(i as f64 * 0.7 - 0.5, rng.random::<f64>() * 0.2, -6.0);
                let pose = Pose::look_at(c, Vector3::new(0.0, 0.0, 0.0), -Vector3::y());
                CameraVertex::new(i, pose, 0)
            })
            .collect();
        let pts: Vec<PointVertex> = (0..n_pts)
            .map(|i| {
                PointVertex::new(
                    i,
                    Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 2.0,
                )
            })
            .collect();
        let mut obs = Vec::new();
        for c in &cams {
            for p in &pts {
                let z = geometry::project(&c.pose, &k, &p.position).pixel().unwrap();
                let noise = Vector2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                obs.push(Observation::new(c.id, p.id, z + noise));
            }
        }
        let g = BAGraph::build(cams, pts, obs, vec![k]).unwrap();
        let est = Estimates::from_graph(&g);
        (g, est)
    }

    /// Stack J and r explicitly, row by row, over the free variables.
    pub(crate) fn dense_stack(g: &BAGraph, est: &Estimates) -> (DMatrix<f64>, DVector<f64>) {
        let sys = assemble(g, est, &AssembleOptions::default()).unwrap();
        let nc = 6 * sys.n_free_cameras();
        let n = sys.dim();
        let m = g.observations().len();
        let mut j = DMatrix::zeros(2 * m, n);
        let mut r = DVector::zeros(2 * m);
        for (i, o) in g.observations().iter().enumerate() {
            let (cs, ps) = g.observation_slots(i);
            let lin = residual_and_jacobians(&est.poses[cs], g.camera_intrinsics(cs), &est.points[ps], o).unwrap();
            r.fixed_rows_mut::<2>(2 * i).copy_from(&lin.residual);
            if let Some(cb) = sys.camera_block[cs] {
                j.fixed_view_mut::<2, 6>(2 * i, 6 * cb).copy_from(&lin.jc);
            }
            if let Some(pb) = sys.point_block[ps] {
                j.fixed_view_mut::<2, 3>(2 * i, nc + 3 * pb).copy_from(&lin.jp);
            }
        }
        (j, r)
    }

    #[test]
    fn identity_sigma_whitening_is_noop() {
        assert_eq!(whitening(&Matrix2::identity()), Matrix2::identity());
        let s = Matrix2::new(4.0, 1.0, 1.0, 3.0);
        let w = whitening(&s);
        assert!((w.transpose() * w - s.try_inverse().unwrap()).amax() < 1e-14);
    }

    #[test]
    fn zero_residual_at_exact_measurement() {
        let k = Intrinsics::new(300.0, 300.0, 320.0, 240.0, 640.0, 480.0);
        let pose = Pose::identity();
        let x = Vector3::new(0.3, -0.2, 4.0);
        let z = geometry::project(&pose, &k, &x).pixel().unwrap();
        let o = Observation::new(CameraId(0), PointId(0), z);
        let lin = residual_and_jacobians(&pose, &k, &x, &o).unwrap();
        assert!(lin.residual.norm() <= 1e-12);
        let behind = residual_and_jacobians(&pose, &k, &Vector3::new(0.0, 0.0, -1.0), &o);
        assert_eq!(behind.unwrap_err(), AssemblyError::PointBehindCamera(CameraId(0), PointId(0)));
    }

    #[test]
    fn jacobians_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = Intrinsics::new(400.0, 380.0, 320.0, 240.0, 640.0, 480.0);
        let h = 1e-6;
        for _ in 0..200 {
            let pose = Pose::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(rng.random(), rng.random(), rng.random()) - Vector3::repeat(0.5)),
                Vector3::new(rng.random(), rng.random(), rng.random()) - Vector3::repeat(0.5),
            );
            let xc = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 2.0 + 3.0 * rng.random::<f64>());
            let x = pose.inverse().transform(&xc);
            let mut o = Observation::new(CameraId(0), PointId(0), Vector2::new(300.0, 200.0));
            o.sigma = Matrix2::new(2.0, 0.3, 0.3, 1.5);
            let lin = residual_and_jacobians(&pose, &k, &x, &o).unwrap();
            let f = |p: &Pose, x: &Vector3<f64>| residual_and_jacobians(p, &k, x, &o).unwrap().residual;
            for d in 0..6 {
                let mut e = Vector6::zeros();
                e[d] = h;
                let num = (f(&pose.retract(&e), &x) - f(&pose.retract(&-e), &x)) / (2.0 * h);
                assert!((num - lin.jc.column(d)).amax() <= 1e-5);
            }
            for d in 0..3 {
                let mut e = Vector3::zeros();
                e[d] = h;
                let num = (f(&pose, &(x + e)) - f(&pose, &(x - e))) / (2.0 * h);
                assert!((num - lin.jp.column(d)).amax() <= 1e-5);
            }
        }
    }

    #[test]
    fn all_fixed_is_rejected() {
        let (g, est) = toy_graph(2, 3, 1);
        let mut cams = g.cameras().to_vec();
        let mut pts = g.points().to_vec();
        cams.iter_mut().for_each(|c| c.fixed = true);
        pts.iter_mut().for_each(|p| p.fixed = true);
        let g = BAGraph::build(cams, pts, g.observations().to_vec(), g.intrinsics().to_vec()).unwrap();
        assert_eq!(
            assemble(&g, &est, &AssembleOptions::default()).unwrap_err(),
            AssemblyError::NoFreeVariables
        );
    }

    #[test]
    fn normal_matrix_matches_dense_stacking() {
        let (g, est) = toy_graph(2, 3, 2);
        let g = g.with_fixed_cameras(&[CameraId(0)]);
        let sys = assemble(&g, &est, &AssembleOptions::default()).unwrap();
        let (j, r) = dense_stack(&g, &est);
        let lambda = j.transpose() * &j;
        let eta = -(j.transpose() * &r);
        let got = sys.to_dense(0.0);
        assert!((&got - &lambda).norm() <= 1e-10 * lambda.norm());
        assert!((sys.gradient() - &eta).norm() <= 1e-10 * eta.norm().max(1.0));
        assert!((sys.cost - r.norm_squared()).abs() <= 1e-10 * sys.cost.max(1.0));
    }

    #[test]
    fn observation_order_does_not_change_lambda() {
        let (g, est) = toy_graph(3, 6, 3);
        let mut observations = g.observations().to_vec();
        observations.reverse();
        let g2 = BAGraph::build(g.cameras().to_vec(), g.points().to_vec(), observations, g.intrinsics().to_vec()).unwrap();
        let a = assemble(&g, &est, &AssembleOptions::default()).unwrap().to_dense(0.0);
        let b = assemble(&g2, &est, &AssembleOptions::default()).unwrap().to_dense(0.0);
        assert!((a.clone() - b).amax() <= 1e-12 * a.amax());
    }

    #[test]
    fn schur_without_coupling_is_lambda_cc() {
        let (g, est) = toy_graph(2, 3, 4);
        let mut pts = g.points().to_vec();
        pts.iter_mut().for_each(|p| p.fixed = true);
        let g = BAGraph::build(g.cameras().to_vec(), pts, g.observations().to_vec(), g.intrinsics().to_vec()).unwrap();
        let sys = assemble(&g, &est, &AssembleOptions::default()).unwrap();
        let m = schur_camera_matrix(&sys, &SchurOptions { point_delta_rel: 1e-8, camera_delta_rel: 0.0 }).unwrap();
        assert_eq!(m.matrix.to_dense(), sys.to_dense(0.0));
    }

    #[test]
    fn schur_matches_dense_complement() {
        let (g, est) = toy_graph(2, 1, 5);
        let sys = assemble(&g, &est, &AssembleOptions::default()).unwrap();
        let opts = SchurOptions { point_delta_rel: 1e-8, camera_delta_rel: 0.0 };
        let m = schur_camera_matrix(&sys, &opts).unwrap();
        let d = sys.to_dense(m.point_delta);
        let a = d.view((0, 0), (12, 12)).into_owned();
        let b = d.view((0, 12), (12, 3)).into_owned();
        let c = d.view((12, 12), (3, 3)).into_owned();
        let oracle = &a - &b * c.try_inverse().unwrap() * b.transpose();
        assert!((m.matrix.to_dense() - &oracle).amax() <= 1e-10 * oracle.amax());
        // fill-in only between covisible cameras
        assert!(m.matrix.has_block(1, 0));
    }

    #[test]
    fn schur_conserves_determinant() {
        let (g, est) = toy_graph(4, 10, 6);
        let g = g.with_fixed_cameras(&[CameraId(0), CameraId(1)]);
        let sys = assemble(&g, &est, &AssembleOptions::default()).unwrap();
        let opts = SchurOptions { point_delta_rel: 1e-8, camera_delta_rel: 0.0 };
        let m = schur_camera_matrix(&sys, &opts).unwrap();
        let full = logdet_dense(&sys.to_dense(m.point_delta)).unwrap();
        let pp: f64 = sys
            .hpp
            .iter()
            .map(|h| (h + Matrix3::identity() * m.point_delta).determinant().ln())
            .sum();
        let cam = logdet_dense(&m.matrix.to_dense()).unwrap();
        assert!((full - (pp + cam)).abs() <= 1e-6 * full.abs());
    }
}
