use lba_core::assembly::{assemble, schur_camera_matrix, AssembleOptions, CameraOnlyMatrix, SchurOptions};
use lba_core::graph::CameraId;
use lba_core::linalg::{cholesky, logdet_dense, BlockSparseSPD, CholFactor};
use lba_core::select::{brute_force_select, greedy_select, lazier_greedy_select, DEFAULT_ENUMERATION_CAP};
use lba_core::sim::{generate_scene, SceneConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `AᵀA + I` over `n` blocks of size 6, so every principal logDet is ≥ 0.
fn matrix(n: usize, seed: u64) -> CameraOnlyMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 6 * n;
    let a = DMatrix::from_fn(dim / 2, dim, |_, _| rng.random_range(-1.0..1.0));
    let dense = a.transpose() * a + DMatrix::identity(dim, dim);
    CameraOnlyMatrix {
        matrix: BlockSparseSPD::from_dense(&dense, vec![6; n]),
        cameras: (0..n as u32).map(CameraId).collect(),
        point_delta: 0.0,
        camera_delta: 0.0,
    }
}

fn f(m: &CameraOnlyMatrix, set: &[usize]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    logdet_dense(&m.matrix.principal_dense(set)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logdet_is_monotone_and_submodular(seed in any::<u64>(), mask in 0u32..(1 << 7), extra in 0usize..8) {
        let m = matrix(8, seed);
        let small: Vec<usize> = (0..7).filter(|i| mask & (1 << i) != 0 && i % 2 == 0).collect();
        let large: Vec<usize> = (0..7).filter(|i| mask & (1 << i) != 0).collect();
        prop_assume!(!large.contains(&extra));
        let with = |s: &[usize]| {
            let mut v = s.to_vec();
            v.push(extra);
            v.sort_unstable();
            v
        };
        let gain_small = f(&m, &with(&small)) - f(&m, &small);
        let gain_large = f(&m, &with(&large)) - f(&m, &large);
        prop_assert!(gain_small >= -1e-9);
        prop_assert!(gain_large >= -1e-9);
        prop_assert!(gain_small >= gain_large - 1e-9);
    }

    #[test]
    fn incremental_matches_batch(seed in any::<u64>(), n in 1usize..12) {
        let m = matrix(n, seed);
        let mut factor = CholFactor::empty();
        let blocks: Vec<usize> = (0..n).collect();
        for c in 0..n {
            let b = m.matrix.column_panel(&blocks[..c], c);
            let d = m.matrix.block(c, c).unwrap().into_owned();
            factor = factor.extend(c, &b, &d).unwrap().factor;
        }
        let batch = cholesky(&m.matrix).unwrap().logdet();
        prop_assert!((factor.logdet() - batch).abs() <= 1e-9);
    }

    #[test]
    fn greedy_traces_never_lose_value(seed in any::<u64>(), k in 2usize..8) {
        let m = matrix(9, seed);
        let g = greedy_select(&m, &[CameraId(0)], k).unwrap();
        let l = lazier_greedy_select(&m, &[CameraId(0)], k, 0.0025, seed).unwrap();
        for s in [&g, &l] {
            prop_assert_eq!(s.len(), k);
            prop_assert!(s.gains.iter().all(|&x| x >= -1e-9));
            let total: f64 = s.gains.iter().sum();
            prop_assert!((total - s.logdet.unwrap()).abs() <= 1e-8 * total.abs().max(1.0));
        }
    }

    #[test]
    fn greedy_is_near_optimal(seed in any::<u64>(), k in 2usize..5) {
        let m = matrix(8, seed);
        let g = greedy_select(&m, &[CameraId(0)], k).unwrap();
        let o = brute_force_select(&m, &[CameraId(0)], k, DEFAULT_ENUMERATION_CAP).unwrap();
        let bound = (1.0 - (-1.0f64).exp()) * o.logdet.unwrap();
        prop_assert!(g.logdet.unwrap() >= bound - 1e-9);
        prop_assert!(g.logdet.unwrap() <= o.logdet.unwrap() + 1e-9);
    }
}

#[test]
fn schur_conserves_the_determinant_on_scenes() {
    for seed in 0..5 {
        let cfg = SceneConfig {
            n_cameras: 8,
            n_points: 300,
            ..SceneConfig::ci()
        };
        let s = generate_scene(&cfg, seed).unwrap();
        let g = s.graph.with_fixed_cameras(&[CameraId(0), CameraId(1)]);
        let sys = assemble(&g, &s.initial, &AssembleOptions::default()).unwrap();
        let options = SchurOptions {
            camera_delta_rel: 0.0,
            ..SchurOptions::default()
        };
        let m = schur_camera_matrix(&sys, &options).unwrap();
        let delta = m.point_delta;
        let full = sys.to_dense(delta);
        let np = sys.n_free_points() * 3;
        let nc = sys.n_free_cameras() * 6;
        let lpp = full.view((nc, nc), (np, np)).into_owned();
        let lhs = logdet_dense(&full).unwrap();
        let rhs = logdet_dense(&lpp).unwrap() + cholesky(&m.matrix).unwrap().logdet();
        assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs(), "seed {seed}: {lhs} vs {rhs}");
    }
}
