//! Greedy, lazier-greedy and exhaustive maximization of `logdet M[S, S]`.

use std::time::Instant;

use itertools::Itertools;
use log::warn;
use rand::seq::index;
use rayon::prelude::*;

use super::{Growth, SelectError, Selection};
use crate::assembly::CameraOnlyMatrix;
use crate::graph::CameraId;
use crate::rng::{stream, Stream};

/// Default decay factor for the lazier-greedy sample size.
pub const DEFAULT_EPSILON: f64 = 0.0025;

/// Default limit on the number of subsets enumerated by [`brute_force_select`].
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

/// Candidate sample size `ceil((m / k)·ln(1/ε))`, clamped to `[1, m]`, for a
/// pool of `m` candidates and target size `k`.
pub fn lazier_sample_size(m: usize, k: usize, epsilon: f64) -> usize {
    if m == 0 {
        return 0;
    }
    let s = (m as f64 / k.max(1) as f64 * (1.0 / epsilon).ln()).ceil();
    (s as usize).clamp(1, m)
}

/// Validated roots, their blocks, the candidate blocks in ascending camera-id
/// order, and the clamped target size.
struct Setup {
    roots: Vec<usize>,
    pool: Vec<usize>,
    k: usize,
}

fn setup(m: &CameraOnlyMatrix, roots: &[CameraId], k: usize) -> Result<Setup, SelectError> {
    if roots.is_empty() {
        return Err(SelectError::NoRoots);
    }
    let root_blocks = roots
        .iter()
        .map(|&r| m.block_of(r).ok_or(SelectError::UnknownCamera(r)))
        .collect::<Result<Vec<_>, _>>()?;
    let root_blocks: Vec<usize> = root_blocks.into_iter().unique().collect();
    if k < root_blocks.len() {
        return Err(SelectError::KBelowRoots {
            k,
            roots: root_blocks.len(),
        });
    }
    let mut pool: Vec<usize> = (0..m.n_cameras()).filter(|b| !root_blocks.contains(b)).collect();
    pool.sort_by_key(|&b| m.cameras[b]);
    let n = m.n_cameras();
    let k = if k > n {
        warn!("k = {k} exceeds the {n} available cameras, clamping");
        n
    } else {
        k
    };
    Ok(Setup {
        roots: root_blocks,
        pool,
        k,
    })
}

fn seeded<'a>(m: &'a CameraOnlyMatrix, roots: &[usize]) -> Result<(Growth<'a>, Vec<f64>), SelectError> {
    let mut g = Growth::new(m);
    let gains = roots.iter().map(|&r| g.push(r)).collect::<Result<_, _>>()?;
    Ok((g, gains))
}

/// Best candidate among `candidates` (block indices): highest gain, ties to
/// the lowest camera id.
fn best(
    m: &CameraOnlyMatrix,
    g: &Growth<'_>,
    candidates: &[usize],
) -> Result<(usize, u64), SelectError> {
    let scored = candidates
        .par_iter()
        .map(|&c| g.gain(c).map(|(gain, flops)| (c, gain, flops)))
        .collect::<Result<Vec<_>, _>>()?;
    let flops = scored.iter().map(|s| s.2).sum();
    let (c, _, _) = scored
        .into_iter()
        .reduce(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && m.cameras[b.0] < m.cameras[a.0]) {
                b
            } else {
                a
            }
        })
        .expect("candidate list is non-empty");
    Ok((c, flops))
}

fn finish(m: &CameraOnlyMatrix, g: Growth<'_>, gains: Vec<f64>, evaluations: usize, start: Instant) -> Selection {
    Selection {
        cameras: g.blocks.iter().map(|&b| m.cameras[b]).collect(),
        gains,
        logdet: Some(g.factor.logdet()),
        evaluations,
        flops: g.flops,
        elapsed: start.elapsed(),
        camera_delta: Some(m.camera_delta),
    }
}

/// Adds, one at a time, the candidate with the largest marginal gain until
/// `k` cameras are selected. Every remaining candidate is re-evaluated at
/// every step.
pub fn greedy_select(m: &CameraOnlyMatrix, roots: &[CameraId], k: usize) -> Result<Selection, SelectError> {
    let start = Instant::now();
    let Setup { roots, mut pool, k } = setup(m, roots, k)?;
    let (mut g, mut gains) = seeded(m, &roots)?;
    let mut evaluations = 0;
    while g.blocks.len() < k {
        evaluations += pool.len();
        let (c, flops) = best(m, &g, &pool)?;
        g.flops += flops;
        gains.push(g.push(c)?);
        pool.retain(|&b| b != c);
    }
    Ok(finish(m, g, gains, evaluations, start))
}

/// Greedy over a random candidate sample of size
/// [`lazier_sample_size`]`(pool, k, ε)` per step, drawn without replacement
/// from the remaining pool.
pub fn lazier_greedy_select(
    m: &CameraOnlyMatrix,
    roots: &[CameraId],
    k: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Selection, SelectError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SelectError::InvalidEpsilon(epsilon));
    }
    let start = Instant::now();
    let Setup { roots, mut pool, k } = setup(m, roots, k)?;
    let s = lazier_sample_size(pool.len(), k, epsilon);
    let mut rng = stream(seed, Stream::Selection);
    let (mut g, mut gains) = seeded(m, &roots)?;
    let mut evaluations = 0;
    while g.blocks.len() < k {
        let n = s.min(pool.len());
        let mut picks = index::sample(&mut rng, pool.len(), n).into_vec();
        picks.sort_unstable();
        let sample: Vec<usize> = picks.into_iter().map(|i| pool[i]).collect();
        evaluations += sample.len();
        let (c, flops) = best(m, &g, &sample)?;
        g.flops += flops;
        gains.push(g.push(c)?);
        pool.retain(|&b| b != c);
    }
    Ok(finish(m, g, gains, evaluations, start))
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

/// Exact maximizer of `logdet M[S, S]` over all size-`k` sets containing the
/// roots. Ties go to the lexicographically smallest id set. Fails when more
/// than `cap` subsets would be enumerated.
pub fn brute_force_select(
    m: &CameraOnlyMatrix,
    roots: &[CameraId],
    k: usize,
    cap: u128,
) -> Result<Selection, SelectError> {
    let start = Instant::now();
    let Setup { roots, pool, k } = setup(m, roots, k)?;
    let r = k - roots.len();
    let combinations = binomial(pool.len(), r);
    if combinations > cap {
        return Err(SelectError::TooLargeToEnumerate { combinations, cap });
    }
    let (base, root_gains) = seeded(m, &roots)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluations = 0;
    for combo in pool.iter().copied().combinations(r) {
        evaluations += 1;
        let mut g = base.clone();
        for &c in &combo {
            g.push(c)?;
        }
        let value = g.factor.logdet();
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, combo));
        }
    }
    let (_, chosen) = best.expect("at least one subset");
    let mut g = base;
    let mut gains = root_gains;
    for c in chosen {
        gains.push(g.push(c)?);
    }
    Ok(finish(m, g, gains, evaluations, start))
}
