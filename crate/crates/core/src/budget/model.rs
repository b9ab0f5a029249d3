//! Cubic solve-time model `τ(k) = c0 + c1·k + c2·k² + c3·k³` and its inverse.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BudgetError, TimingSample};

/// Smallest subgraph size a budget maps to.
pub const DEFAULT_K_MIN: usize = 5;

/// Completed solves between online refits.
pub const DEFAULT_REFIT_EVERY: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    /// Coefficients of `τ` in seconds, lowest power first.
    pub coefficients: [f64; 4],
    pub k_min: usize,
    pub k_max: usize,
    /// RMS of `τ(k) − t` over the samples, seconds.
    pub residual_rms: f64,
    /// The plain least-squares cubic was not increasing on the valid range
    /// and the model was refit to isotonic means.
    pub monotone_fallback: bool,
    pub samples: Vec<TimingSample>,
}

impl TimeModel {
    /// Predicted solve time in seconds.
    pub fn tau(&self, k: f64) -> f64 {
        let c = &self.coefficients;
        ((c[3] * k + c[2]) * k + c[1]) * k + c[0]
    }

    /// First integer `k` in the valid range where `τ` fails to increase.
    fn first_non_increase(coefficients: &[f64; 4], k_min: usize, k_max: usize) -> Option<usize> {
        let tau = |k: f64| ((coefficients[3] * k + coefficients[2]) * k + coefficients[1]) * k + coefficients[0];
        (k_min..k_max).find(|&k| !(tau(k as f64 + 1.0) > tau(k as f64)))
    }

    /// Same coefficients on a different valid range, which must keep `τ`
    /// strictly increasing.
    pub fn with_range(&self, k_min: usize, k_max: usize) -> Result<Self, BudgetError> {
        if let Some(k) = Self::first_non_increase(&self.coefficients, k_min, k_max) {
            return Err(BudgetError::NonMonotone(k));
        }
        Ok(Self {
            k_min,
            k_max: k_max.max(k_min),
            ..self.clone()
        })
    }
}

/// Least-squares cubic through `(k_i, ms_i / 1000)`.
fn lsq_cubic(ks: &[f64], ts: &[f64], weights: &[f64]) -> [f64; 4] {
    // Scaling k to [0, 1] keeps the Vandermonde matrix well conditioned.
    let scale = ks.iter().copied().fold(1.0, f64::max);
    let a = DMatrix::from_fn(ks.len(), 4, |i, j| weights[i].sqrt() * (ks[i] / scale).powi(j as i32));
    let b = DVector::from_iterator(ts.len(), ts.iter().zip(weights).map(|(t, w)| w.sqrt() * t));
    let x = a.svd(true, true).solve(&b, 1e-14).expect("U and V were computed");
    std::array::from_fn(|j| x[j] / scale.powi(j as i32))
}

/// Pool-adjacent-violators: the non-decreasing sequence closest to `y` in
/// weighted least squares.
fn isotonic(y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&v, &wt) in y.iter().zip(w) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, n2) = blocks.pop().expect("len > 1");
            let (v1, w1, n1) = blocks.pop().expect("len > 1");
            blocks.push(((v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Fits `τ` to calibration samples. The valid range runs from
/// [`DEFAULT_K_MIN`] (or the smallest sampled k, if larger) to the largest
/// sampled k.
pub fn fit_time_model(samples: &[TimingSample]) -> Result<TimeModel, BudgetError> {
    for s in samples {
        if !(s.ms > 0.0 && s.ms.is_finite()) {
            return Err(BudgetError::InvalidSample { k: s.k, ms: s.ms });
        }
    }
    let mut distinct: Vec<usize> = samples.iter().map(|s| s.k).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(BudgetError::InsufficientSamples(distinct.len()));
    }
    let k_min = DEFAULT_K_MIN.max(distinct[0]);
    let k_max = *distinct.last().expect("non-empty");

    let ks: Vec<f64> = samples.iter().map(|s| s.k as f64).collect();
    let ts: Vec<f64> = samples.iter().map(|s| s.ms / 1000.0).collect();
    let mut coefficients = lsq_cubic(&ks, &ts, &vec![1.0; ks.len()]);
    let mut monotone_fallback = false;
    if let Some(k) = TimeModel::first_non_increase(&coefficients, k_min, k_max) {
        warn!("cubic time model is not increasing at k = {k}; refitting to isotonic means");
        monotone_fallback = true;
        let (means, counts): (Vec<f64>, Vec<f64>) = distinct
            .iter()
            .map(|&k| {
                let v: Vec<f64> = samples.iter().filter(|s| s.k == k).map(|s| s.ms / 1000.0).collect();
                (v.iter().sum::<f64>() / v.len() as f64, v.len() as f64)
            })
            .unzip();
        let iso = isotonic(&means, &counts);
        let dk: Vec<f64> = distinct.iter().map(|&k| k as f64).collect();
        coefficients = lsq_cubic(&dk, &iso, &counts);
        if TimeModel::first_non_increase(&coefficients, k_min, k_max).is_some() {
            // Last resort: t = a + b·k³ with b > 0, which is always increasing.
            let n = dk.len() as f64;
            let x: Vec<f64> = dk.iter().map(|k| k.powi(3)).collect();
            let (mx, my) = (x.iter().sum::<f64>() / n, iso.iter().sum::<f64>() / n);
            let sxy: f64 = x.iter().zip(&iso).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let b = (sxy / sxx).max(f64::EPSILON * my.abs().max(1e-12) / mx.max(1.0));
            coefficients = [my - b * mx, 0.0, 0.0, b];
        }
    }
    let tau = |k: f64| ((coefficients[3] * k + coefficients[2]) * k + coefficients[1]) * k + coefficients[0];
    let residual_rms = (ks.iter().zip(&ts).map(|(k, t)| (tau(*k) - t).powi(2)).sum::<f64>() / ks.len() as f64).sqrt();
    Ok(TimeModel {
        coefficients,
        k_min,
        k_max,
        residual_rms,
        monotone_fallback,
        samples: samples.to_vec(),
    })
}

/// Largest `k` in the model's range with `τ(k) ≤ t_b` (seconds); `k_min`
/// when even that exceeds the budget.
pub fn size_for_budget(model: &TimeModel, t_b: f64) -> usize {
    // τ is increasing on the range, so a binary search over it is exact.
    let (mut lo, mut hi) = (model.k_min, model.k_max);
    if model.tau(lo as f64) > t_b {
        return model.k_min;
    }
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if model.tau(mid as f64) <= t_b {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Calibration set with periodic refits.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: TimeModel,
    pub samples: Vec<TimingSample>,
    pub refit_every: usize,
    since_refit: usize,
    range: (usize, usize),
}

impl Calibration {
    /// Starts from `model`, keeping its samples. Refits stay on the model's range.
    pub fn new(model: TimeModel, refit_every: usize) -> Self {
        Self {
            samples: model.samples.clone(),
            range: (model.k_min, model.k_max),
            model,
            refit_every: refit_every.max(1),
            since_refit: 0,
        }
    }

    /// Appends a completed solve; refits after every `refit_every` appends.
    /// Returns whether the model changed. A refit that fails leaves the
    /// previous model in place.
    pub fn record(&mut self, sample: TimingSample) -> bool {
        self.samples.push(sample);
        self.since_refit += 1;
        if self.since_refit < self.refit_every {
            return false;
        }
        self.since_refit = 0;
        match fit_time_model(&self.samples).and_then(|m| m.with_range(self.range.0, self.range.1)) {
            Ok(m) => {
                self.model = m;
                true
            }
            Err(e) => {
                warn!("time model refit failed, keeping previous model: {e}");
                false
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn exact(ks: impl Iterator<Item = usize>, c: [f64; 4]) -> Vec<TimingSample> {
        ks.map(|k| {
            let x = k as f64;
            TimingSample { k, ms: 1000.0 * (c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x) }
        })
        .collect()
    }

    #[test]
    fn exact_cubic_is_recovered() {
        let truth = [0.1, 0.0, 0.0, 0.002];
        let m = fit_time_model(&exact(5..=30, truth)).unwrap();
        let err: f64 = m.coefficients.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm < 1e-6);
        assert!(!m.monotone_fallback);
        for k in m.k_min..=m.k_max {
            assert_eq!(size_for_budget(&m, m.tau(k as f64)), k);
        }
    }

    #[test]
    fn floor_semantics_and_clamping() {
        let m = fit_time_model(&exact(5..=30, [0.1, 0.0, 0.0, 0.002])).unwrap();
        let mid = 0.5 * (m.tau(12.0) + m.tau(13.0));
        assert_eq!(size_for_budget(&m, mid), 12);
        assert_eq!(size_for_budget(&m, 0.0), 5);
        assert_eq!(size_for_budget(&m, 1e9), 30);
    }

    #[test]
    fn too_few_or_bad_samples() {
        let s = exact([5, 6, 7].into_iter(), [0.1, 0.0, 0.0, 0.002]);
        assert_eq!(fit_time_model(&s), Err(BudgetError::InsufficientSamples(3)));
        let mut s = exact(5..9, [0.1, 0.0, 0.0, 0.002]);
        s[1].ms = -1.0;
        assert!(matches!(fit_time_model(&s), Err(BudgetError::InvalidSample { k: 6, .. })));
    }

    #[test]
    fn noisy_fit_residual_tracks_noise() {
        let sigma = 0.004;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = [0.05, 0.002, 0.0003, 0.00004];
        let mut s = Vec::new();
        for _ in 0..5 {
            for mut t in exact(5..=40, truth) {
                t.ms += 1000.0 * noise.sample(&mut rng);
                s.push(t);
            }
        }
        let m = fit_time_model(&s).unwrap();
        assert!(m.residual_rms <= 2.0 * sigma, "{}", m.residual_rms);
    }

    #[test]
    fn non_monotone_data_falls_back_to_increasing_model() {
        let s: Vec<TimingSample> = [(5, 50.0), (6, 10.0), (7, 40.0), (8, 5.0), (9, 60.0), (10, 20.0)]
            .into_iter()
            .map(|(k, ms)| TimingSample { k, ms })
            .collect();
        let m = fit_time_model(&s).unwrap();
        assert!(m.monotone_fallback);
        for k in m.k_min..m.k_max {
            assert!(m.tau(k as f64 + 1.0) > m.tau(k as f64));
        }
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn calibration_refits_periodically() {
        let m = fit_time_model(&exact(5..=20, [0.01, 0.0, 0.0, 0.001])).unwrap();
        let mut cal = Calibration::new(m.clone(), 3);
        let extra = exact([10, 12].into_iter(), [0.02, 0.0, 0.0, 0.002]);
        assert!(!cal.record(extra[0]));
        assert!(!cal.record(extra[1]));
        assert!(cal.record(extra[0]));
        assert_ne!(cal.model.coefficients, m.coefficients);
        assert_eq!((cal.model.k_min, cal.model.k_max), (5, 20));
        // Refitting the same samples is deterministic.
        assert_eq!(fit_time_model(&cal.samples).unwrap().coefficients, cal.model.coefficients);
    }
}
