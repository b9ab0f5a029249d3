//! Experiment drivers behind the `lba-bench` binary: selection sweeps over
//! synthetic scenes, solve-time calibration and keyframe-by-keyframe
//! budget-aware pipeline traces.

pub mod calibrate;
pub mod config;
pub mod pipeline;
pub mod sweep;

pub use config::{BenchConfig, Method, Preset};

use std::time::Duration;

/// Milliseconds with microsecond resolution, or 0 when timing is disabled.
pub(crate) fn millis(d: Duration, timing: bool) -> f64 {
    if timing {
        d.as_micros() as f64 / 1000.0
    } else {
        0.0
    }
}

/// Runs `f` on a pool of `workers` threads (0 = all cores).
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {workers}-thread pool ({e}); using the global pool");
            f()
        }
    }
}
