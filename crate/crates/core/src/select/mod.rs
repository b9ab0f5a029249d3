//! Camera-subset selection on the camera-only information matrix.
//!
//! The objective is `f(S) = logdet M[S, S]` over the principal submatrix of
//! the selected camera blocks. Selections always start from one or more root
//! cameras, which are kept first in the output.

mod baseline;
mod greedy;
mod recover;

pub use baseline::{covis_select, full_select, random_select};
pub use greedy::{
    brute_force_select, greedy_select, lazier_greedy_select, lazier_sample_size, DEFAULT_ENUMERATION_CAP,
    DEFAULT_EPSILON,
};
pub use recover::{recover_subgraph, PriorPolicy, SubProblem};

use std::time::Duration;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::assembly::CameraOnlyMatrix;
use crate::graph::{CameraId, GraphError};
use crate::linalg::{CholFactor, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("no root cameras given")]
    NoRoots,
    #[error("camera {0} is not part of the selection matrix")]
    UnknownCamera(CameraId),
    #[error("k = {k} is smaller than the {roots} root cameras")]
    KBelowRoots { k: usize, roots: usize },
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("{combinations} subsets exceed the enumeration cap of {cap}")]
    TooLargeToEnumerate { combinations: u128, cap: u128 },
    #[error("no free points remain in the recovered subgraph")]
    EmptySubProblem,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected cameras: roots first, then in the order they were added.
    pub cameras: Vec<CameraId>,
    /// Marginal logDet gain of each camera when it was added, nats.
    pub gains: Vec<f64>,
    /// `logdet M[S, S]`; absent for selections made without the matrix.
    pub logdet: Option<f64>,
    /// Number of candidate gain evaluations.
    pub evaluations: usize,
    /// Floating-point operations spent in factor extensions.
    pub flops: u64,
    pub elapsed: Duration,
    /// Regularization added to the diagonal of M before selection.
    pub camera_delta: Option<f64>,
}

impl Selection {
    pub(crate) fn unscored(cameras: Vec<CameraId>, elapsed: Duration) -> Self {
        Self {
            cameras,
            gains: Vec::new(),
            logdet: None,
            evaluations: 0,
            flops: 0,
            elapsed,
            camera_delta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn contains(&self, id: CameraId) -> bool {
        self.cameras.contains(&id)
    }

    /// Fill in per-step gains and the final logDet for the current camera
    /// order. Counters and timing are left untouched.
    pub fn scored(mut self, m: &CameraOnlyMatrix) -> Result<Self, SelectError> {
        let mut state = Growth::new(m);
        self.gains.clear();
        for &c in &self.cameras {
            let b = state.block(c)?;
            self.gains.push(state.push(b)?);
        }
        self.logdet = Some(state.factor.logdet());
        self.camera_delta = Some(m.camera_delta);
        Ok(self)
    }
}

/// A running factor of `M[S, S]` grown one camera block at a time.
#[derive(Clone)]
pub(crate) struct Growth<'a> {
    m: &'a CameraOnlyMatrix,
    pub(crate) factor: CholFactor,
    pub(crate) blocks: Vec<usize>,
    pub(crate) flops: u64,
}

impl<'a> Growth<'a> {
    pub(crate) fn new(m: &'a CameraOnlyMatrix) -> Self {
        Self {
            m,
            factor: CholFactor::empty(),
            blocks: Vec::new(),
            flops: 0,
        }
    }

    pub(crate) fn block(&self, id: CameraId) -> Result<usize, SelectError> {
        self.m.block_of(id).ok_or(SelectError::UnknownCamera(id))
    }

    /// Marginal gain of adding block `c`, with its flop count.
    pub(crate) fn gain(&self, c: usize) -> Result<(f64, u64), LinalgError> {
        let mat = &self.m.matrix;
        let b = mat.column_panel(&self.blocks, c);
        self.factor.extension_gain(&b, &self.diagonal(c))
    }

    fn diagonal(&self, c: usize) -> DMatrix<f64> {
        let n = self.m.matrix.block_size(c);
        self.m
            .matrix
            .block(c, c)
            .map(|b| b.into_owned())
            .unwrap_or_else(|| DMatrix::zeros(n, n))
    }

    pub(crate) fn push(&mut self, c: usize) -> Result<f64, SelectError> {
        let mat = &self.m.matrix;
        let b = mat.column_panel(&self.blocks, c);
        let ext = self.factor.extend(c, &b, &self.diagonal(c))?;
        self.factor = ext.factor;
        self.blocks.push(c);
        self.flops += ext.flops;
        Ok(ext.gain)
    }
}
