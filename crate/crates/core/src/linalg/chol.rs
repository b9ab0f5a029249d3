//! Dense Cholesky factors that grow one block column at a time.
//!
//! For a factored `M = L·Lᵀ` and a bordered matrix `[[M, B], [Bᵀ, D]]`, the
//! new factor is
//!
//! ```text
//! [[L,    0 ],
//!  [L1ᵀ,  L2]]     L·L1 = B,  L2·L2ᵀ = D − L1ᵀ·L1
//! ```
//!
//! so `logdet` grows by `2·Σ log diag(L2)`. The factor is stored as a list of
//! shared block rows; an extension clones the row handles and pushes one new
//! row, leaving the original factor intact.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{BlockSparseSPD, LinalgError};

/// Relative pivot tolerance: pivots at or below `PD_TOLERANCE · max(diag)`
/// are rejected.
pub const PD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
struct BlockRow {
    /// Global index of the first row in this block.
    offset: usize,
    /// `size × (offset + size)`: the row's entries left of and on the diagonal.
    data: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    rows: Vec<Arc<BlockRow>>,
    labels: Vec<usize>,
    dim: usize,
    logdet: f64,
    max_diag: f64,
}

/// Result of appending a block column to a factor.
#[derive(Debug, Clone)]
pub struct Extension {
    pub factor: CholFactor,
    /// `logdet(new) − logdet(old)`.
    pub gain: f64,
    /// Multiply-adds spent on the extension.
    pub flops: u64,
}

/// In-place lower Cholesky of a dense symmetric matrix (upper triangle is
/// zeroed). Returns the failing pivot on breakdown.
fn dense_cholesky(a: &mut DMatrix<f64>, tol: f64) -> Result<(), usize> {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > tol) {
            return Err(j);
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

fn pd_threshold(max_diag: f64) -> f64 {
    PD_TOLERANCE * max_diag.max(f64::MIN_POSITIVE)
}

impl CholFactor {
    /// Factor of the empty (0×0) matrix; extend it to build a factor block by block.
    pub fn empty() -> Self {
        Self {
            rows: Vec::new(),
            labels: Vec::new(),
            dim: 0,
            logdet: 0.0,
            max_diag: 0.0,
        }
    }

    /// Batch factorization of a dense symmetric matrix split into blocks of
    /// the given sizes; blocks are labelled `0..n`.
    pub fn factor_dense(m: &DMatrix<f64>, sizes: &[usize]) -> Result<Self, LinalgError> {
        let dim = m.nrows();
        if dim == 0 || m.ncols() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim.max(1),
                got: m.ncols(),
            });
        }
        if sizes.iter().sum::<usize>() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                got: sizes.iter().sum(),
            });
        }
        let max_diag = m.diagonal().iter().copied().fold(0.0, f64::max);
        let mut l = m.clone();
        dense_cholesky(&mut l, pd_threshold(max_diag))
            .map_err(|pivot| LinalgError::NotPositiveDefinite { pivot })?;
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut rows = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &s in sizes {
            rows.push(Arc::new(BlockRow {
                offset,
                data: l.view((offset, 0), (s, offset + s)).into_owned(),
            }));
            offset += s;
        }
        Ok(Self {
            rows,
            labels: (0..sizes.len()).collect(),
            dim,
            logdet,
            max_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Block labels in the order they were appended.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sizes of the block rows, in order.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.data.nrows()).collect()
    }

    /// Cached `2·Σ log diag(L)`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// `2·Σ log diag(L)` summed afresh from the stored factor.
    pub fn recompute_logdet(&self) -> f64 {
        2.0 * self
            .rows
            .iter()
            .flat_map(|r| (0..r.data.nrows()).map(move |i| r.data[(i, r.offset + i)].ln()))
            .sum::<f64>()
    }

    /// Dense lower-triangular `L`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.dim, self.dim);
        for r in &self.rows {
            l.view_mut((r.offset, 0), r.data.shape()).copy_from(&r.data);
        }
        l
    }

    /// Solves `L·Y = B` by forward substitution; returns `Y` and the
    /// multiply-add count.
    fn forward_solve(&self, b: &DMatrix<f64>) -> (DMatrix<f64>, u64) {
        let cols = b.ncols();
        let mut y = b.clone();
        let mut flops = 0u64;
        for r in &self.rows {
            for li in 0..r.data.nrows() {
                let gi = r.offset + li;
                for c in 0..cols {
                    let mut s = y[(gi, c)];
                    for k in 0..gi {
                        s -= r.data[(li, k)] * y[(k, c)];
                    }
                    y[(gi, c)] = s / r.data[(li, gi)];
                }
                flops += (gi as u64 + 1) * cols as u64;
            }
        }
        (y, flops)
    }

    /// Solves `Lᵀ·X = Y` by back substitution.
    fn backward_solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = y.clone();
        for r in self.rows.iter().rev() {
            for li in (0..r.data.nrows()).rev() {
                let gi = r.offset + li;
                x[gi] /= r.data[(li, gi)];
                let xi = x[gi];
                for k in 0..gi {
                    x[k] -= r.data[(li, k)] * xi;
                }
            }
        }
        x
    }

    /// Solves `(L·Lᵀ)·x = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        if rhs.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                got: rhs.len(),
            });
        }
        let (y, _) = self.forward_solve(&DMatrix::from_column_slice(self.dim, 1, rhs.as_slice()));
        Ok(self.backward_solve(&y.column(0).into_owned()))
    }

    /// Solves `L·L1 = B` and factors the Schur block `L2` for a border `(B, D)`.
    fn border(
        &self,
        b: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, u64), LinalgError> {
        let nb = d.nrows();
        if d.ncols() != nb || nb == 0 {
            return Err(LinalgError::DimensionMismatch {
                expected: nb.max(1),
                got: d.ncols(),
            });
        }
        if b.nrows() != self.dim || b.ncols() != nb {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                got: b.nrows(),
            });
        }
        let (l1, mut flops) = if self.dim == 0 {
            (DMatrix::zeros(0, nb), 0)
        } else {
            self.forward_solve(b)
        };
        let mut s = d.clone();
        if self.dim > 0 {
            s -= l1.transpose() * &l1;
            flops += (self.dim * nb * nb) as u64;
        }
        let max_diag = self
            .max_diag
            .max(d.diagonal().iter().copied().fold(0.0, f64::max));
        dense_cholesky(&mut s, pd_threshold(max_diag)).map_err(|p| {
            LinalgError::NotPositiveDefinite {
                pivot: self.dim + p,
            }
        })?;
        flops += (nb * nb * nb / 3).max(1) as u64;
        Ok((l1, s, max_diag, flops))
    }

    /// logDet gain of bordering with `(B, D)`, without building the factor.
    pub fn extension_gain(&self, b: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<(f64, u64), LinalgError> {
        let (_, l2, _, flops) = self.border(b, d)?;
        Ok((2.0 * l2.diagonal().iter().map(|v| v.ln()).sum::<f64>(), flops))
    }

    /// Factor of `[[M, B], [Bᵀ, D]]`. `label` tags the new block column.
    pub fn extend(&self, label: usize, b: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<Extension, LinalgError> {
        let (l1, l2, max_diag, flops) = self.border(b, d)?;
        let nb = d.nrows();
        let gain = 2.0 * l2.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut data = DMatrix::zeros(nb, self.dim + nb);
        data.view_mut((0, 0), (nb, self.dim)).copy_from(&l1.transpose());
        data.view_mut((0, self.dim), (nb, nb)).copy_from(&l2);
        let mut rows = self.rows.clone();
        rows.push(Arc::new(BlockRow {
            offset: self.dim,
            data,
        }));
        let mut labels = self.labels.clone();
        labels.push(label);
        Ok(Extension {
            factor: CholFactor {
                rows,
                labels,
                dim: self.dim + nb,
                logdet: self.logdet + gain,
                max_diag,
            },
            gain,
            flops,
        })
    }
}

/// Batch factorization of a block-sparse SPD matrix.
pub fn cholesky(m: &BlockSparseSPD) -> Result<CholFactor, LinalgError> {
    CholFactor::factor_dense(&m.to_dense(), m.block_sizes())
}

/// `log det` of a dense SPD matrix via batch Cholesky.
pub fn logdet_dense(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    Ok(CholFactor::factor_dense(m, &[m.nrows()])?.logdet())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        a.transpose() * &a + DMatrix::identity(n, n)
    }

    fn eigen_logdet(m: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(m.clone()).eigenvalues.iter().map(|v| v.ln()).sum()
    }

    #[test]
    fn identity_and_diagonal() {
        let f = CholFactor::factor_dense(&DMatrix::identity(6, 6), &[6]).unwrap();
        assert_eq!(f.to_dense(), DMatrix::identity(6, 6));
        assert_eq!(f.logdet(), 0.0);

        let f = CholFactor::factor_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])), &[1, 1]).unwrap();
        assert_eq!(f.to_dense(), DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
        assert!((f.logdet() - (4f64.ln() + 9f64.ln())).abs() < 1e-15);
        assert!((f.logdet() - 3.5835).abs() < 1e-4);

        let e2 = std::f64::consts::E.powi(2);
        let f = CholFactor::factor_dense(&DMatrix::from_element(1, 1, e2), &[1]).unwrap();
        assert!((f.logdet() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn logdet_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [12, 20] {
            let m = random_spd(&mut rng, n);
            let f = CholFactor::factor_dense(&m, &[n]).unwrap();
            let oracle = eigen_logdet(&m);
            assert!((f.logdet() - oracle).abs() <= 1e-8 * oracle.abs());
            assert!((f.recompute_logdet() - f.logdet()).abs() <= 1e-12);
            let l = f.to_dense();
            let rel = (&l * l.transpose() - &m).norm() / m.norm();
            assert!(rel <= 1e-8);
        }
    }

    #[test]
    fn not_positive_definite_reports_pivot() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            CholFactor::factor_dense(&m, &[2]).unwrap_err(),
            LinalgError::NotPositiveDefinite { pivot: 1 }
        );
        let base = CholFactor::factor_dense(&DMatrix::identity(3, 3), &[3]).unwrap();
        let err = base
            .extend(1, &DMatrix::zeros(3, 3), &(-DMatrix::identity(3, 3)))
            .unwrap_err();
        assert_eq!(err, LinalgError::NotPositiveDefinite { pivot: 3 });
    }

    #[test]
    fn block_diagonal_append_has_zero_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_spd(&mut rng, 6);
        let base = CholFactor::factor_dense(&m, &[6]).unwrap();
        let ext = base.extend(1, &DMatrix::zeros(6, 3), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(ext.gain, 0.0);
        assert_eq!(ext.factor.logdet(), base.logdet());
        // persistent: the base factor is untouched
        assert_eq!(base.dim(), 6);
    }

    #[test]
    fn extension_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let full = random_spd(&mut rng, 15);
        let base = CholFactor::factor_dense(&full.view((0, 0), (9, 9)).into_owned(), &[6, 3]).unwrap();
        let b = full.view((0, 9), (9, 6)).into_owned();
        let d = full.view((9, 9), (6, 6)).into_owned();
        let ext = base.extend(2, &b, &d).unwrap();
        let batch = CholFactor::factor_dense(&full, &[6, 3, 6]).unwrap();
        assert!((ext.factor.to_dense() - batch.to_dense()).amax() <= 1e-10);
        assert!((ext.factor.logdet() - batch.logdet()).abs() <= 1e-10);
        let (gain, _) = base.extension_gain(&b, &d).unwrap();
        assert_eq!(gain, ext.gain);
        assert_eq!(ext.factor.labels(), &[0, 1, 2]);
    }

    #[test]
    fn solve_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_spd(&mut rng, 10);
        let f = CholFactor::factor_dense(&m, &[4, 6]).unwrap();
        let x = DVector::from_fn(10, |i, _| i as f64 - 3.0);
        let got = f.solve(&(&m * &x)).unwrap();
        assert!((got - x).amax() < 1e-9);
    }

    #[test]
    fn extension_cost_tracks_current_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n_blocks = 24;
        let full = random_spd(&mut rng, 6 * n_blocks);
        let mut f = CholFactor::empty();
        let mut costs = Vec::new();
        for k in 0..n_blocks {
            let o = 6 * k;
            let b = full.view((0, o), (o, 6)).into_owned();
            let d = full.view((o, o), (6, 6)).into_owned();
            let ext = f.extend(k, &b, &d).unwrap();
            costs.push(ext.flops);
            f = ext.factor;
        }
        // One extension costs O(dim²·b + dim·b² + b³); no rescan of history.
        for (k, &c) in costs.iter().enumerate() {
            let dim = (6 * k) as u64;
            let bound = (dim + 1) * dim / 2 * 6 + 6 * dim * 6 + 6 * 6 * 6 + 6 * 36;
            assert!(c <= bound, "step {k}: {c} > {bound}");
        }
        let total: u64 = costs.iter().sum();
        let n = (6 * n_blocks) as u64;
        assert!(total <= n * n * n, "total {total} exceeds n³");
        assert!((f.logdet() - eigen_logdet(&full)).abs() <= 1e-8 * eigen_logdet(&full).abs());
    }
}
