use std::borrow::Cow;
use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Symmetric matrix stored as dense blocks of its lower block triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseSPD {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
    /// Keyed `(row, col)` with `col <= row`.
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl BlockSparseSPD {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut dim = 0;
        for &s in &sizes {
            offsets.push(dim);
            dim += s;
        }
        Self {
            sizes,
            offsets,
            dim,
            blocks: BTreeMap::new(),
        }
    }

    pub fn uniform(n_blocks: usize, block_size: usize) -> Self {
        Self::new(vec![block_size; n_blocks])
    }

    /// Wraps a dense symmetric matrix using the given block layout.
    pub fn from_dense(dense: &DMatrix<f64>, sizes: Vec<usize>) -> Self {
        let mut m = Self::new(sizes);
        assert_eq!(dense.nrows(), m.dim, "layout does not match matrix");
        for i in 0..m.n_blocks() {
            for j in 0..=i {
                let b = dense
                    .view((m.offsets[i], m.offsets[j]), (m.sizes[i], m.sizes[j]))
                    .into_owned();
                if b.iter().any(|&v| v != 0.0) || i == j {
                    m.blocks.insert((i, j), b);
                }
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn block_size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Block `(i, j)`, transposed on the fly for `i < j`.
    pub fn block(&self, i: usize, j: usize) -> Option<Cow<'_, DMatrix<f64>>> {
        if j <= i {
            self.blocks.get(&(i, j)).map(Cow::Borrowed)
        } else {
            self.blocks.get(&(j, i)).map(|b| Cow::Owned(b.transpose()))
        }
    }

    pub fn has_block(&self, i: usize, j: usize) -> bool {
        let key = if j <= i { (i, j) } else { (j, i) };
        self.blocks.contains_key(&key)
    }

    /// Accumulates `value` into block `(i, j)`; for `i < j` the transpose is
    /// accumulated into `(j, i)`.
    pub fn add_block(&mut self, i: usize, j: usize, value: &DMatrix<f64>) {
        let (key, v) = if j <= i {
            ((i, j), Cow::Borrowed(value))
        } else {
            ((j, i), Cow::Owned(value.transpose()))
        };
        let (r, c) = (self.sizes[key.0], self.sizes[key.1]);
        assert_eq!(v.shape(), (r, c), "block shape mismatch");
        self.blocks
            .entry(key)
            .and_modify(|b| *b += v.as_ref())
            .or_insert_with(|| v.into_owned());
    }

    /// Non-zero lower blocks as `((row, col), block)`.
    pub fn lower_blocks(&self) -> impl Iterator<Item = (&(usize, usize), &DMatrix<f64>)> {
        self.blocks.iter()
    }

    pub fn n_stored_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_identity(&mut self, value: f64) {
        for i in 0..self.n_blocks() {
            let n = self.sizes[i];
            self.add_block(i, i, &(DMatrix::identity(n, n) * value));
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n_blocks())
            .filter_map(|i| self.blocks.get(&(i, i)))
            .map(|b| b.trace())
            .sum()
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.n_blocks())
            .filter_map(|i| self.blocks.get(&(i, i)))
            .flat_map(|b| b.diagonal().iter().copied().collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for (&(i, j), b) in &self.blocks {
            let (oi, oj) = (self.offsets[i], self.offsets[j]);
            d.view_mut((oi, oj), b.shape()).copy_from(b);
            if i != j {
                d.view_mut((oj, oi), (b.ncols(), b.nrows()))
                    .copy_from(&b.transpose());
            }
        }
        d
    }

    /// Dense principal submatrix over the listed blocks, in the given order.
    pub fn principal_dense(&self, blocks: &[usize]) -> DMatrix<f64> {
        let offs: Vec<usize> = blocks
            .iter()
            .scan(0, |acc, &b| {
                let o = *acc;
                *acc += self.sizes[b];
                Some(o)
            })
            .collect();
        let n: usize = blocks.iter().map(|&b| self.sizes[b]).sum();
        let mut d = DMatrix::zeros(n, n);
        for (a, &bi) in blocks.iter().enumerate() {
            for (c, &bj) in blocks.iter().enumerate() {
                if let Some(b) = self.block(bi, bj) {
                    d.view_mut((offs[a], offs[c]), b.shape()).copy_from(b.as_ref());
                }
            }
        }
        d
    }

    /// Column panel `[M(s0, c); M(s1, c); ...]` for the block column `c`
    /// and the row blocks `rows`.
    pub fn column_panel(&self, rows: &[usize], c: usize) -> DMatrix<f64> {
        let n: usize = rows.iter().map(|&b| self.sizes[b]).sum();
        let mut p = DMatrix::zeros(n, self.sizes[c]);
        let mut off = 0;
        for &r in rows {
            if let Some(b) = self.block(r, c) {
                p.view_mut((off, 0), b.shape()).copy_from(b.as_ref());
            }
            off += self.sizes[r];
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_roundtrip_and_transposed_access() {
        let d = DMatrix::from_row_slice(
            3,
            3,
            &[4.0, 1.0, 2.0, 1.0, 5.0, 0.0, 2.0, 0.0, 6.0],
        );
        let m = BlockSparseSPD::from_dense(&d, vec![1, 2]);
        assert_eq!(m.to_dense(), d);
        let up = m.block(0, 1).unwrap();
        assert_eq!(up.as_ref(), &DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        assert_eq!(m.principal_dense(&[1]), d.view((1, 1), (2, 2)).into_owned());
        assert_eq!(m.trace(), 15.0);
    }

    #[test]
    fn upper_accumulation_lands_in_lower() {
        let mut m = BlockSparseSPD::uniform(2, 2);
        m.add_block(0, 1, &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let stored = m.block(1, 0).unwrap();
        assert_eq!(stored.as_ref(), &DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(m.n_stored_blocks(), 1);
    }
}
