//! Compressed sparse row storage with a fixed pattern.

use crate::linalg::BandedMatrix;
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Zero matrix with the given symmetric pattern; `adjacency[i]` lists the
    /// columns of row `i` (the diagonal is always included).
    pub fn with_pattern(adjacency: &[Vec<usize>]) -> Self {
        let n = adjacency.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, cols) in adjacency.iter().enumerate() {
            let mut row: Vec<usize> = cols.iter().copied().chain(std::iter::once(i)).collect();
            row.sort_unstable();
            row.dedup();
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![T::zero(); nnz],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.position(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds into an existing pattern entry; panics if `(i, j)` is not stored.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in pattern"));
        self.values[k] += v;
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).map(|(_, a)| a).sum()).collect()
    }

    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Adds `scale · A` into a banded matrix whose unknowns are interleaved
    /// in blocks of `block` (entry `(i, j)` lands on every diagonal
    /// sub-block position `(i·block + c, j·block + c)`).
    pub fn add_to_banded(&self, scale: T, block: usize, out: &mut BandedMatrix<T>) {
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                for c in 0..block {
                    out.add(i * block + c, j * block + c, scale * a);
                }
            }
        }
    }
}
