//! Structure-exploiting finite-difference Jacobians.
//!
//! Columns whose row patterns are disjoint are perturbed together, so a mesh
//! Jacobian costs a couple of dozen residual evaluations instead of one per
//! unknown.

use crate::linalg::BandedMatrix;
use crate::Real;

/// Row pattern of each Jacobian column (`rows_of_col[j]` lists every `i`
/// with a possibly nonzero `∂f_i/∂y_j`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sparsity {
    rows_of_col: Vec<Vec<usize>>,
}

impl Sparsity {
    pub fn new(mut rows_of_col: Vec<Vec<usize>>) -> Self {
        for rows in rows_of_col.iter_mut() {
            rows.sort_unstable();
            rows.dedup();
        }
        Sparsity { rows_of_col }
    }

    pub fn dense(n: usize) -> Self {
        Sparsity {
            rows_of_col: (0..n).map(|_| (0..n).collect()).collect(),
        }
    }

    /// Pattern for `block` interleaved unknowns per vertex, fully coupled
    /// inside a vertex and between adjacent vertices.
    pub fn from_vertex_graph(neighbors: &[Vec<usize>], block: usize) -> Self {
        let mut cols = Vec::with_capacity(neighbors.len() * block);
        for (v, nb) in neighbors.iter().enumerate() {
            let mut rows = Vec::with_capacity((nb.len() + 1) * block);
            for &w in nb.iter().chain(std::iter::once(&v)) {
                rows.extend((0..block).map(|c| w * block + c));
            }
            for _ in 0..block {
                cols.push(rows.clone());
            }
        }
        Sparsity::new(cols)
    }

    pub fn len(&self) -> usize {
        self.rows_of_col.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows_of_col.is_empty()
    }

    pub fn rows_of_col(&self, j: usize) -> &[usize] {
        &self.rows_of_col[j]
    }

    /// `(kl, ku)` covering every structural entry.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (j, rows) in self.rows_of_col.iter().enumerate() {
            for &i in rows {
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn banded_zeros<T: Real>(&self) -> BandedMatrix<T> {
        let (kl, ku) = self.bandwidths();
        BandedMatrix::zeros(self.len(), kl, ku)
    }
}

/// Column groups with pairwise disjoint row patterns (greedy coloring).
#[derive(Debug, Clone)]
pub struct ColumnGroups {
    groups: Vec<Vec<usize>>,
}

impl ColumnGroups {
    pub fn new(sparsity: &Sparsity) -> Self {
        let n = sparsity.len();
        let mut cols_of_row: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 0..n {
            for &i in sparsity.rows_of_col(j) {
                cols_of_row[i].push(j);
            }
        }
        let mut color = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut forbidden_mark: Vec<usize> = Vec::new();
        for j in 0..n {
            for &i in sparsity.rows_of_col(j) {
                for &k in &cols_of_row[i] {
                    let c = color[k];
                    if c != usize::MAX {
                        forbidden_mark[c] = j + 1;
                    }
                }
            }
            let c = (0..groups.len())
                .find(|&c| forbidden_mark[c] != j + 1)
                .unwrap_or_else(|| {
                    groups.push(Vec::new());
                    forbidden_mark.push(0);
                    groups.len() - 1
                });
            color[j] = c;
            groups[c].push(j);
        }
        ColumnGroups { groups }
    }

    pub fn count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

/// Forward-difference Jacobian of `f` at `y` (with `f0 = f(y)`) written into
/// `out`, which must cover the sparsity band.
pub fn fd_jacobian<T: Real>(
    mut f: impl FnMut(&[T], &mut [T]),
    y: &[T],
    f0: &[T],
    sparsity: &Sparsity,
    groups: &ColumnGroups,
    out: &mut BandedMatrix<T>,
) {
    let n = y.len();
    let sqrt_eps = T::epsilon().sqrt();
    let mut yp = y.to_vec();
    let mut fp = vec![T::zero(); n];
    let mut delta = vec![T::zero(); n];
    out.fill_zero();
    for group in groups.groups() {
        for &j in group {
            let step = sqrt_eps * y[j].abs().max(T::one());
            yp[j] = y[j] + step;
            delta[j] = yp[j] - y[j];
        }
        f(&yp, &mut fp);
        for &j in group {
            for &i in sparsity.rows_of_col(j) {
                out.set(i, j, (fp[i] - f0[i]) / delta[j]);
            }
            yp[j] = y[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_needs_three_colors() {
        let n: usize = 10;
        let cols: Vec<Vec<usize>> = (0..n)
            .map(|j| (j.saturating_sub(1)..=(j + 1).min(n - 1)).collect())
            .collect();
        let s = Sparsity::new(cols);
        assert_eq!(s.bandwidths(), (1, 1));
        let g = ColumnGroups::new(&s);
        assert_eq!(g.count(), 3);
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        // f_i = y_{i-1} y_i + sin(y_{i+1})
        let n = 8;
        let f = |y: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let left = if i > 0 { y[i - 1] } else { 0.0 };
                let right = if i + 1 < n { y[i + 1].sin() } else { 0.0 };
                out[i] = left * y[i] + right;
            }
        };
        let cols: Vec<Vec<usize>> = (0..n)
            .map(|j| (j.saturating_sub(1)..=(j + 1).min(n - 1)).collect())
            .collect();
        let s = Sparsity::new(cols);
        let g = ColumnGroups::new(&s);
        let y: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
        let mut f0 = vec![0.0; n];
        f(&y, &mut f0);
        let mut jac = s.banded_zeros::<f64>();
        fd_jacobian(f, &y, &f0, &s, &g, &mut jac);
        for i in 0..n {
            let left = if i > 0 { y[i - 1] } else { 0.0 };
            assert!((jac.get(i, i) - left).abs() < 1e-6);
            if i > 0 {
                assert!((jac.get(i, i - 1) - y[i]).abs() < 1e-6);
            }
            if i + 1 < n {
                assert!((jac.get(i, i + 1) - y[i + 1].cos()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vertex_graph_pattern_is_blockwise() {
        let nb = vec![vec![1], vec![0, 2], vec![1]];
        let s = Sparsity::from_vertex_graph(&nb, 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s.rows_of_col(2), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(s.bandwidths(), (3, 3));
    }
}
