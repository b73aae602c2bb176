//! Linear algebra kernels: tiny dense matrices for element geometry, banded
//! LU for the implicit integrators, CSR storage and small least-squares fits.

pub mod banded;
pub mod coloring;
pub mod lstsq;
pub mod small;
pub mod sparse;

pub use banded::{BandedLu, BandedMatrix, LuScalar};
pub use coloring::{fd_jacobian, ColumnGroups, Sparsity};
pub use lstsq::{least_squares, RankDeficient};
pub use sparse::CsrMatrix;

use crate::Real;

/// Root-mean-square of `v[i] / scale[i]`.
pub fn weighted_rms<T: Real>(v: &[T], scale: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    let sum: T = v.iter().zip(scale).map(|(&a, &s)| (a / s) * (a / s)).sum();
    (sum / T::from_usize_lossy(v.len())).sqrt()
}
