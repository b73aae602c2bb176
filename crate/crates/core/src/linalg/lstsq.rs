//! Dense least squares through Householder QR, sized for local polynomial fits.

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("least-squares system is rank deficient (column {column})")]
pub struct RankDeficient {
    pub column: usize,
}

/// Minimizes `‖A x − b‖₂` for a row-major `rows × cols` matrix `a`.
///
/// A column is declared dependent when its reduced diagonal falls below
/// `rel_tol` times the largest column norm.
pub fn least_squares<T: Real>(
    a: &[T],
    rows: usize,
    cols: usize,
    b: &[T],
    rel_tol: T,
) -> Result<Vec<T>, RankDeficient> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    if rows < cols {
        return Err(RankDeficient { column: rows });
    }
    let mut r = a.to_vec();
    let mut rhs = b.to_vec();
    let at = |r: &Vec<T>, i: usize, j: usize| r[i * cols + j];

    let scale = (0..cols)
        .map(|j| (0..rows).map(|i| at(&r, i, j) * at(&r, i, j)).sum::<T>().sqrt())
        .fold(T::zero(), T::max);
    if scale == T::zero() {
        return Err(RankDeficient { column: 0 });
    }

    for k in 0..cols {
        let norm = (k..rows).map(|i| at(&r, i, k) * at(&r, i, k)).sum::<T>().sqrt();
        if norm <= rel_tol * scale {
            return Err(RankDeficient { column: k });
        }
        let alpha = if at(&r, k, k) > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..rows).map(|i| at(&r, i, k)).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..cols {
            let s: T = v.iter().enumerate().map(|(t, &vi)| vi * at(&r, k + t, j)).sum();
            let f = T::lit(2.0) * s / vnorm2;
            for (t, &vi) in v.iter().enumerate() {
                r[(k + t) * cols + j] -= f * vi;
            }
        }
        let s: T = v.iter().enumerate().map(|(t, &vi)| vi * rhs[k + t]).sum();
        let f = T::lit(2.0) * s / vnorm2;
        for (t, &vi) in v.iter().enumerate() {
            rhs[k + t] -= f * vi;
        }
    }

    let mut x = vec![T::zero(); cols];
    for k in (0..cols).rev() {
        let mut s = rhs[k];
        for j in k + 1..cols {
            s -= at(&r, k, j) * x[j];
        }
        x[k] = s / at(&r, k, k);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_of_consistent_system() {
        // y = 1 + 2t - t^2 sampled at 5 points.
        let ts = [-1.0, -0.5, 0.0, 0.7, 1.3];
        let a: Vec<f64> = ts.iter().flat_map(|&t| [1.0, t, t * t]).collect();
        let b: Vec<f64> = ts.iter().map(|&t| 1.0 + 2.0 * t - t * t).collect();
        let x = least_squares(&a, 5, 3, &b, 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-13);
        assert!((x[1] - 2.0).abs() < 1e-13);
        assert!((x[2] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        // Best constant fit is the mean.
        let a = [1.0f64; 4];
        let b = [1.0, 2.0, 4.0, 5.0];
        let x = least_squares(&a, 4, 1, &b, 1e-12).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn dependent_columns_are_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let err = least_squares(&a, 3, 2, &[1.0, 2.0, 3.0], 1e-10).unwrap_err();
        assert_eq!(err.column, 1);
    }
}
