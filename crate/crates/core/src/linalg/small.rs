//! Fixed-size `D×D` matrix helpers for element-level geometry (`D` is 1 or 2
//! in practice; the generic fallbacks handle any `D`).
//!
//! Matrices are row-major: `m[i][j]` is row `i`, column `j`.

use crate::Real;

pub type Vector<T, const D: usize> = [T; D];
pub type Matrix<T, const D: usize> = [[T; D]; D];

pub fn zeros<T: Real, const D: usize>() -> Matrix<T, D> {
    [[T::zero(); D]; D]
}

pub fn identity<T: Real, const D: usize>() -> Matrix<T, D> {
    let mut m = zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn scaled<T: Real, const D: usize>(m: &Matrix<T, D>, s: T) -> Matrix<T, D> {
    let mut out = *m;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

pub fn add<T: Real, const D: usize>(a: &Matrix<T, D>, b: &Matrix<T, D>) -> Matrix<T, D> {
    let mut out = *a;
    for i in 0..D {
        for j in 0..D {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn transpose<T: Real, const D: usize>(m: &Matrix<T, D>) -> Matrix<T, D> {
    let mut out = zeros();
    for i in 0..D {
        for j in 0..D {
            out[j][i] = m[i][j];
        }
    }
    out
}

pub fn mul<T: Real, const D: usize>(a: &Matrix<T, D>, b: &Matrix<T, D>) -> Matrix<T, D> {
    let mut out = zeros();
    for i in 0..D {
        for k in 0..D {
            let aik = a[i][k];
            for j in 0..D {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn mul_vec<T: Real, const D: usize>(a: &Matrix<T, D>, x: &Vector<T, D>) -> Vector<T, D> {
    let mut out = [T::zero(); D];
    for i in 0..D {
        for j in 0..D {
            out[i] += a[i][j] * x[j];
        }
    }
    out
}

pub fn trace<T: Real, const D: usize>(m: &Matrix<T, D>) -> T {
    (0..D).map(|i| m[i][i]).sum()
}

pub fn dot<T: Real, const D: usize>(a: &Vector<T, D>, b: &Vector<T, D>) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn det<T: Real, const D: usize>(m: &Matrix<T, D>) -> T {
    match D {
        0 => T::one(),
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let mut a = *m;
            let mut det = T::one();
            for k in 0..D {
                let p = (k..D)
                    .max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap())
                    .unwrap();
                if a[p][k] == T::zero() {
                    return T::zero();
                }
                if p != k {
                    a.swap(p, k);
                    det = -det;
                }
                det *= a[k][k];
                for i in k + 1..D {
                    let l = a[i][k] / a[k][k];
                    for j in k..D {
                        let akj = a[k][j];
                        a[i][j] -= l * akj;
                    }
                }
            }
            det
        }
    }
}

/// Inverse, or `None` when the matrix is exactly singular.
pub fn inverse<T: Real, const D: usize>(m: &Matrix<T, D>) -> Option<Matrix<T, D>> {
    let d = det(m);
    if d == T::zero() || !d.is_finite() {
        return None;
    }
    let mut out = zeros();
    match D {
        1 => out[0][0] = T::one() / m[0][0],
        2 => {
            out[0][0] = m[1][1] / d;
            out[0][1] = -m[0][1] / d;
            out[1][0] = -m[1][0] / d;
            out[1][1] = m[0][0] / d;
        }
        _ => {
            // Gauss-Jordan with partial pivoting.
            let mut a = *m;
            out = identity();
            for k in 0..D {
                let p = (k..D)
                    .max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap())
                    .unwrap();
                a.swap(p, k);
                out.swap(p, k);
                let piv = a[k][k];
                for j in 0..D {
                    a[k][j] /= piv;
                    out[k][j] /= piv;
                }
                for i in 0..D {
                    if i != k {
                        let l = a[i][k];
                        for j in 0..D {
                            let akj = a[k][j];
                            let okj = out[k][j];
                            a[i][j] -= l * akj;
                            out[i][j] -= l * okj;
                        }
                    }
                }
            }
        }
    }
    Some(out)
}

pub fn symmetrize<T: Real, const D: usize>(m: &Matrix<T, D>) -> Matrix<T, D> {
    let half = T::lit(0.5);
    let mut out = *m;
    for i in 0..D {
        for j in i + 1..D {
            let v = half * (m[i][j] + m[j][i]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix: returns eigenvalues and the
/// orthogonal matrix whose columns are the matching eigenvectors.
///
/// Closed form (one Jacobi rotation) for `D ≤ 2`, cyclic Jacobi otherwise.
pub fn sym_eigen<T: Real, const D: usize>(m: &Matrix<T, D>) -> (Vector<T, D>, Matrix<T, D>) {
    let mut a = symmetrize(m);
    let mut q = identity::<T, D>();
    let sweeps = if D <= 2 { 1 } else { 50 };
    for _ in 0..sweeps {
        let mut off = T::zero();
        for i in 0..D {
            for j in i + 1..D {
                off += a[i][j] * a[i][j];
            }
        }
        if off == T::zero() {
            break;
        }
        for p in 0..D {
            for r in p + 1..D {
                if a[p][r] == T::zero() {
                    continue;
                }
                let theta = T::lit(0.5) * (T::lit(2.0) * a[p][r]).atan2(a[p][p] - a[r][r]);
                let (s, c) = theta.sin_cos();
                // a <- Gᵀ a G with G the rotation in the (p, r) plane.
                let mut g = identity::<T, D>();
                g[p][p] = c;
                g[r][r] = c;
                g[p][r] = -s;
                g[r][p] = s;
                a = mul(&transpose(&g), &mul(&a, &g));
                a[p][r] = T::zero();
                a[r][p] = T::zero();
                q = mul(&q, &g);
            }
        }
    }
    let mut lambda = [T::zero(); D];
    for i in 0..D {
        lambda[i] = a[i][i];
    }
    (lambda, q)
}

/// `Q diag(f(λ)) Qᵀ` for a symmetric matrix with eigenpairs `(λ, Q)`.
pub fn sym_map<T: Real, const D: usize>(m: &Matrix<T, D>, f: impl Fn(T) -> T) -> Matrix<T, D> {
    let (lambda, q) = sym_eigen(m);
    let mut out = zeros();
    for k in 0..D {
        let fk = f(lambda[k]);
        for i in 0..D {
            for j in 0..D {
                out[i][j] += q[i][k] * fk * q[j][k];
            }
        }
    }
    symmetrize(&out)
}

/// Frobenius norm of `a − b`.
pub fn distance<T: Real, const D: usize>(a: &Matrix<T, D>, b: &Matrix<T, D>) -> T {
    let mut s = T::zero();
    for i in 0..D {
        for j in 0..D {
            let d = a[i][j] - b[i][j];
            s += d * d;
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = [[2.0, 1.0], [0.5, 3.0]];
        let inv = inverse(&m).unwrap();
        let p = mul(&m, &inv);
        assert!(distance(&p, &identity()) < 1e-14);
        let m3: Matrix<f64, 3> = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 2.0, 5.0]];
        let p3 = mul(&m3, &inverse(&m3).unwrap());
        assert!(distance(&p3, &identity()) < 1e-14);
        assert!((det(&m3) - (4.0 * 13.0 - 1.0 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        assert!(inverse(&[[1.0, 2.0], [2.0, 4.0]]).is_none());
        assert!(inverse(&[[0.0f64]]).is_none());
    }

    #[test]
    fn sym_eigen_reconstructs() {
        let m: Matrix<f64, 2> = [[3.0, 1.5], [1.5, -2.0]];
        let (l, q) = sym_eigen(&m);
        let back = sym_map(&m, |x| x);
        assert!(distance(&back, &m) < 1e-13);
        assert!((l[0] + l[1] - 1.0).abs() < 1e-13);
        assert!((l[0] * l[1] - det(&m)).abs() < 1e-12);
        let qtq = mul(&transpose(&q), &q);
        assert!(distance(&qtq, &identity()) < 1e-14);

        let m3 = [[2.0, 1.0, 0.3], [1.0, 1.0, 0.2], [0.3, 0.2, 4.0]];
        let back3 = sym_map(&m3, |x| x);
        assert!(distance(&back3, &m3) < 1e-12);
    }
}
