//! Banded matrices and their LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: column `j` holds rows
//! `j - ku - kl ..= j + kl`, the extra `kl` super-diagonals receive the fill
//! created by row interchanges. The factorization is generic over real and
//! complex scalars since the Radau solver needs both.

use num_complex::Complex;
use num_traits::{NumAssign, One, Zero};
use std::fmt::Debug;
use std::ops::Neg;

/// Scalar that can be fed to [`BandedMatrix::factor`].
pub trait LuScalar:
    Copy + NumAssign + Zero + One + Neg<Output = Self> + Debug + Send + Sync + 'static
{
    type Magnitude: PartialOrd + Zero + Copy;
    /// Cheap magnitude used for pivot selection.
    fn modulus(self) -> Self::Magnitude;
    fn lu_finite(self) -> bool;
}

macro_rules! real_lu_scalar {
    ($t:ty) => {
        impl LuScalar for $t {
            type Magnitude = $t;
            #[inline]
            fn modulus(self) -> $t {
                self.abs()
            }
            #[inline]
            fn lu_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }

        impl LuScalar for Complex<$t> {
            type Magnitude = $t;
            #[inline]
            fn modulus(self) -> $t {
                self.re.abs() + self.im.abs()
            }
            #[inline]
            fn lu_finite(self) -> bool {
                self.re.is_finite() && self.im.is_finite()
            }
        }
    };
}

real_lu_scalar!(f32);
real_lu_scalar!(f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular to working precision (zero pivot in column {column})")]
pub struct SingularMatrix {
    pub column: usize,
}

#[derive(Debug, Clone)]
pub struct BandedMatrix<S> {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<S>,
}

impl<S: LuScalar> BandedMatrix<S> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ldab,
            data: vec![S::zero(); ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    /// `true` when `(i, j)` lies inside the declared (pre-fill) band.
    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            S::zero()
        }
    }

    /// Adds `v` at `(i, j)`; panics when the entry is outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: S) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = S::zero());
    }

    /// Visits every stored in-band entry `(i, j, value)`.
    pub fn for_each_entry(&self, mut f: impl FnMut(usize, usize, S)) {
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                f(i, j, self.data[self.idx(i, j)]);
            }
        }
    }

    /// `out = A x`.
    pub fn matvec(&self, x: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|v| *v = S::zero());
        self.for_each_entry(|i, j, a| out[i] += a * x[j]);
    }

    /// Builds `alpha·A + beta·B` entry by entry from two real banded matrices
    /// of identical shape.
    pub fn combine<R: LuScalar>(alpha: S, a: &BandedMatrix<R>, beta: S, b: &BandedMatrix<R>) -> Self
    where
        S: From<R>,
    {
        assert_eq!((a.n, a.kl, a.ku), (b.n, b.kl, b.ku));
        let mut out = BandedMatrix::zeros(a.n, a.kl, a.ku);
        for (dst, (&x, &y)) in out.data.iter_mut().zip(a.data.iter().zip(&b.data)) {
            *dst = alpha * S::from(x) + beta * S::from(y);
        }
        out
    }

    /// LU factorization with partial pivoting (unblocked `gbtf2`).
    pub fn factor(mut self) -> Result<BandedLu<S>, SingularMatrix> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].modulus();
            for i in k + 1..=last {
                let m = self.data[self.idx(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            piv[k] = p;
            if best == <S::Magnitude as Zero>::zero() || !self.data[self.idx(p, k)].lu_finite() {
                return Err(SingularMatrix { column: k });
            }
            let jmax = (k + kv).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                self.data[ik] /= pivot;
            }
            for j in k + 1..=jmax {
                let akj = self.data[self.idx(k, j)];
                if akj == S::zero() {
                    continue;
                }
                let base_l = self.idx(k + 1, k);
                let base_u = self.idx(k + 1, j);
                for r in 0..last - k {
                    let l = self.data[base_l + r];
                    self.data[base_u + r] -= l * akj;
                }
            }
        }
        Ok(BandedLu { lu: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu<S> {
    lu: BandedMatrix<S>,
    piv: Vec<usize>,
}

impl<S: LuScalar> BandedLu<S> {
    pub fn n(&self) -> usize {
        self.lu.n
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [S]) {
        let a = &self.lu;
        let n = a.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == S::zero() {
                continue;
            }
            let last = (k + a.kl).min(n - 1);
            for i in k + 1..=last {
                b[i] -= a.data[a.idx(i, k)] * bk;
            }
        }
        let kv = a.kl + a.ku;
        for k in (0..n).rev() {
            let mut s = b[k];
            let jmax = (k + kv).min(n - 1);
            for j in k + 1..=jmax {
                s -= a.data[a.idx(k, j)] * b[j];
            }
            b[k] = s / a.data[a.idx(k, k)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandedMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in 0..n {
                if m.in_band(i, j) {
                    m.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        m
    }

    #[test]
    fn solves_against_dense_product() {
        for &(n, kl, ku) in &[(1, 0, 0), (7, 2, 1), (30, 3, 5), (40, 6, 6)] {
            let m = random_band(n, kl, ku, n as u64);
            let x: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.5).collect();
            let mut b = vec![0.0; n];
            m.matvec(&x, &mut b);
            let lu = m.clone().factor().unwrap();
            lu.solve_in_place(&mut b);
            for (a, e) in b.iter().zip(&x) {
                assert!((a - e).abs() < 1e-9, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut m = BandedMatrix::<f64>::zeros(3, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 2, 2.0);
        m.set(2, 1, 3.0);
        m.set(2, 2, 1.0);
        let x = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        m.matvec(&x, &mut b);
        m.factor().unwrap().solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_solve() {
        let re = random_band(12, 2, 2, 3);
        let mut id = BandedMatrix::<f64>::zeros(12, 2, 2);
        for i in 0..12 {
            id.set(i, i, 1.0);
        }
        let shift = Complex::new(0.3, 2.0);
        let m = BandedMatrix::<Complex<f64>>::combine(shift, &id, Complex::new(-1.0, 0.0), &re);
        let x: Vec<Complex<f64>> = (0..12).map(|i| Complex::new(i as f64, 1.0 - i as f64)).collect();
        let mut b = vec![Complex::new(0.0, 0.0); 12];
        m.matvec(&x, &mut b);
        m.factor().unwrap().solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_is_reported() {
        let m = BandedMatrix::<f64>::zeros(4, 1, 1);
        assert_eq!(m.factor().unwrap_err(), SingularMatrix { column: 0 });
    }
}
