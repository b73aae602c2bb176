//! Hessian-recovery metric tensors `M_K = det(|H_K|)^{−1/(d+4)} |H_K|`.

use std::collections::BTreeSet;
use std::io::{self, Write};

use crate::error::Result;
use crate::geometry::{PointLocator, SimplicialMesh};
use crate::linalg::small::{self, Matrix};
use crate::linalg::least_squares;
use crate::Real;

pub const DEFAULT_FLOOR: f64 = 1e-6;
/// Default relative floor used by the driver.
pub const DEFAULT_REL_FLOOR: f64 = 1e-6;

/// Piecewise-constant SPD metric, one matrix per element.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField<T, const D: usize> {
    pub elements: Vec<Matrix<T, D>>,
    pub floor: T,
}

impl<T: Real, const D: usize> MetricField<T, D> {
    pub fn constant(n_elements: usize, m: Matrix<T, D>) -> Self {
        MetricField {
            elements: vec![m; n_elements],
            floor: T::lit(DEFAULT_FLOOR),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Same field multiplied by `c > 0`.
    pub fn scaled(&self, c: T) -> Self {
        MetricField {
            elements: self.elements.iter().map(|m| small::scaled(m, c)).collect(),
            floor: self.floor,
        }
    }

    /// `|K|`-weighted average of the element metrics around each vertex.
    pub fn vertex_average(&self, mesh: &SimplicialMesh<T, D>) -> Vec<Matrix<T, D>> {
        let vols = mesh.volumes();
        (0..mesh.n_vertices())
            .map(|i| {
                let mut acc = small::zeros();
                let mut w = T::zero();
                for &k in mesh.patch(i) {
                    acc = small::add(&acc, &small::scaled(&self.elements[k], vols[k]));
                    w += vols[k];
                }
                small::scaled(&acc, T::one() / w)
            })
            .collect()
    }

    /// Smallest eigenvalue over all element metrics.
    pub fn min_eigenvalue(&self) -> T {
        self.elements
            .iter()
            .map(|m| small::sym_eigen(m).0.iter().copied().fold(T::infinity(), T::min))
            .fold(T::infinity(), T::min)
    }

    /// Per-element CSV: `element,m00,m01,…` (upper triangle, row by row).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "element")?;
        for i in 0..D {
            for j in i..D {
                write!(w, ",m{i}{j}")?;
            }
        }
        writeln!(w)?;
        for (k, m) in self.elements.iter().enumerate() {
            write!(w, "{k}")?;
            for i in 0..D {
                for j in i..D {
                    write!(w, ",{:e}", m[i][j].as_f64())?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn stencil<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, k: usize) -> BTreeSet<usize> {
    let mut s = BTreeSet::new();
    for &v in mesh.element(k) {
        for &e in mesh.patch(v) {
            s.extend(mesh.element(e).iter().copied());
        }
    }
    s
}

fn widen<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, s: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut out = s.clone();
    for &v in s {
        out.extend(mesh.neighbors(v).iter().copied());
    }
    out
}

fn fit_hessian<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    u: &[T],
    centre: &[T; D],
    points: &BTreeSet<usize>,
) -> Option<Matrix<T, D>> {
    let n_quad = D * (D + 1) / 2;
    let cols = 1 + D + n_quad;
    if points.len() < cols {
        return None;
    }
    let mut h = T::zero();
    for &v in points {
        let x = mesh.vertex(v);
        for r in 0..D {
            h = h.max((x[r] - centre[r]).abs());
        }
    }
    if h == T::zero() {
        return None;
    }
    let mut a = Vec::with_capacity(points.len() * cols);
    let mut b = Vec::with_capacity(points.len());
    for &v in points {
        let x = mesh.vertex(v);
        let mut y = [T::zero(); D];
        for r in 0..D {
            y[r] = (x[r] - centre[r]) / h;
        }
        a.push(T::one());
        a.extend_from_slice(&y);
        for i in 0..D {
            for j in i..D {
                a.push(y[i] * y[j]);
            }
        }
        b.push(u[v]);
    }
    let coef = least_squares(&a, points.len(), cols, &b, T::lit(1e-10)).ok()?;
    let inv_h2 = T::one() / (h * h);
    let mut hess = small::zeros();
    let mut c = 1 + D;
    for i in 0..D {
        for j in i..D {
            if i == j {
                hess[i][i] = T::lit(2.0) * coef[c] * inv_h2;
            } else {
                hess[i][j] = coef[c] * inv_h2;
                hess[j][i] = coef[c] * inv_h2;
            }
            c += 1;
        }
    }
    Some(hess)
}

/// Hessian of the least-squares quadratic fitted to `u` over the patches of
/// the vertices of element `k`, widened by one ring if that stencil does not
/// determine a quadratic. Returns zero (with a warning) if both fail.
pub fn recover_hessian<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, u: &[T], k: usize) -> Matrix<T, D> {
    let centre = mesh.centroid(k);
    let s = stencil(mesh, k);
    if let Some(h) = fit_hessian(mesh, u, &centre, &s) {
        return h;
    }
    let wide = widen(mesh, &s);
    if let Some(h) = fit_hessian(mesh, u, &centre, &wide) {
        return h;
    }
    log::warn!("hessian recovery stencil of element {k} is rank deficient; using zero");
    small::zeros()
}

/// `det(|H|)^{−1/(d+4)} |H|` with eigenvalue magnitudes clamped to `floor`.
pub fn metric_from_hessian<T: Real, const D: usize>(h: &Matrix<T, D>, floor: T) -> Matrix<T, D> {
    let (lambda, _) = small::sym_eigen(h);
    let mut det = T::one();
    for l in lambda {
        det *= l.abs().max(floor);
    }
    let s = det.powf(-T::one() / T::from_usize_lossy(D + 4));
    small::sym_map(h, |l| s * l.abs().max(floor))
}

pub fn metric_for_state<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, u: &[T], floor: T) -> MetricField<T, D> {
    assert_eq!(u.len(), mesh.n_vertices());
    let elements = (0..mesh.n_elements())
        .map(|k| metric_from_hessian(&recover_hessian(mesh, u, k), floor))
        .collect();
    MetricField { elements, floor }
}

/// As [`metric_for_state`], with the floor raised to `rel` times the largest
/// Hessian eigenvalue magnitude on the mesh.
pub fn metric_for_state_relative<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    u: &[T],
    floor: T,
    rel: T,
) -> MetricField<T, D> {
    assert_eq!(u.len(), mesh.n_vertices());
    let hessians: Vec<_> = (0..mesh.n_elements()).map(|k| recover_hessian(mesh, u, k)).collect();
    let peak = hessians
        .iter()
        .flat_map(|h| small::sym_eigen(h).0)
        .fold(T::zero(), |a, l| a.max(l.abs()));
    let floor = floor.max(rel * peak);
    let elements = hessians.iter().map(|h| metric_from_hessian(h, floor)).collect();
    MetricField { elements, floor }
}

/// Metric at arbitrary points: vertex averages on `mesh`, linear
/// interpolation entrywise, then symmetrization with eigenvalues clamped to
/// the smallest element eigenvalue of `metric`.
pub fn transfer_metric<T: Real, const D: usize>(
    metric: &MetricField<T, D>,
    mesh: &SimplicialMesh<T, D>,
    query: &[[T; D]],
) -> Result<Vec<Matrix<T, D>>> {
    let vertex = metric.vertex_average(mesh);
    let lower = metric.min_eigenvalue().max(T::min_positive_value());
    let locator = PointLocator::new(mesh);
    query
        .iter()
        .map(|x| {
            let loc = locator.locate(mesh, &mesh.domain().clamp(x))?;
            let mut m = small::zeros();
            for (a, &v) in mesh.element(loc.element).iter().enumerate() {
                m = small::add(&m, &small::scaled(&vertex[v], loc.bary()[a]));
            }
            Ok(small::sym_map(&m, |l| l.max(lower)))
        })
        .collect()
}
