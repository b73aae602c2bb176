use crate::error::{Error, Result};
use crate::geometry::mesh::{SimplicialMesh, MAX_NODES};
use crate::linalg::small;
use crate::Real;

/// Barycentric tolerance for containment.
const BARY_TOL: f64 = 1e-10;

/// Element hit and barycentric coordinates of a located point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location<T, const D: usize> {
    pub element: usize,
    bary: [T; MAX_NODES],
}

impl<T: Real, const D: usize> Location<T, D> {
    /// `λ_0..λ_d`, summing to one.
    pub fn bary(&self) -> &[T] {
        &self.bary[..D + 1]
    }
}

/// Bucket grid over the domain box for fast point-in-simplex queries.
#[derive(Debug, Clone)]
pub struct PointLocator<T, const D: usize> {
    cells: [usize; D],
    lo: [T; D],
    inv_h: [T; D],
    buckets: Vec<Vec<usize>>,
}

impl<T: Real, const D: usize> PointLocator<T, D> {
    pub fn new(mesh: &SimplicialMesh<T, D>) -> Self {
        let dom = mesh.domain();
        let per_axis = ((mesh.n_elements() as f64).powf(1.0 / D as f64).ceil() as usize).max(1);
        let cells = [per_axis; D];
        let mut inv_h = [T::zero(); D];
        for k in 0..D {
            inv_h[k] = T::from_usize_lossy(per_axis) / dom.extent(k);
        }
        let mut loc = PointLocator {
            cells,
            lo: dom.lo,
            inv_h,
            buckets: vec![Vec::new(); per_axis.pow(D as u32)],
        };
        for k in 0..mesh.n_elements() {
            let pts = mesh.simplex(k);
            let mut bmin = pts[0];
            let mut bmax = pts[0];
            for p in pts.iter().take(D + 1).skip(1) {
                for r in 0..D {
                    bmin[r] = bmin[r].min(p[r]);
                    bmax[r] = bmax[r].max(p[r]);
                }
            }
            let a = loc.cell_of(&bmin);
            let b = loc.cell_of(&bmax);
            loc.for_each_cell(a, b, |idx, buckets| buckets[idx].push(k));
        }
        loc
    }

    fn cell_of(&self, x: &[T; D]) -> [usize; D] {
        let mut c = [0; D];
        for k in 0..D {
            let f = ((x[k] - self.lo[k]) * self.inv_h[k]).floor();
            let f = f.max(T::zero()).to_usize().unwrap_or(0);
            c[k] = f.min(self.cells[k] - 1);
        }
        c
    }

    fn flat(&self, c: &[usize; D]) -> usize {
        let mut idx = 0;
        for k in (0..D).rev() {
            idx = idx * self.cells[k] + c[k];
        }
        idx
    }

    fn for_each_cell(&mut self, a: [usize; D], b: [usize; D], mut f: impl FnMut(usize, &mut Vec<Vec<usize>>)) {
        let mut c = a;
        loop {
            let idx = self.flat(&c);
            f(idx, &mut self.buckets);
            let mut k = 0;
            loop {
                if k == D {
                    return;
                }
                if c[k] < b[k] {
                    c[k] += 1;
                    break;
                }
                c[k] = a[k];
                k += 1;
            }
        }
    }

    /// Locates `x`. Points outside the domain by more than `1e-10·diam`
    /// fail; points inside the box but outside every element (possible only
    /// through round-off at a deformed boundary) are clamped onto the
    /// nearest element.
    pub fn locate(&self, mesh: &SimplicialMesh<T, D>, x: &[T; D]) -> Result<Location<T, D>> {
        let dom = mesh.domain();
        let dist = dom.distance(x);
        if dist > dom.tolerance() {
            return Err(Error::OutOfDomain {
                distance: dist.as_f64(),
            });
        }
        let tol = T::lit(BARY_TOL);
        let bucket = &self.buckets[self.flat(&self.cell_of(x))];
        let mut best: Option<(T, Location<T, D>)> = None;
        for &k in bucket {
            let loc = barycentric(mesh, k, x);
            let m = min_coord::<T, D>(&loc);
            if m >= -tol {
                return Ok(loc);
            }
            if best.as_ref().is_none_or(|(b, _)| m > *b) {
                best = Some((m, loc));
            }
        }
        for k in 0..mesh.n_elements() {
            let loc = barycentric(mesh, k, x);
            let m = min_coord::<T, D>(&loc);
            if m >= -tol {
                return Ok(loc);
            }
            if best.as_ref().is_none_or(|(b, _)| m > *b) {
                best = Some((m, loc));
            }
        }
        let (_, mut loc) = best.expect("mesh has at least one element");
        let mut sum = T::zero();
        for l in loc.bary.iter_mut().take(D + 1) {
            *l = l.max(T::zero());
            sum += *l;
        }
        for l in loc.bary.iter_mut().take(D + 1) {
            *l /= sum;
        }
        Ok(loc)
    }
}

fn min_coord<T: Real, const D: usize>(loc: &Location<T, D>) -> T {
    loc.bary().iter().copied().fold(T::infinity(), T::min)
}

/// Barycentric coordinates of `x` with respect to element `k` (may be
/// negative when `x` is outside).
pub fn barycentric<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, k: usize, x: &[T; D]) -> Location<T, D> {
    let el = mesh.element(k);
    let x0 = mesh.vertex(el[0]);
    let mut bary = [T::zero(); MAX_NODES];
    match small::inverse(&mesh.edge_matrix(k)) {
        Some(inv) => {
            let mut rel = [T::zero(); D];
            for r in 0..D {
                rel[r] = x[r] - x0[r];
            }
            let l = small::mul_vec(&inv, &rel);
            let mut s = T::zero();
            for i in 0..D {
                bary[i + 1] = l[i];
                s += l[i];
            }
            bary[0] = T::one() - s;
        }
        None => {
            bary[0] = T::neg_infinity();
        }
    }
    Location { element: k, bary }
}

/// One-shot convenience wrapper; build a [`PointLocator`] for many queries.
pub fn locate_point<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, x: &[T; D]) -> Result<Location<T, D>> {
    PointLocator::new(mesh).locate(mesh, x)
}

/// `Σ λ_a x_a` over the nodes of `loc.element`.
pub fn reconstruct<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, loc: &Location<T, D>) -> [T; D] {
    let mut x = [T::zero(); D];
    for (a, &v) in mesh.element(loc.element).iter().enumerate() {
        for r in 0..D {
            x[r] += loc.bary[a] * mesh.vertex(v)[r];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uniform_mesh, DomainBox};

    #[test]
    fn vertex_and_centroid() {
        let m = build_uniform_mesh::<f64, 2>(4, DomainBox::unit()).unwrap();
        let loc = locate_point(&m, &[0.25, 0.5]).unwrap();
        assert!(loc.bary().iter().any(|&l| (l - 1.0).abs() < 1e-12));
        let c = m.centroid(7);
        let loc = locate_point(&m, &c).unwrap();
        assert_eq!(loc.element, 7);
        for &l in loc.bary() {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_rejected() {
        let m = build_uniform_mesh::<f64, 1>(4, DomainBox::unit()).unwrap();
        assert!(matches!(locate_point(&m, &[1.1]), Err(Error::OutOfDomain { .. })));
        assert!(locate_point(&m, &[1.0 + 1e-13]).is_ok());
    }
}
