use crate::error::{Error, Result};
use crate::geometry::mesh::{factorial, SimplicialMesh};
use crate::linalg::small::{self, Matrix};
use crate::Real;

/// Affine data of one element `K` paired with its computational image `K_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMapData<T, const D: usize> {
    pub edge: Matrix<T, D>,
    pub edge_ref: Matrix<T, D>,
    pub edge_inv: Matrix<T, D>,
    /// `𝕁 = Ê_K E_K⁻¹`.
    pub jacobian: Matrix<T, D>,
    pub det_edge: T,
    pub det_edge_ref: T,
    /// `|K| = det(E_K)/d!`.
    pub volume: T,
}

impl<T: Real, const D: usize> AffineMapData<T, D> {
    pub fn det_jacobian(&self) -> T {
        self.det_edge_ref / self.det_edge
    }

    pub fn volume_ref(&self) -> T {
        self.det_edge_ref / factorial::<T>(D)
    }
}

/// Affine data of element `k` of `mesh` against the same element of `comp`.
///
/// Fails when either element is inverted or degenerate.
pub fn edge_matrices<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    comp: &SimplicialMesh<T, D>,
    k: usize,
) -> Result<AffineMapData<T, D>> {
    debug_assert!(mesh.shares_topology(comp));
    let edge = mesh.edge_matrix(k);
    let edge_ref = comp.edge_matrix(k);
    let det_edge = small::det(&edge);
    let det_edge_ref = small::det(&edge_ref);
    if !(det_edge > T::zero()) {
        return Err(Error::InvertedElement {
            element: k,
            det: det_edge.as_f64(),
        });
    }
    if !(det_edge_ref > T::zero()) {
        return Err(Error::InvertedElement {
            element: k,
            det: det_edge_ref.as_f64(),
        });
    }
    let edge_inv = small::inverse(&edge).ok_or(Error::InvertedElement {
        element: k,
        det: det_edge.as_f64(),
    })?;
    Ok(AffineMapData {
        edge,
        edge_ref,
        edge_inv,
        jacobian: small::mul(&edge_ref, &edge_inv),
        det_edge,
        det_edge_ref,
        volume: det_edge / factorial::<T>(D),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainBox;

    #[test]
    fn identity_map() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = SimplicialMesh::<f64, 2>::new(DomainBox::unit(), verts, vec![0, 1, 2]).unwrap();
        let a = edge_matrices(&m, &m, 0).unwrap();
        assert_eq!(a.jacobian, small::identity());
        assert_eq!(a.volume, 0.5);
    }

    #[test]
    fn one_dimensional_slope() {
        let dom = DomainBox::<f64, 1>::unit();
        let phys = SimplicialMesh::new(dom, vec![[0.0], [0.5], [1.0]], vec![0, 1, 1, 2]).unwrap();
        let comp = phys.with_vertices(vec![[0.0], [1.0], [1.0]]);
        let a = edge_matrices(&phys, &comp, 0).unwrap();
        assert_eq!(a.jacobian[0][0], 2.0);
        assert_eq!(a.volume, 0.5);
    }

    #[test]
    fn right_triangle_det() {
        let dom = DomainBox::unit();
        let phys = SimplicialMesh::<f64, 2>::new(dom, vec![[0.0, 0.0], [0.2, 0.0], [0.0, 0.1]], vec![0, 1, 2]).unwrap();
        let comp = phys.with_vertices(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let a = edge_matrices(&phys, &comp, 0).unwrap();
        assert!((small::det(&a.jacobian) - 50.0).abs() < 1e-12);
        assert!((a.det_jacobian() - 50.0).abs() < 1e-12);
        let back = small::mul(&a.jacobian, &a.edge);
        assert!(small::distance(&back, &a.edge_ref) < 1e-14);
    }
}
