use crate::error::{Error, Result};
use crate::geometry::locate::PointLocator;
use crate::geometry::mesh::{BoundaryTag, SimplicialMesh};
use crate::linalg::small;
use crate::Real;

/// `T_h^{n+1} = Ψ_h(T̂_c)`: evaluates the piecewise-linear map `ξ ↦ x`
/// defined by `(comp_np1, phys_n)` at the vertices of `ref_comp`.
///
/// Facet vertices are snapped to their facet and corners keep their
/// position. If `comp_np1` equals `ref_comp` exactly, `phys_n` is returned
/// unchanged.
pub fn apply_correspondence<T: Real, const D: usize>(
    phys_n: &SimplicialMesh<T, D>,
    comp_np1: &SimplicialMesh<T, D>,
    ref_comp: &SimplicialMesh<T, D>,
) -> Result<SimplicialMesh<T, D>> {
    if !phys_n.shares_topology(comp_np1) || !phys_n.shares_topology(ref_comp) {
        return Err(Error::InvalidMesh("meshes do not share connectivity".into()));
    }
    if comp_np1.vertices() == ref_comp.vertices() {
        return Ok(phys_n.clone());
    }
    let locator = PointLocator::new(comp_np1);
    let dom = *phys_n.domain();
    let mut out = Vec::with_capacity(phys_n.n_vertices());
    for (i, xi) in ref_comp.vertices().iter().enumerate() {
        let tag = phys_n.boundary_tag(i);
        if tag == BoundaryTag::Corner {
            out.push(*phys_n.vertex(i));
            continue;
        }
        let loc = locator.locate(comp_np1, &ref_comp.domain().clamp(xi))?;
        let mut x = [T::zero(); D];
        for (a, &v) in comp_np1.element(loc.element).iter().enumerate() {
            let lam = loc.bary()[a];
            for r in 0..D {
                x[r] += lam * phys_n.vertex(v)[r];
            }
        }
        let mut x = dom.clamp(&x);
        if let BoundaryTag::Facet { axis, upper } = tag {
            x[axis] = if upper { dom.hi[axis] } else { dom.lo[axis] };
        }
        out.push(x);
    }
    let mesh = phys_n.with_vertices(out);
    for k in 0..mesh.n_elements() {
        let d = small::det(&mesh.edge_matrix(k));
        if !(d > T::zero()) {
            return Err(Error::MeshTangled {
                element: k,
                det: d.as_f64(),
            });
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uniform_mesh, DomainBox};

    #[test]
    fn identity_motion_is_bit_exact() {
        let m = build_uniform_mesh::<f64, 2>(5, DomainBox::unit()).unwrap();
        let phys = m.with_vertices(m.vertices().iter().map(|x| [x[0] * x[0], x[1]]).collect());
        let out = apply_correspondence(&phys, &m, &m).unwrap();
        assert_eq!(out.vertices(), phys.vertices());
    }

    #[test]
    fn one_dimensional_shift() {
        // Physical mesh {0, 0.3, 1}; computational vertex 1 moves from 0.5 to
        // 0.5 + δ, so the reference point 0.5 maps through the left piece
        // with slope 0.3/(0.5+δ).
        let dom = DomainBox::<f64, 1>::unit();
        let reference = SimplicialMesh::new(dom, vec![[0.0], [0.5], [1.0]], vec![0, 1, 1, 2]).unwrap();
        let phys = reference.with_vertices(vec![[0.0], [0.3], [1.0]]);
        let delta = 0.05;
        let comp = reference.with_vertices(vec![[0.0], [0.5 + delta], [1.0]]);
        let out = apply_correspondence(&phys, &comp, &reference).unwrap();
        let expected = 0.3 * 0.5 / (0.5 + delta);
        assert!((out.vertex(1)[0] - expected).abs() < 1e-15);
        // Linearized: shift by −δ·slope.
        assert!((out.vertex(1)[0] - (0.3 - delta * 0.3 / 0.5)).abs() < 0.01);
        assert_eq!(out.vertex(0)[0], 0.0);
        assert_eq!(out.vertex(2)[0], 1.0);
    }

    #[test]
    fn boundary_vertices_stay_on_facets() {
        let m = build_uniform_mesh::<f64, 2>(6, DomainBox::unit()).unwrap();
        let comp = m.with_vertices(
            m.vertices()
                .iter()
                .map(|x| [x[0] + 0.05 * (std::f64::consts::PI * x[0]).sin() * x[1] * (1.0 - x[1]), x[1]])
                .collect(),
        );
        let out = apply_correspondence(&m, &comp, &m).unwrap();
        for i in 0..m.n_vertices() {
            match m.boundary_tag(i) {
                BoundaryTag::Corner => assert_eq!(out.vertex(i), m.vertex(i)),
                BoundaryTag::Facet { axis, .. } => assert_eq!(out.vertex(i)[axis], m.vertex(i)[axis]),
                BoundaryTag::Interior => {}
            }
        }
        assert!(out.min_volume() > 0.0);
    }
}
