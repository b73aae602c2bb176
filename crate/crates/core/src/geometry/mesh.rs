use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::small::{self, Matrix};
use crate::Real;

/// Largest simplex node count supported (`D ≤ 2`).
pub const MAX_NODES: usize = 3;

/// Axis-aligned box `Ω = Π [lo_k, hi_k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBox<T, const D: usize> {
    pub lo: [T; D],
    pub hi: [T; D],
}

impl<T: Real, const D: usize> DomainBox<T, D> {
    pub fn new(lo: [T; D], hi: [T; D]) -> Result<Self> {
        for k in 0..D {
            if !(hi[k] > lo[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "degenerate domain box along axis {k}: [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(DomainBox { lo, hi })
    }

    pub fn unit() -> Self {
        DomainBox {
            lo: [T::zero(); D],
            hi: [T::one(); D],
        }
    }

    pub fn extent(&self, axis: usize) -> T {
        self.hi[axis] - self.lo[axis]
    }

    pub fn measure(&self) -> T {
        (0..D).map(|k| self.extent(k)).fold(T::one(), |a, b| a * b)
    }

    pub fn diameter(&self) -> T {
        (0..D)
            .map(|k| self.extent(k) * self.extent(k))
            .sum::<T>()
            .sqrt()
    }

    /// Distance from `x` to the box (zero inside).
    pub fn distance(&self, x: &[T; D]) -> T {
        let mut s = T::zero();
        for k in 0..D {
            let d = (self.lo[k] - x[k]).max(x[k] - self.hi[k]).max(T::zero());
            s += d * d;
        }
        s.sqrt()
    }

    pub fn clamp(&self, x: &[T; D]) -> [T; D] {
        let mut out = *x;
        for k in 0..D {
            out[k] = out[k].max(self.lo[k]).min(self.hi[k]);
        }
        out
    }

    /// Round-off guard used for domain membership tests.
    pub fn tolerance(&self) -> T {
        T::lit(1e-10) * self.diameter()
    }
}

/// Boundary classification of a vertex.
///
/// In 1D both endpoints are [`BoundaryTag::Corner`]: they are immobile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    /// On the facet `x_axis = lo` (`upper == false`) or `x_axis = hi`.
    Facet { axis: usize, upper: bool },
    Corner,
}

/// Connectivity shared by every time level of a moving mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology<const D: usize> {
    elements: Vec<usize>,
    patches: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    tags: Vec<BoundaryTag>,
}

impl<const D: usize> Topology<D> {
    fn build(n_vertices: usize, elements: Vec<usize>, tags: Vec<BoundaryTag>) -> Self {
        let nodes = D + 1;
        let mut patches = vec![Vec::new(); n_vertices];
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
        for (k, el) in elements.chunks_exact(nodes).enumerate() {
            for &a in el {
                patches[a].push(k);
                for &b in el {
                    if a != b {
                        neighbors[a].push(b);
                    }
                }
            }
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
            nb.dedup();
        }
        Topology {
            elements,
            patches,
            neighbors,
            tags,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (D + 1)
    }

    pub fn n_vertices(&self) -> usize {
        self.patches.len()
    }

    pub fn element(&self, k: usize) -> &[usize] {
        &self.elements[k * (D + 1)..(k + 1) * (D + 1)]
    }

    pub fn patch(&self, i: usize) -> &[usize] {
        &self.patches[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn all_neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn tag(&self, i: usize) -> BoundaryTag {
        self.tags[i]
    }
}

/// Conforming simplicial mesh of an axis-aligned box in `D` dimensions.
///
/// Connectivity lives behind an [`Arc`] so meshes at different time levels
/// share it; only vertex coordinates differ.
#[derive(Debug, Clone)]
pub struct SimplicialMesh<T, const D: usize> {
    topology: Arc<Topology<D>>,
    domain: DomainBox<T, D>,
    vertices: Vec<[T; D]>,
}

impl<T: Real, const D: usize> SimplicialMesh<T, D> {
    /// Builds a mesh from raw data; boundary tags are inferred from the box.
    pub fn new(domain: DomainBox<T, D>, vertices: Vec<[T; D]>, elements: Vec<usize>) -> Result<Self> {
        assert!((1..=2).contains(&D), "only 1D and 2D meshes are supported");
        if !elements.len().is_multiple_of(D + 1) || elements.is_empty() {
            return Err(Error::InvalidMesh("element list length is not a multiple of d+1".into()));
        }
        if let Some(&bad) = elements.iter().find(|&&v| v >= vertices.len()) {
            return Err(Error::InvalidMesh(format!("vertex index {bad} out of range")));
        }
        let tol = domain.tolerance();
        let mut tags = Vec::with_capacity(vertices.len());
        for (i, x) in vertices.iter().enumerate() {
            if domain.distance(x) > tol {
                return Err(Error::InvalidMesh(format!("vertex {i} lies outside the domain")));
            }
            let mut facets = Vec::new();
            for k in 0..D {
                if (x[k] - domain.lo[k]).abs() <= tol {
                    facets.push((k, false));
                } else if (x[k] - domain.hi[k]).abs() <= tol {
                    facets.push((k, true));
                }
            }
            tags.push(match (facets.len(), D) {
                (0, _) => BoundaryTag::Interior,
                (_, 1) => BoundaryTag::Corner,
                (1, _) => BoundaryTag::Facet {
                    axis: facets[0].0,
                    upper: facets[0].1,
                },
                _ => BoundaryTag::Corner,
            });
        }
        let mesh = SimplicialMesh {
            topology: Arc::new(Topology::build(vertices.len(), elements, tags)),
            domain,
            vertices,
        };
        mesh.check_orientation()?;
        Ok(mesh)
    }

    /// Same connectivity and domain, new coordinates. Orientation is not
    /// checked; use [`Self::check_orientation`] where it matters.
    pub fn with_vertices(&self, vertices: Vec<[T; D]>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len());
        SimplicialMesh {
            topology: Arc::clone(&self.topology),
            domain: self.domain,
            vertices,
        }
    }

    pub fn dim(&self) -> usize {
        D
    }

    pub fn topology(&self) -> &Arc<Topology<D>> {
        &self.topology
    }

    pub fn shares_topology(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology) || *self.topology == *other.topology
    }

    pub fn domain(&self) -> &DomainBox<T, D> {
        &self.domain
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.topology.n_elements()
    }

    pub fn vertices(&self) -> &[[T; D]] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &[T; D] {
        &self.vertices[i]
    }

    pub fn element(&self, k: usize) -> &[usize] {
        self.topology.element(k)
    }

    pub fn patch(&self, i: usize) -> &[usize] {
        self.topology.patch(i)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.topology.neighbors(i)
    }

    pub fn boundary_tag(&self, i: usize) -> BoundaryTag {
        self.topology.tag(i)
    }

    /// Node coordinates of element `k`; entries past `D + 1` are zero.
    pub fn simplex(&self, k: usize) -> [[T; D]; MAX_NODES] {
        let mut pts = [[T::zero(); D]; MAX_NODES];
        for (a, &v) in self.element(k).iter().enumerate() {
            pts[a] = self.vertices[v];
        }
        pts
    }

    /// `E_K = [x_1 − x_0, …, x_d − x_0]` (edges as columns).
    pub fn edge_matrix(&self, k: usize) -> Matrix<T, D> {
        let el = self.element(k);
        let x0 = self.vertices[el[0]];
        let mut e = small::zeros();
        for c in 0..D {
            let xc = self.vertices[el[c + 1]];
            for r in 0..D {
                e[r][c] = xc[r] - x0[r];
            }
        }
        e
    }

    /// Signed volume `det(E_K)/d!`.
    pub fn signed_volume(&self, k: usize) -> T {
        small::det(&self.edge_matrix(k)) / factorial::<T>(D)
    }

    pub fn volumes(&self) -> Vec<T> {
        (0..self.n_elements()).map(|k| self.signed_volume(k)).collect()
    }

    pub fn min_volume(&self) -> T {
        (0..self.n_elements())
            .map(|k| self.signed_volume(k))
            .fold(T::infinity(), T::min)
    }

    pub fn centroid(&self, k: usize) -> [T; D] {
        let mut c = [T::zero(); D];
        let el = self.element(k);
        for &v in el {
            for r in 0..D {
                c[r] += self.vertices[v][r];
            }
        }
        let inv = T::one() / T::from_usize_lossy(D + 1);
        c.map(|x| x * inv)
    }

    /// Gradients of the barycentric functions `λ_0..λ_d` on element `k`
    /// (rows of `E_K⁻¹`, with `∇λ_0 = −Σ ∇λ_i`).
    pub fn barycentric_gradients(&self, k: usize) -> Result<[[T; D]; MAX_NODES]> {
        let e = self.edge_matrix(k);
        let inv = small::inverse(&e).ok_or(Error::InvertedElement {
            element: k,
            det: 0.0,
        })?;
        let mut g = [[T::zero(); D]; MAX_NODES];
        for i in 0..D {
            g[i + 1] = inv[i];
            for r in 0..D {
                g[0][r] -= inv[i][r];
            }
        }
        Ok(g)
    }

    /// Fails with the first element whose `det(E_K) ≤ 0`.
    pub fn check_orientation(&self) -> Result<()> {
        for k in 0..self.n_elements() {
            let d = small::det(&self.edge_matrix(k));
            if !(d > T::zero()) {
                return Err(Error::InvertedElement {
                    element: k,
                    det: d.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Sum of `(d+1)` incidences over all patches; equals `(d+1)·N`.
    pub fn patch_incidences(&self) -> usize {
        (0..self.n_vertices()).map(|i| self.patch(i).len()).sum()
    }
}

pub(crate) fn factorial<T: Real>(d: usize) -> T {
    T::from_usize_lossy((1..=d).product::<usize>().max(1))
}

/// Uniform mesh of `domain` with `n` cells per side; 2D cells are split
/// along the `/` diagonal. Vertices are numbered row-major, x fastest.
pub fn build_uniform_mesh<T: Real, const D: usize>(
    n: usize,
    domain: DomainBox<T, D>,
) -> Result<SimplicialMesh<T, D>> {
    if n < 2 {
        return Err(Error::InvalidMesh(format!("need at least 2 cells per side, got {n}")));
    }
    let domain = DomainBox::new(domain.lo, domain.hi)?;
    let coord = |axis: usize, i: usize| -> T {
        if i == n {
            domain.hi[axis]
        } else {
            domain.lo[axis] + domain.extent(axis) * T::from_usize_lossy(i) / T::from_usize_lossy(n)
        }
    };
    match D {
        1 => {
            let vertices = (0..=n)
                .map(|i| {
                    let mut x = [T::zero(); D];
                    x[0] = coord(0, i);
                    x
                })
                .collect();
            let elements = (0..n).flat_map(|i| [i, i + 1]).collect();
            SimplicialMesh::new(domain, vertices, elements)
        }
        2 => {
            let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
            for j in 0..=n {
                for i in 0..=n {
                    let mut x = [T::zero(); D];
                    x[0] = coord(0, i);
                    x[1] = coord(1, j);
                    vertices.push(x);
                }
            }
            let id = |i: usize, j: usize| j * (n + 1) + i;
            let mut elements = Vec::with_capacity(6 * n * n);
            for j in 0..n {
                for i in 0..n {
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    elements.extend_from_slice(&[a, b, c, a, c, d]);
                }
            }
            SimplicialMesh::new(domain, vertices, elements)
        }
        _ => Err(Error::InvalidMesh(format!("unsupported dimension {D}"))),
    }
}
