//! Simplicial meshes, affine element maps and the mesh correspondence.

mod affine;
mod correspondence;
pub mod export;
mod locate;
mod mesh;

pub use affine::{edge_matrices, AffineMapData};
pub use correspondence::apply_correspondence;
pub use locate::{barycentric, locate_point, reconstruct, Location, PointLocator};
pub use mesh::{build_uniform_mesh, BoundaryTag, DomainBox, SimplicialMesh, Topology, MAX_NODES};
