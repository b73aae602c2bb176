//! Plain-text mesh exports.
//!
//! VTK: legacy ASCII `UNSTRUCTURED_GRID` with `POINTS` (z = 0 padded),
//! `CELLS`, `CELL_TYPES` (3 = line, 5 = triangle) and optional
//! `POINT_DATA` scalars.
//!
//! CSV: header `kind,index,c0,c1,c2`; one `v` row per vertex holding its
//! coordinates and one `e` row per element holding its vertex indices.
//! Unused trailing columns are left empty.

use std::io::{self, Write};

use crate::geometry::SimplicialMesh;
use crate::Real;

pub fn write_vtk<T: Real, const D: usize, W: Write>(
    mesh: &SimplicialMesh<T, D>,
    point_data: &[(&str, &[T])],
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "atseg mesh")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for x in mesh.vertices() {
        let mut c = [0.0; 3];
        for r in 0..D {
            c[r] = x[r].as_f64();
        }
        writeln!(w, "{:e} {:e} {:e}", c[0], c[1], c[2])?;
    }
    let n = mesh.n_elements();
    writeln!(w, "CELLS {} {}", n, n * (D + 2))?;
    for k in 0..n {
        write!(w, "{}", D + 1)?;
        for v in mesh.element(k) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {n}")?;
    let cell_type = if D == 1 { 3 } else { 5 };
    for _ in 0..n {
        writeln!(w, "{cell_type}")?;
    }
    if !point_data.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
        for (name, values) in point_data {
            assert_eq!(values.len(), mesh.n_vertices());
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(w, "{:e}", v.as_f64())?;
            }
        }
    }
    Ok(())
}

pub fn write_csv<T: Real, const D: usize, W: Write>(mesh: &SimplicialMesh<T, D>, mut w: W) -> io::Result<()> {
    writeln!(w, "kind,index,c0,c1,c2")?;
    for (i, x) in mesh.vertices().iter().enumerate() {
        write!(w, "v,{i}")?;
        for r in 0..3 {
            if r < D {
                write!(w, ",{:e}", x[r].as_f64())?;
            } else {
                write!(w, ",")?;
            }
        }
        writeln!(w)?;
    }
    for k in 0..mesh.n_elements() {
        write!(w, "e,{k}")?;
        let el = mesh.element(k);
        for r in 0..3 {
            match el.get(r) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
