//! Run artifacts: history CSV, nodal/mesh snapshots, PGM rasters (2D) and
//! metric dumps. All numbers are written in shortest round-trip form so two
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::driver::{HistoryRecord, RunConfig};
use crate::error::{Error, Result};
use crate::fem::NodalState;
use crate::geometry::{export, PointLocator, SimplicialMesh};
use crate::imagefield::pgm;
use crate::metric::MetricField;
use crate::Real;

pub const HISTORY_FILE: &str = "history.csv";
pub const HISTORY_HEADER: &str = "t,smoothness,edge,fidelity,energy,phi_min,phi_max,min_volume,dt_min,dt_mean,dt_max";

/// Destination directory plus the open history file.
#[derive(Debug)]
pub struct OutputSink {
    dir: PathBuf,
    /// Raster size `(width, height)` of 2D PGM snapshots.
    raster: [usize; 2],
    history: Option<BufWriter<File>>,
}

impl Clone for OutputSink {
    fn clone(&self) -> Self {
        OutputSink {
            dir: self.dir.clone(),
            raster: self.raster,
            history: None,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn num<T: Real>(v: T) -> String {
    format!("{:e}", v.as_f64())
}

impl OutputSink {
    pub fn new(dir: impl Into<PathBuf>, raster: [usize; 2]) -> Self {
        OutputSink {
            dir: dir.into(),
            raster,
            history: None,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Creates the directory and truncates the history file.
    pub fn begin<T: Real>(&mut self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.dir.join(HISTORY_FILE);
        let mut w = create(&path)?;
        writeln!(w, "{HISTORY_HEADER}").map_err(|e| Error::io(&path, e))?;
        self.history = Some(w);
        Ok(())
    }

    pub fn history_row<T: Real>(&mut self, r: &HistoryRecord<T>) -> Result<()> {
        let path = self.dir.join(HISTORY_FILE);
        let Some(w) = self.history.as_mut() else {
            return Ok(());
        };
        let e = &r.energy;
        let fields = [
            r.t,
            e.smoothness,
            e.edge,
            e.fidelity,
            e.total,
            r.phi_min,
            r.phi_max,
            r.min_volume,
            r.dt_min,
            r.dt_mean,
            r.dt_max,
        ];
        let line: Vec<String> = fields.iter().map(|&v| num(v)).collect();
        writeln!(w, "{}", line.join(",")).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    /// Writes `<tag>_nodal.csv`, `<tag>_mesh.vtk`, `<tag>_mesh.csv` and, in
    /// 2D, `<tag>_u.pgm` (values `u/L`) and `<tag>_phi.pgm`.
    pub fn snapshot<T: Real, const D: usize>(
        &mut self,
        mesh: &SimplicialMesh<T, D>,
        state: &NodalState<T>,
        cfg: &RunConfig<T, D>,
        tag: &str,
    ) -> Result<()> {
        let path = self.dir.join(format!("{tag}_nodal.csv"));
        let mut w = create(&path)?;
        let write_nodal = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            let axes: Vec<String> = (0..D).map(|r| format!("x{r}")).collect();
            writeln!(w, "index,{},u,phi", axes.join(","))?;
            for (i, x) in mesh.vertices().iter().enumerate() {
                let xs: Vec<String> = x.iter().map(|&v| num(v)).collect();
                writeln!(w, "{i},{},{},{}", xs.join(","), num(state.u[i]), num(state.phi[i]))?;
            }
            w.flush()
        };
        write_nodal(&mut w).map_err(|e| Error::io(&path, e))?;

        let path = self.dir.join(format!("{tag}_mesh.vtk"));
        let mut w = create(&path)?;
        export::write_vtk(mesh, &[("u", &state.u), ("phi", &state.phi)], &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        let path = self.dir.join(format!("{tag}_mesh.csv"));
        let mut w = create(&path)?;
        export::write_csv(mesh, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;

        if D == 2 {
            let [width, height] = self.raster;
            let l = cfg.params.scale;
            let u_scaled: Vec<T> = state.u.iter().map(|&v| v / l).collect();
            for (name, vals) in [("u", &u_scaled), ("phi", &state.phi)] {
                let img = sample_top_down(mesh, vals, width, height)?;
                let path = self.dir.join(format!("{tag}_{name}.pgm"));
                let mut w = create(&path)?;
                pgm::write(&mut w, width, height, &img)
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }

    pub fn metric<T: Real, const D: usize>(&mut self, metric: &MetricField<T, D>, tag: &str) -> Result<()> {
        let path = self.dir.join(format!("{tag}_metric.csv"));
        let mut w = create(&path)?;
        metric.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }
}

/// Piecewise-linear `values` at the pixel centres of a `width × height`
/// raster over the mesh domain, first row at the top.
pub fn sample_top_down<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    values: &[T],
    width: usize,
    height: usize,
) -> Result<Vec<f64>> {
    assert_eq!(D, 2, "raster sampling is two-dimensional");
    let locator = PointLocator::new(mesh);
    let dom = mesh.domain();
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let mut x = [T::zero(); D];
            x[0] = dom.lo[0] + dom.extent(0) * T::lit((col as f64 + 0.5) / width as f64);
            x[1] = dom.hi[1] - dom.extent(1) * T::lit((row as f64 + 0.5) / height as f64);
            let loc = locator.locate(mesh, &x)?;
            let v: T = mesh
                .element(loc.element)
                .iter()
                .zip(loc.bary())
                .map(|(&i, &b)| b * values[i])
                .sum();
            out.push(v.as_f64());
        }
    }
    Ok(out)
}
