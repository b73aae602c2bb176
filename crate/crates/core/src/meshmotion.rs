//! ξ-formulation moving-mesh equation: the computational vertices follow
//! `dξ_i/dt = (P_i/τ) Σ_{K∈ω_i} |K| v^K_{i_K}` with the physical mesh and the
//! metric frozen over the step.

use crate::error::{Error, Result};
use crate::geometry::{edge_matrices, AffineMapData, BoundaryTag, SimplicialMesh, MAX_NODES};
use crate::linalg::small::{self, Matrix};
use crate::linalg::Sparsity;
use crate::metric::MetricField;
use crate::timeint::{integrate_ndf, IntegrationStats, NdfConfig, OdeSystem};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshMotionParams<T> {
    /// Balance between alignment and equidistribution, in `(0, 1/2]`.
    pub theta: T,
    /// Exponent `p > 1`.
    pub p: T,
    /// Pseudo-time scale `τ > 0`.
    pub tau: T,
    pub integrator: NdfConfig<T>,
}

impl<T: Real> Default for MeshMotionParams<T> {
    fn default() -> Self {
        MeshMotionParams {
            theta: T::lit(1.0 / 3.0),
            p: T::lit(1.5),
            tau: T::lit(0.01),
            integrator: NdfConfig::default(),
        }
    }
}

impl<T: Real> MeshMotionParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > T::zero() && self.theta <= T::lit(0.5)) {
            return Err(Error::InvalidParameter(format!("theta = {} not in (0, 0.5]", self.theta)));
        }
        if !(self.p > T::one()) {
            return Err(Error::InvalidParameter(format!("p = {} must exceed 1", self.p)));
        }
        if !(self.tau > T::zero()) {
            return Err(Error::InvalidParameter(format!("tau = {} must be positive", self.tau)));
        }
        Ok(())
    }
}

/// `G` and its partial derivatives; `dg_dj` is laid out so that
/// `dG = tr(dg_dj · d𝕁) + dg_ddet · d(det 𝕁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GDerivs<T, const D: usize> {
    pub g: T,
    pub dg_dj: Matrix<T, D>,
    pub dg_ddet: T,
}

/// Per-element metric data reused across evaluations.
#[derive(Debug, Clone, Copy)]
struct MetricData<T, const D: usize> {
    inv: Matrix<T, D>,
    det: T,
}

impl<T: Real, const D: usize> MetricData<T, D> {
    fn new(m: &Matrix<T, D>) -> Result<Self> {
        let det = small::det(m);
        let inv = small::inverse(m).filter(|_| det > T::zero()).ok_or_else(|| {
            Error::InvalidParameter(format!("metric {m:?} is not positive definite"))
        })?;
        Ok(MetricData { inv, det })
    }
}

fn g_with<T: Real, const D: usize>(j: &Matrix<T, D>, det_j: T, md: &MetricData<T, D>, params: &MeshMotionParams<T>) -> Result<GDerivs<T, D>> {
    if !(det_j > T::zero()) {
        return Err(Error::SingularMap { det: det_j.as_f64() });
    }
    let d = T::from_usize_lossy(D);
    let (theta, p) = (params.theta, params.p);
    let two = T::lit(2.0);
    let dp2 = d * p / two;
    let sq = md.det.sqrt();
    let minv_jt = small::mul(&md.inv, &small::transpose(j));
    let tr = small::trace(&small::mul(j, &minv_jt));
    let dpow = d.powf(dp2);
    let g = theta * sq * tr.powf(dp2) + (T::one() - two * theta) * dpow * sq * (det_j / sq).powf(p);
    let dg_dj = small::scaled(&minv_jt, d * p * theta * sq * tr.powf(dp2 - T::one()));
    let dg_ddet = p * (T::one() - two * theta) * dpow * md.det.powf((T::one() - p) / two) * det_j.powf(p - T::one());
    Ok(GDerivs { g, dg_dj, dg_ddet })
}

/// `G(𝕁, det 𝕁, M)` of the meshing energy with both partial derivatives.
pub fn g_function_and_derivs<T: Real, const D: usize>(
    j: &Matrix<T, D>,
    det_j: T,
    m: &Matrix<T, D>,
    params: &MeshMotionParams<T>,
) -> Result<GDerivs<T, D>> {
    g_with(j, det_j, &MetricData::new(m)?, params)
}

fn velocities_with<T: Real, const D: usize>(
    a: &AffineMapData<T, D>,
    md: &MetricData<T, D>,
    params: &MeshMotionParams<T>,
) -> Result<[[T; D]; MAX_NODES]> {
    let det_j = a.det_jacobian();
    let gd = g_with(&a.jacobian, det_j, md, params)?;
    let edge_ref_inv = small::inverse(&a.edge_ref).ok_or(Error::SingularMap {
        det: a.det_edge_ref.as_f64(),
    })?;
    let first = small::mul(&a.edge_inv, &gd.dg_dj);
    let c = gd.dg_ddet * det_j;
    let mut v = [[T::zero(); D]; MAX_NODES];
    for i in 0..D {
        for r in 0..D {
            let val = -(first[i][r] + c * edge_ref_inv[i][r]);
            v[i + 1][r] = val;
            v[0][r] -= val;
        }
    }
    Ok(v)
}

/// Local velocities `v_0..v_d` of one element: rows of
/// `−E⁻¹ ∂G/∂𝕁 − ∂G/∂det𝕁 · (det Ê / det E) · Ê⁻¹` for `v_1..v_d`, and
/// `v_0 = −Σ v_i`.
pub fn local_velocities<T: Real, const D: usize>(
    a: &AffineMapData<T, D>,
    m: &Matrix<T, D>,
    params: &MeshMotionParams<T>,
) -> Result<[[T; D]; MAX_NODES]> {
    velocities_with(a, &MetricData::new(m)?, params)
}

/// `I_h = Σ_K |K| G(𝕁_K, det 𝕁_K, M_K)`.
pub fn meshing_energy<T: Real, const D: usize>(
    phys: &SimplicialMesh<T, D>,
    comp: &SimplicialMesh<T, D>,
    metric: &MetricField<T, D>,
    params: &MeshMotionParams<T>,
) -> Result<T> {
    let mut total = T::zero();
    for k in 0..phys.n_elements() {
        let a = edge_matrices(phys, comp, k).map_err(tangled)?;
        let gd = g_function_and_derivs(&a.jacobian, a.det_jacobian(), &metric.elements[k], params)?;
        total += a.volume * gd.g;
    }
    Ok(total)
}

fn tangled(e: Error) -> Error {
    match e {
        Error::InvertedElement { element, det } => Error::MeshTangled { element, det },
        other => other,
    }
}

/// `Σ_{K∈ω_i} |K| v^K_{i_K}` for every vertex (the negative ξ-gradient of
/// `I_h`), before boundary treatment and the `P_i/τ` factor.
pub fn assembled_velocities<T: Real, const D: usize>(
    phys: &SimplicialMesh<T, D>,
    comp: &SimplicialMesh<T, D>,
    metric: &MetricField<T, D>,
    params: &MeshMotionParams<T>,
) -> Result<Vec<[T; D]>> {
    let mut out = vec![[T::zero(); D]; phys.n_vertices()];
    for k in 0..phys.n_elements() {
        let a = edge_matrices(phys, comp, k).map_err(tangled)?;
        let v = local_velocities(&a, &metric.elements[k], params)?;
        for (node, &vi) in phys.element(k).iter().enumerate() {
            for r in 0..D {
                out[vi][r] += a.volume * v[node][r];
            }
        }
    }
    Ok(out)
}

/// Standard deviation over mean of `|K|·sqrt(det M_K)`.
pub fn equidistribution_spread<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, metric: &[Matrix<T, D>]) -> T {
    let vals: Vec<T> = (0..mesh.n_elements())
        .map(|k| mesh.signed_volume(k) * small::det(&metric[k]).sqrt())
        .collect();
    let n = T::from_usize_lossy(vals.len());
    let mean = vals.iter().copied().sum::<T>() / n;
    let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    var.sqrt() / mean
}

/// The mesh equation as an ODE in the flattened computational coordinates.
pub struct MeshOde<'a, T: Real, const D: usize> {
    phys: &'a SimplicialMesh<T, D>,
    edge_inv: Vec<Matrix<T, D>>,
    det_edge: Vec<T>,
    volume: Vec<T>,
    metric: Vec<MetricData<T, D>>,
    /// `P_i / τ`.
    weight: Vec<T>,
    params: MeshMotionParams<T>,
}

impl<'a, T: Real, const D: usize> MeshOde<'a, T, D> {
    pub fn new(phys: &'a SimplicialMesh<T, D>, metric: &MetricField<T, D>, params: &MeshMotionParams<T>) -> Result<Self> {
        if metric.len() != phys.n_elements() {
            return Err(Error::DimensionMismatch {
                expected: phys.n_elements(),
                found: metric.len(),
            });
        }
        let nel = phys.n_elements();
        let mut edge_inv = Vec::with_capacity(nel);
        let mut det_edge = Vec::with_capacity(nel);
        let mut volume = Vec::with_capacity(nel);
        for k in 0..nel {
            let a = edge_matrices(phys, phys, k).map_err(tangled)?;
            edge_inv.push(a.edge_inv);
            det_edge.push(a.det_edge);
            volume.push(a.volume);
        }
        let md = metric.elements.iter().map(MetricData::new).collect::<Result<Vec<_>>>()?;
        let vertex = metric.vertex_average(phys);
        let expo = (params.p - T::one()) / T::lit(2.0);
        let weight = vertex.iter().map(|m| small::det(m).powf(expo) / params.tau).collect();
        Ok(MeshOde {
            phys,
            edge_inv,
            det_edge,
            volume,
            metric: md,
            weight,
            params: *params,
        })
    }

    fn velocity_field(&self, xi: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        let nodes = D + 1;
        for k in 0..self.phys.n_elements() {
            let el = self.phys.element(k);
            let mut edge_ref = small::zeros::<T, D>();
            for c in 0..D {
                for r in 0..D {
                    edge_ref[r][c] = xi[el[c + 1] * D + r] - xi[el[0] * D + r];
                }
            }
            let det_edge_ref = small::det(&edge_ref);
            if !(det_edge_ref > T::zero()) {
                out.iter_mut().for_each(|v| *v = T::nan());
                return;
            }
            let a = AffineMapData {
                edge: small::zeros(),
                edge_ref,
                edge_inv: self.edge_inv[k],
                jacobian: small::mul(&edge_ref, &self.edge_inv[k]),
                det_edge: self.det_edge[k],
                det_edge_ref,
                volume: self.volume[k],
            };
            match velocities_with(&a, &self.metric[k], &self.params) {
                Ok(v) => {
                    for node in 0..nodes {
                        let vi = el[node];
                        for r in 0..D {
                            out[vi * D + r] += a.volume * v[node][r];
                        }
                    }
                }
                Err(_) => {
                    out.iter_mut().for_each(|v| *v = T::nan());
                    return;
                }
            }
        }
        for i in 0..self.phys.n_vertices() {
            match self.phys.boundary_tag(i) {
                BoundaryTag::Corner => {
                    for r in 0..D {
                        out[i * D + r] = T::zero();
                    }
                }
                BoundaryTag::Facet { axis, .. } => out[i * D + axis] = T::zero(),
                BoundaryTag::Interior => {}
            }
            for r in 0..D {
                out[i * D + r] *= self.weight[i];
            }
        }
    }
}

impl<T: Real, const D: usize> OdeSystem<T> for MeshOde<'_, T, D> {
    fn dim(&self) -> usize {
        self.phys.n_vertices() * D
    }

    fn rhs(&self, _t: T, y: &[T], out: &mut [T]) {
        self.velocity_field(y, out);
    }

    fn sparsity(&self) -> Sparsity {
        Sparsity::from_vertex_graph(self.phys.topology().all_neighbors(), D)
    }
}

/// Outcome of one mesh step.
#[derive(Debug, Clone)]
pub struct MeshStep<T: Real, const D: usize> {
    /// `T_c^{n+1}`; equals the reference mesh when the integrator failed.
    pub comp: SimplicialMesh<T, D>,
    pub stats: IntegrationStats<T>,
    pub failed: bool,
}

/// Integrates the mesh equation from `ref_comp` over a pseudo-time `dt`
/// with `phys` and `metric` frozen. Integrator failures yield the
/// reference mesh unchanged (logged as a warning).
pub fn step_computational_mesh<T: Real, const D: usize>(
    phys: &SimplicialMesh<T, D>,
    metric: &MetricField<T, D>,
    ref_comp: &SimplicialMesh<T, D>,
    params: &MeshMotionParams<T>,
    dt: T,
) -> Result<MeshStep<T, D>> {
    step_computational_mesh_with(phys, metric, ref_comp, params, dt, |_, _| {})
}

/// As [`step_computational_mesh`], calling `observer(t, ξ)` after every
/// accepted integrator step.
pub fn step_computational_mesh_with<T: Real, const D: usize>(
    phys: &SimplicialMesh<T, D>,
    metric: &MetricField<T, D>,
    ref_comp: &SimplicialMesh<T, D>,
    params: &MeshMotionParams<T>,
    dt: T,
    mut observer: impl FnMut(T, &[T]),
) -> Result<MeshStep<T, D>> {
    params.validate()?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("mesh step {dt} must be positive")));
    }
    if !phys.shares_topology(ref_comp) {
        return Err(Error::InvalidMesh("physical and computational meshes differ in connectivity".into()));
    }
    let ode = MeshOde::new(phys, metric, params)?;
    let xi0: Vec<T> = ref_comp.vertices().iter().flat_map(|x| x.iter().copied()).collect();
    let result = integrate_ndf(&ode, T::zero(), dt, &xi0, &params.integrator, |s| observer(s.t, s.y));
    match result {
        Ok(r) => {
            let verts: Vec<[T; D]> = r.y.chunks_exact(D).map(|c| std::array::from_fn(|i| c[i])).collect();
            let comp = ref_comp.with_vertices(verts);
            if let Err(e) = comp.check_orientation() {
                log::warn!("mesh equation produced an inverted computational mesh ({e}); keeping the reference mesh");
                return Ok(MeshStep {
                    comp: ref_comp.clone(),
                    stats: r.stats,
                    failed: true,
                });
            }
            Ok(MeshStep {
                comp,
                stats: r.stats,
                failed: false,
            })
        }
        Err(e) => {
            log::warn!("mesh equation integrator failed ({e}); keeping the reference mesh");
            Ok(MeshStep {
                comp: ref_comp.clone(),
                stats: IntegrationStats::default(),
                failed: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uniform_mesh, DomainBox};

    fn params() -> MeshMotionParams<f64> {
        MeshMotionParams::default()
    }

    #[test]
    fn g_one_dimensional_identity() {
        let gd = g_function_and_derivs(&[[1.0]], 1.0, &[[1.0]], &params()).unwrap();
        assert!((gd.g - 2.0 / 3.0).abs() < 1e-15);
        assert!((gd.dg_ddet - 0.5).abs() < 1e-15);
    }

    #[test]
    fn energy_of_identity_map() {
        let dom = DomainBox::<f64, 1>::unit();
        let m = build_uniform_mesh(2, dom).unwrap();
        let metric = MetricField::constant(2, [[1.0]]);
        let e = meshing_energy(&m, &m, &metric, &params()).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_mesh_is_stationary() {
        let m = build_uniform_mesh::<f64, 1>(10, DomainBox::unit()).unwrap();
        let metric = MetricField::constant(10, [[1.0]]);
        let v = assembled_velocities(&m, &m, &metric, &params()).unwrap();
        assert!(v.iter().skip(1).take(9).all(|x| x[0].abs() < 1e-12));
        let m2 = build_uniform_mesh::<f64, 2>(6, DomainBox::unit()).unwrap();
        let metric2 = MetricField::constant(m2.n_elements(), small::identity());
        let step = step_computational_mesh(&m2, &metric2, &m2, &params(), 0.05).unwrap();
        assert!(!step.failed);
        for (a, b) in step.comp.vertices().iter().zip(m2.vertices()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbed_vertex_is_pushed_back() {
        let m = build_uniform_mesh::<f64, 1>(4, DomainBox::unit()).unwrap();
        let metric = MetricField::constant(4, [[1.0]]);
        let mut xi: Vec<[f64; 1]> = m.vertices().to_vec();
        xi[2][0] += 0.05;
        let comp = m.with_vertices(xi);
        let v = assembled_velocities(&m, &comp, &metric, &params()).unwrap();
        assert!(v[2][0] < 0.0);
    }

    #[test]
    fn velocities_are_negative_energy_gradient() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let phys = build_uniform_mesh::<f64, 2>(4, DomainBox::unit()).unwrap();
        let jitter = |m: &SimplicialMesh<f64, 2>, rng: &mut rand_chacha::ChaCha8Rng| {
            let v: Vec<[f64; 2]> = m
                .vertices()
                .iter()
                .enumerate()
                .map(|(i, x)| match m.boundary_tag(i) {
                    BoundaryTag::Interior => [x[0] + rng.gen_range(-0.05..0.05), x[1] + rng.gen_range(-0.05..0.05)],
                    _ => *x,
                })
                .collect();
            m.with_vertices(v)
        };
        let phys = jitter(&phys, &mut rng);
        let comp = jitter(&phys, &mut rng);
        let metric = MetricField {
            elements: (0..phys.n_elements())
                .map(|_| {
                    let a: f64 = rng.gen_range(0.5..3.0);
                    let b: f64 = rng.gen_range(0.5..3.0);
                    let c: f64 = rng.gen_range(-0.4..0.4);
                    [[a, c], [c, b]]
                })
                .collect(),
            floor: 1e-6,
        };
        let prm = params();
        let v = assembled_velocities(&phys, &comp, &metric, &prm).unwrap();
        let h = 1e-6;
        for i in 0..comp.n_vertices() {
            for r in 0..2 {
                let shifted = |d: f64| {
                    let mut xs = comp.vertices().to_vec();
                    xs[i][r] += d;
                    meshing_energy(&phys, &comp.with_vertices(xs), &metric, &prm).unwrap()
                };
                let grad = (shifted(h) - shifted(-h)) / (2.0 * h);
                assert!((v[i][r] + grad).abs() < 1e-6 * (1.0 + grad.abs()), "vertex {i} axis {r}: {} vs {}", v[i][r], -grad);
            }
        }
    }

    #[test]
    fn metric_scaling_leaves_velocity_field_invariant() {
        let phys = build_uniform_mesh::<f64, 1>(8, DomainBox::unit()).unwrap();
        let metric = MetricField {
            elements: (0..8).map(|k| [[1.0 + k as f64]]).collect(),
            floor: 1e-6,
        };
        let xi: Vec<f64> = phys.vertices().iter().map(|x| x[0]).collect();
        let a = MeshOde::new(&phys, &metric, &params()).unwrap();
        let b = MeshOde::new(&phys, &metric.scaled(37.0), &params()).unwrap();
        let (mut fa, mut fb) = (vec![0.0; 9], vec![0.0; 9]);
        a.rhs(0.0, &xi, &mut fa);
        b.rhs(0.0, &xi, &mut fb);
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }
}
