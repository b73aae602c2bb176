//! Linear finite elements for the AT gradient flow on a moving mesh.
//!
//! Unknowns are interleaved per vertex as `(u_i, φ_i)`. The semi-discrete
//! system is `M(X) [U̇; Φ̇] = [F; G]` where the mesh moves linearly in time
//! between two macro steps, so `Ẋ` is the constant chord velocity.

use crate::error::{Error, Result};
use crate::geometry::{SimplicialMesh, MAX_NODES};
use crate::imagefield::ImageField;
use crate::linalg::{BandedMatrix, CsrMatrix, Sparsity};
use crate::timeint::OdeSystem;
use crate::Real;

/// Allowed excursion of `Φ` outside `[0, 1]` before a run is aborted.
pub const PHI_MARGIN: f64 = 0.05;

/// Quadrature for the two reaction terms `(u − Lg)ψ_j` and `(1 − φ)ψ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReactionQuadrature {
    /// Degree-4 rule for the fidelity term (g sampled at quadrature points)
    /// and exact integration of `(1 − φ_h)ψ_j`.
    #[default]
    Exact,
    /// Vertex quadrature, matching the nodal interpolant in the energy; the
    /// resulting right-hand side is the exact negative energy gradient.
    Nodal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub k_eps: T,
    pub eps: T,
    /// Grey-level scaling `L ≥ 1`; the fidelity term compares with `L·g`.
    pub scale: T,
    pub grad_cr: T,
    pub final_time: T,
    /// Snapshot cadence in macro steps (0 disables snapshots).
    pub output_every: usize,
    pub reaction: ReactionQuadrature,
}

impl<T: Real> SegParams<T> {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("k_eps", self.k_eps),
            ("eps", self.eps),
            ("grad_cr", self.grad_cr),
            ("final_time", self.final_time),
        ];
        for (name, v) in named {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")));
            }
        }
        if !(self.scale >= T::one() && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale L = {} must be at least 1", self.scale)));
        }
        if self.k_eps >= self.eps {
            log::warn!("k_eps = {} is not small against eps = {}", self.k_eps, self.eps);
        }
        Ok(())
    }
}

/// Nodal values of `u_h` and `φ_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalState<T> {
    pub u: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Real> NodalState<T> {
    pub fn new(u: Vec<T>, phi: Vec<T>) -> Result<Self> {
        if u.len() != phi.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                found: phi.len(),
            });
        }
        Ok(NodalState { u, phi })
    }

    pub fn n_vertices(&self) -> usize {
        self.u.len()
    }

    /// `[u_0, φ_0, u_1, φ_1, …]`.
    pub fn interleaved(&self) -> Vec<T> {
        self.u.iter().zip(&self.phi).flat_map(|(&u, &p)| [u, p]).collect()
    }

    pub fn from_interleaved(y: &[T]) -> Self {
        NodalState {
            u: y.iter().step_by(2).copied().collect(),
            phi: y.iter().skip(1).step_by(2).copied().collect(),
        }
    }

    pub fn phi_range(&self) -> (T, T) {
        self.phi
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.phi).all(|v| v.is_finite())
    }

    /// Fails when any entry is non-finite or `Φ` leaves `[−δ, 1 + δ]`.
    pub fn check(&self, t: T) -> Result<()> {
        let (lo, hi) = self.phi_range();
        let m = T::lit(PHI_MARGIN);
        if !self.is_finite() || lo < -m || hi > T::one() + m {
            return Err(Error::PhiOutOfRange {
                t: t.as_f64(),
                min: lo.as_f64(),
                max: hi.as_f64(),
                lo: -PHI_MARGIN,
                hi: 1.0 + PHI_MARGIN,
            });
        }
        Ok(())
    }
}

/// Barycentric points and weights (summing to 1) of a rule exact for
/// polynomials of degree 4 on a `d`-simplex.
pub fn degree4_rule<T: Real>(d: usize) -> Vec<([T; MAX_NODES], T)> {
    match d {
        1 => {
            let s = T::lit(0.5 * (3.0f64 / 5.0).sqrt());
            let h = T::lit(0.5);
            vec![
                ([h - s, h + s, T::zero()], T::lit(5.0 / 18.0)),
                ([h, h, T::zero()], T::lit(8.0 / 18.0)),
                ([h + s, h - s, T::zero()], T::lit(5.0 / 18.0)),
            ]
        }
        2 => {
            let mut out = Vec::with_capacity(6);
            for (a, w) in [(0.445948490915965, 0.223381589678011), (0.091576213509771, 0.109951743655322)] {
                let (a, b, w) = (T::lit(a), T::lit(1.0 - 2.0 * a), T::lit(w));
                out.push(([a, a, b], w));
                out.push(([a, b, a], w));
                out.push(([b, a, a], w));
            }
            out
        }
        _ => panic!("degree-4 rule only provided for d = 1, 2"),
    }
}

/// Geometry of one element: volume and barycentric gradients.
struct Element<T, const D: usize> {
    nodes: [usize; MAX_NODES],
    volume: T,
    grads: [[T; D]; MAX_NODES],
}

fn element<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>, k: usize) -> Result<Element<T, D>> {
    let volume = mesh.signed_volume(k);
    if !(volume > T::zero()) {
        return Err(Error::InvertedElement {
            element: k,
            det: volume.as_f64(),
        });
    }
    let mut nodes = [0; MAX_NODES];
    nodes[..=D].copy_from_slice(mesh.element(k));
    Ok(Element {
        nodes,
        volume,
        grads: mesh.barycentric_gradients(k)?,
    })
}

fn dot<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn gradient<T: Real, const D: usize>(el: &Element<T, D>, vals: &[T]) -> [T; D] {
    let mut g = [T::zero(); D];
    for a in 0..=D {
        let v = vals[el.nodes[a]];
        for r in 0..D {
            g[r] += v * el.grads[a][r];
        }
    }
    g
}

/// `∫_K λ_a λ_b = |K|(1 + δ_ab)/((d+1)(d+2))`.
fn local_mass<T: Real>(d: usize, volume: T, a: usize, b: usize) -> T {
    let denom = T::from_usize_lossy((d + 1) * (d + 2));
    let num = if a == b { T::lit(2.0) } else { T::one() };
    volume * num / denom
}

/// Consistent mass matrix of the scalar linear space.
pub fn mass_matrix<T: Real, const D: usize>(mesh: &SimplicialMesh<T, D>) -> Result<CsrMatrix<T>> {
    let mut m = CsrMatrix::with_pattern(mesh.topology().all_neighbors());
    for k in 0..mesh.n_elements() {
        let el = element(mesh, k)?;
        for a in 0..=D {
            for b in 0..=D {
                m.add(el.nodes[a], el.nodes[b], local_mass(D, el.volume, a, b));
            }
        }
    }
    Ok(m)
}

/// Which residual blocks to assemble.
struct Outputs<'o, T> {
    f: Option<&'o mut [T]>,
    g: Option<&'o mut [T]>,
}

#[allow(clippy::too_many_arguments)]
fn assemble<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    xdot: &[[T; D]],
    u: &[T],
    phi: &[T],
    image: Option<&ImageField<T, D>>,
    params: &SegParams<T>,
    rule: &[([T; MAX_NODES], T)],
    mut out: Outputs<'_, T>,
) -> Result<()> {
    let n = mesh.n_vertices();
    if u.len() != n || phi.len() != n || xdot.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u.len().min(phi.len()).min(xdot.len()),
        });
    }
    for v in out.f.iter_mut().chain(out.g.iter_mut()) {
        v.iter_mut().for_each(|x| *x = T::zero());
    }
    let d = T::from_usize_lossy(D);
    let two = T::lit(2.0);
    let nodal_weight = T::one() / (d + T::one());
    let phi_sq_factor = T::one() / T::from_usize_lossy((D + 1) * (D + 2));
    let half_over_eps = params.beta / (two * params.eps);
    for k in 0..mesh.n_elements() {
        let el = element(mesh, k)?;
        let vol = el.volume;
        let grad_u = gradient(&el, u);
        let grad_phi = gradient(&el, phi);
        let nodes = &el.nodes[..=D];
        if let Some(f) = out.f.as_deref_mut() {
            let image = image.expect("rhs_u requires the image");
            let (mut s1, mut s2) = (T::zero(), T::zero());
            for &i in nodes {
                s1 += phi[i];
                s2 += phi[i] * phi[i];
            }
            let coef = params.alpha * vol * (params.k_eps + phi_sq_factor * (s1 * s1 + s2));
            let mut fidelity = [T::zero(); MAX_NODES];
            match params.reaction {
                ReactionQuadrature::Exact => {
                    for (lam, w) in rule {
                        let mut x = [T::zero(); D];
                        let mut uq = T::zero();
                        for (a, &i) in nodes.iter().enumerate() {
                            uq += lam[a] * u[i];
                            let xi = mesh.vertex(i);
                            for r in 0..D {
                                x[r] += lam[a] * xi[r];
                            }
                        }
                        let r = *w * vol * (uq - params.scale * image.eval(&x));
                        for a in 0..=D {
                            fidelity[a] += r * lam[a];
                        }
                    }
                }
                ReactionQuadrature::Nodal => {
                    for (a, &i) in nodes.iter().enumerate() {
                        fidelity[a] = nodal_weight * vol * (u[i] - params.scale * image.eval(mesh.vertex(i)));
                    }
                }
            }
            for (a, &i) in nodes.iter().enumerate() {
                let mut conv = T::zero();
                for (b, &j) in nodes.iter().enumerate() {
                    conv += dot(&grad_u, &xdot[j]) * local_mass(D, vol, a, b);
                }
                f[i] += -coef * dot(&grad_u, &el.grads[a]) - params.gamma * fidelity[a] + conv;
            }
        }
        if let Some(g) = out.g.as_deref_mut() {
            let grad_u_sq = dot(&grad_u, &grad_u);
            for (a, &i) in nodes.iter().enumerate() {
                let mut decay = T::zero();
                let mut conv = T::zero();
                let mut restore = T::zero();
                for (b, &j) in nodes.iter().enumerate() {
                    let m = local_mass(D, vol, a, b);
                    decay += phi[j] * m;
                    conv += dot(&grad_phi, &xdot[j]) * m;
                    restore += (T::one() - phi[j]) * m;
                }
                if params.reaction == ReactionQuadrature::Nodal {
                    restore = (T::one() - phi[i]) * nodal_weight * vol;
                }
                g[i] += -two * params.beta * params.eps * vol * dot(&grad_phi, &el.grads[a])
                    - params.alpha * grad_u_sq * decay
                    + half_over_eps * restore
                    + conv;
            }
        }
    }
    Ok(())
}

/// `F_j = −α∫(k_ε+φ_h²)∇u_h·∇ψ_j − γ∫(u_h − L·g)ψ_j + ∫(∇u_h·Ẋ)ψ_j`.
pub fn rhs_u<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    mesh_velocity: &[[T; D]],
    u: &[T],
    phi: &[T],
    image: &ImageField<T, D>,
    params: &SegParams<T>,
) -> Result<Vec<T>> {
    let mut f = vec![T::zero(); mesh.n_vertices()];
    let rule = degree4_rule(D);
    let out = Outputs {
        f: Some(&mut f),
        g: None,
    };
    assemble(mesh, mesh_velocity, u, phi, Some(image), params, &rule, out)?;
    Ok(f)
}

/// `G_j = −2βε∫∇φ_h·∇ψ_j − α∫|∇u_h|²φ_hψ_j + (β/2ε)∫(1−φ_h)ψ_j + ∫(∇φ_h·Ẋ)ψ_j`.
pub fn rhs_phi<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    mesh_velocity: &[[T; D]],
    u: &[T],
    phi: &[T],
    params: &SegParams<T>,
) -> Result<Vec<T>> {
    let mut g = vec![T::zero(); mesh.n_vertices()];
    let out = Outputs {
        f: None,
        g: Some(&mut g),
    };
    assemble(mesh, mesh_velocity, u, phi, None, params, &[], out)?;
    Ok(g)
}

/// Terms of the discrete AT energy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtEnergy<T> {
    /// `(α/2)∫(φ_h² + k_ε)|∇u_h|²`.
    pub smoothness: T,
    /// `β∫(ε|∇φ_h|² + π_h((1−φ_h)²)/(4ε))`.
    pub edge: T,
    /// `(γ/2)∫π_h((u_h − L·g)²)`.
    pub fidelity: T,
    pub total: T,
}

pub fn at_energy<T: Real, const D: usize>(
    mesh: &SimplicialMesh<T, D>,
    u: &[T],
    phi: &[T],
    image: &ImageField<T, D>,
    params: &SegParams<T>,
) -> Result<AtEnergy<T>> {
    let n = mesh.n_vertices();
    if u.len() != n || phi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u.len().min(phi.len()),
        });
    }
    let half = T::lit(0.5);
    let phi_sq_factor = T::one() / T::from_usize_lossy((D + 1) * (D + 2));
    let mut smooth = T::zero();
    let mut grad_phi_sq = T::zero();
    let mut lumped = vec![T::zero(); n];
    let nodal_weight = T::one() / T::from_usize_lossy(D + 1);
    for k in 0..mesh.n_elements() {
        let el = element(mesh, k)?;
        let nodes = &el.nodes[..=D];
        let gu = gradient(&el, u);
        let gp = gradient(&el, phi);
        let (mut s1, mut s2) = (T::zero(), T::zero());
        for &i in nodes {
            s1 += phi[i];
            s2 += phi[i] * phi[i];
            lumped[i] += nodal_weight * el.volume;
        }
        smooth += el.volume * (params.k_eps + phi_sq_factor * (s1 * s1 + s2)) * dot(&gu, &gu);
        grad_phi_sq += el.volume * dot(&gp, &gp);
    }
    let mut well = T::zero();
    let mut fid = T::zero();
    for i in 0..n {
        let w = T::one() - phi[i];
        well += lumped[i] * w * w;
        let r = u[i] - params.scale * image.eval(mesh.vertex(i));
        fid += lumped[i] * r * r;
    }
    let smoothness = half * params.alpha * smooth;
    let edge = params.beta * (params.eps * grad_phi_sq + well / (T::lit(4.0) * params.eps));
    let fidelity = half * params.gamma * fid;
    Ok(AtEnergy {
        smoothness,
        edge,
        fidelity,
        total: smoothness + edge + fidelity,
    })
}

/// Semi-discrete physics over one macro interval `[t_n, t_{n+1}]` with the
/// mesh interpolated linearly between `mesh_n` and `mesh_np1`.
pub struct PhysicsOde<'a, T: Real, const D: usize> {
    mesh_n: &'a SimplicialMesh<T, D>,
    mesh_np1: &'a SimplicialMesh<T, D>,
    t_n: T,
    dt: T,
    xdot: Vec<[T; D]>,
    image: &'a ImageField<T, D>,
    params: SegParams<T>,
    rule: Vec<([T; MAX_NODES], T)>,
    frozen: bool,
}

impl<'a, T: Real, const D: usize> PhysicsOde<'a, T, D> {
    pub fn new(
        mesh_n: &'a SimplicialMesh<T, D>,
        mesh_np1: &'a SimplicialMesh<T, D>,
        t_n: T,
        t_np1: T,
        image: &'a ImageField<T, D>,
        params: &SegParams<T>,
    ) -> Result<Self> {
        if !mesh_n.shares_topology(mesh_np1) {
            return Err(Error::InvalidMesh("meshes at t_n and t_n+1 differ in connectivity".into()));
        }
        let dt = t_np1 - t_n;
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter(format!("macro interval [{t_n}, {t_np1}] is empty")));
        }
        let frozen = mesh_n.vertices() == mesh_np1.vertices();
        let xdot = mesh_n
            .vertices()
            .iter()
            .zip(mesh_np1.vertices())
            .map(|(a, b)| std::array::from_fn(|r| (b[r] - a[r]) / dt))
            .collect();
        Ok(PhysicsOde {
            mesh_n,
            mesh_np1,
            t_n,
            dt,
            xdot,
            image,
            params: *params,
            rule: degree4_rule(D),
            frozen,
        })
    }

    /// Chord mesh velocity.
    pub fn mesh_velocity(&self) -> &[[T; D]] {
        &self.xdot
    }

    /// Mesh at time `t`: `X(t) = x^n + (t − t_n)Ẋ`.
    pub fn mesh_at(&self, t: T) -> SimplicialMesh<T, D> {
        if self.frozen {
            return self.mesh_n.clone();
        }
        let s = (t - self.t_n) / self.dt;
        if s == T::one() {
            return self.mesh_np1.clone();
        }
        let verts = self
            .mesh_n
            .vertices()
            .iter()
            .zip(&self.xdot)
            .map(|(x, v)| std::array::from_fn(|r| x[r] + (t - self.t_n) * v[r]))
            .collect();
        self.mesh_n.with_vertices(verts)
    }

    fn eval(&self, t: T, y: &[T], out: &mut [T]) -> Result<()> {
        let mesh = self.mesh_at(t);
        let state = NodalState::from_interleaved(y);
        let n = mesh.n_vertices();
        let mut f = vec![T::zero(); n];
        let mut g = vec![T::zero(); n];
        let outputs = Outputs {
            f: Some(&mut f),
            g: Some(&mut g),
        };
        assemble(&mesh, &self.xdot, &state.u, &state.phi, Some(self.image), &self.params, &self.rule, outputs)?;
        for i in 0..n {
            out[2 * i] = f[i];
            out[2 * i + 1] = g[i];
        }
        Ok(())
    }
}

impl<T: Real, const D: usize> OdeSystem<T> for PhysicsOde<'_, T, D> {
    fn dim(&self) -> usize {
        2 * self.mesh_n.n_vertices()
    }

    fn rhs(&self, t: T, y: &[T], out: &mut [T]) {
        if self.eval(t, y, out).is_err() {
            out.iter_mut().for_each(|v| *v = T::nan());
        }
    }

    fn sparsity(&self) -> Sparsity {
        Sparsity::from_vertex_graph(self.mesh_n.topology().all_neighbors(), 2)
    }

    fn has_mass(&self) -> bool {
        true
    }

    fn mass(&self, t: T, out: &mut BandedMatrix<T>) {
        out.fill_zero();
        match mass_matrix(&self.mesh_at(t)) {
            Ok(m) => m.add_to_banded(T::one(), 2, out),
            Err(_) => {
                for i in 0..out.n() {
                    out.set(i, i, T::nan());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uniform_mesh, DomainBox};
    use crate::imagefield::Analytic;

    fn params() -> SegParams<f64> {
        SegParams {
            alpha: 0.01,
            beta: 1e-3,
            gamma: 1e-3,
            k_eps: 1e-9,
            eps: 0.01,
            scale: 1.0,
            grad_cr: 3e3,
            final_time: 1.0,
            output_every: 0,
            reaction: ReactionQuadrature::Exact,
        }
    }

    fn mesh1(n: usize) -> SimplicialMesh<f64, 1> {
        build_uniform_mesh(n, DomainBox::unit()).unwrap()
    }

    #[test]
    fn mass_matrix_single_elements() {
        let dom = DomainBox::<f64, 1>::new([0.0], [0.3]).unwrap();
        let m = mass_matrix(&SimplicialMesh::new(dom, vec![[0.0], [0.3]], vec![0, 1]).unwrap()).unwrap();
        assert!((m.get(0, 0) - 0.1).abs() < 1e-15 && (m.get(0, 1) - 0.05).abs() < 1e-15);
        let dom2 = DomainBox::<f64, 2>::new([0.0, 0.0], [2.0, 1.0]).unwrap();
        let tri = SimplicialMesh::new(dom2, vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], vec![0, 1, 2]).unwrap();
        let m2 = mass_matrix(&tri).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 / 12.0 } else { 1.0 / 12.0 };
                assert!((m2.get(i, j) - e).abs() < 1e-15);
            }
        }
        let m3 = mass_matrix(&build_uniform_mesh::<f64, 2>(5, DomainBox::unit()).unwrap()).unwrap();
        assert!((m3.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_state_is_steady() {
        let m = mesh1(6);
        let g = ImageField::analytic(Analytic::Constant(0.25), DomainBox::unit());
        let mut p = params();
        p.scale = 4.0;
        let xdot = vec![[0.0]; 7];
        let u = vec![1.0; 7];
        let phi = vec![1.0; 7];
        assert!(rhs_u(&m, &xdot, &u, &phi, &g, &p).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(rhs_phi(&m, &xdot, &u, &phi, &p).unwrap().iter().all(|v| v.abs() < 1e-15));
        let e = at_energy(&m, &u, &phi, &g, &p).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn degenerate_coefficient_kills_diffusion() {
        let m = mesh1(4);
        let g = ImageField::analytic(Analytic::Constant(0.0), DomainBox::unit());
        let mut p = params();
        p.k_eps = 0.0;
        p.gamma = 0.0;
        let u: Vec<f64> = (0..5).map(|i| (i as f64).powi(2)).collect();
        let f = rhs_u(&m, &[[0.0]; 5], &u, &[0.0; 5], &g, &p).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn phi_decay_and_restoring_force() {
        let m = mesh1(4);
        let p = params();
        let u: Vec<f64> = (0..5).map(|i| 3.0 * i as f64 / 4.0).collect();
        let g = rhs_phi(&m, &[[0.0]; 5], &u, &[1.0; 5], &p).unwrap();
        let lumped = [0.125, 0.25, 0.25, 0.25, 0.125];
        for (gi, w) in g.iter().zip(lumped) {
            assert!((gi + p.alpha * 9.0 * w).abs() < 1e-15);
        }
        let g0 = rhs_phi(&m, &[[0.0]; 5], &u, &[0.0; 5], &p).unwrap();
        for (gi, w) in g0.iter().zip(lumped) {
            assert!((gi - p.beta / (2.0 * p.eps) * w).abs() < 1e-15);
        }
    }

    #[test]
    fn two_element_hand_assembly() {
        // Nodes 0, 0.5, 1; u = 2x, φ = (1, 0.5, 0), g ≡ 0, Ẋ ≡ 0.
        let m = mesh1(2);
        let g = ImageField::analytic(Analytic::Constant(0.0), DomainBox::unit());
        let mut p = params();
        p.k_eps = 0.0;
        let u = [0.0, 1.0, 2.0];
        let phi = [1.0, 0.5, 0.0];
        let f = rhs_u(&m, &[[0.0]; 3], &u, &phi, &g, &p).unwrap();
        // ∫φ² over each half: h/3(a² + ab + b²).
        let c1 = 0.5 / 3.0 * (1.0 + 0.5 + 0.25);
        let c2 = 0.5 / 3.0 * 0.25;
        // ∇u = 2, ∇ψ = ∓2 per element; ∫uψ from the mass matrix.
        let mu = [0.5 / 6.0 * 1.0, 0.5 / 6.0 * (4.0 + 2.0), 0.5 / 6.0 * (1.0 + 4.0)];
        let expect = [
            -p.alpha * c1 * 2.0 * -2.0 - p.gamma * mu[0],
            -p.alpha * (c1 * 2.0 * 2.0 + c2 * 2.0 * -2.0) - p.gamma * mu[1],
            -p.alpha * c2 * 2.0 * 2.0 - p.gamma * mu[2],
        ];
        for (a, e) in f.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn convection_term_matches_translation() {
        // Translating the mesh with Ẋ = c gives ∫(∇u·c)ψ_j = c·(M ∂u/∂x)_j.
        let m = mesh1(5);
        let g = ImageField::analytic(Analytic::Constant(0.0), DomainBox::unit());
        let mut p = params();
        p.alpha = 1e-300;
        p.gamma = 1e-300;
        let u: Vec<f64> = (0..6).map(|i| 0.2 * i as f64 * 3.0).collect();
        let f = rhs_u(&m, &[[0.7]; 6], &u, &[1.0; 6], &g, &p).unwrap();
        let lumped = mass_matrix(&m).unwrap().row_sums();
        for (fi, w) in f.iter().zip(lumped) {
            assert!((fi - 0.7 * 3.0 * w).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_phi_zero_energy_is_well_height() {
        let m = build_uniform_mesh::<f64, 2>(4, DomainBox::unit()).unwrap();
        let g = ImageField::analytic(Analytic::Constant(0.3), DomainBox::unit());
        let p = params();
        let n = m.n_vertices();
        let e = at_energy(&m, &vec![0.3; n], &vec![0.0; n], &g, &p).unwrap();
        assert!((e.total - p.beta / (4.0 * p.eps)).abs() < 1e-14);
        assert_eq!(e.smoothness, 0.0);
        assert_eq!(e.fidelity, 0.0);
    }

    #[test]
    fn nodal_rhs_is_negative_energy_gradient() {
        let m = mesh1(4);
        let g = ImageField::analytic(Analytic::tanh1d(5.0), DomainBox::unit());
        let mut p = params();
        p.reaction = ReactionQuadrature::Nodal;
        p.gamma = 0.3;
        let u = vec![0.1, 0.4, -0.2, 0.9, 0.5];
        let phi = vec![0.9, 0.3, 0.7, 0.2, 1.0];
        let xdot = [[0.0]; 5];
        let f = rhs_u(&m, &xdot, &u, &phi, &g, &p).unwrap();
        let gg = rhs_phi(&m, &xdot, &u, &phi, &p).unwrap();
        let h = 1e-6;
        let energy = |u: &[f64], phi: &[f64]| at_energy(&m, u, phi, &g, &p).unwrap().total;
        for j in 0..5 {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[j] += h;
            um[j] -= h;
            let du = (energy(&up, &phi) - energy(&um, &phi)) / (2.0 * h);
            assert!((f[j] + du).abs() < 1e-6 * (1.0 + du.abs()), "u {j}: {} vs {}", f[j], -du);
            let (mut pp, mut pm) = (phi.clone(), phi.clone());
            pp[j] += h;
            pm[j] -= h;
            let dp = (energy(&u, &pp) - energy(&u, &pm)) / (2.0 * h);
            assert!((gg[j] + dp).abs() < 1e-6 * (1.0 + dp.abs()), "phi {j}: {} vs {}", gg[j], -dp);
        }
    }

    #[test]
    fn degree4_rules_integrate_quartics() {
        for d in [1usize, 2] {
            let rule = degree4_rule::<f64>(d);
            // ∫_K λ_0⁴ = |K| 4! d! / (4 + d)!.
            let exact = 24.0 * if d == 1 { 1.0 / 120.0 } else { 2.0 / 720.0 };
            let q: f64 = rule.iter().map(|(l, w)| w * l[0].powi(4)).sum();
            assert!((q - exact).abs() < 1e-12, "d = {d}");
            assert!((rule.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
