//! Parameter selection and the alternating mesh/physics time loop.

pub mod output;

use crate::error::{Error, Result};
use crate::fem::{at_energy, AtEnergy, NodalState, PhysicsOde, SegParams};
use crate::geometry::{apply_correspondence, build_uniform_mesh, DomainBox, SimplicialMesh};
use crate::imagefield::{GradStats, ImageField};
use crate::meshmotion::{step_computational_mesh_with, MeshMotionParams};
use crate::metric::{metric_for_state_relative, MetricField, DEFAULT_FLOOR, DEFAULT_REL_FLOOR};
use crate::timeint::{integrate_interval_with, IntegrationStats, RadauConfig};
use crate::Real;

pub use output::OutputSink;

/// Smallest computational element, relative to the reference, accepted
/// when a failed mesh step falls back to an intermediate state.
const HEALTHY_VOLUME_RATIO: f64 = 0.1;

/// Result of the automatic `ε` rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonChoice<T> {
    pub eps: T,
    /// `(|∇g|_max + |∇g|_min)/2`.
    pub mean_grad: T,
}

/// `ε = β / (2α m²)` with `m` the mean of the gradient extremes.
pub fn select_epsilon<T: Real>(stats: &GradStats<T>, alpha: T, beta: T) -> Result<EpsilonChoice<T>> {
    if !(stats.grad_max > T::zero()) {
        return Err(Error::FlatImage);
    }
    let mean_grad = (stats.grad_max + stats.grad_min) / T::lit(2.0);
    Ok(EpsilonChoice {
        eps: beta / (T::lit(2.0) * alpha * mean_grad * mean_grad),
        mean_grad,
    })
}

/// `L = max(1, grad_cr / grad_max)`.
pub fn select_scale<T: Real>(grad_max: T, grad_cr: T) -> Result<T> {
    if !(grad_max > T::zero()) {
        return Err(Error::FlatImage);
    }
    Ok(T::one().max(grad_cr / grad_max))
}

/// Steady state of the reduced edge equation, `β / (β + 2εα|∇u|²)`.
pub fn equilibrium_phi<T: Real>(grad_u_sq: T, alpha: T, beta: T, eps: T) -> T {
    beta / (beta + T::lit(2.0) * eps * alpha * grad_u_sq)
}

/// First-order expansion `1 − ε(2α/β)|∇u⁽⁰⁾|²`.
pub fn asymptotic_phi<T: Real>(grad_u0_sq: T, alpha: T, beta: T, eps: T) -> T {
    T::one() - eps * (T::lit(2.0) * alpha / beta) * grad_u0_sq
}

/// Uniform grid `0, Δt, …, T` whose last point is exactly `T`; a trailing
/// remainder below `1e-9·Δt` is absorbed into the final interval.
pub fn macro_step_schedule<T: Real>(final_time: T, dt: T) -> Result<Vec<T>> {
    if !(final_time > T::zero()) || !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "schedule needs T > 0 and dt > 0, got T = {final_time}, dt = {dt}"
        )));
    }
    let ratio = (final_time / dt).as_f64();
    let mut n = ratio.ceil() as usize;
    if n > 1 && ratio - ((n - 1) as f64) < 1e-9 {
        n -= 1;
    }
    let n = n.max(1);
    let mut grid: Vec<T> = (0..n).map(|i| T::from_usize_lossy(i) * dt).collect();
    grid.push(final_time);
    Ok(grid)
}

/// Everything a segmentation run needs.
#[derive(Debug, Clone)]
pub struct RunConfig<T: Real, const D: usize> {
    /// Observed image `g` (noise already applied, not yet scaled by `L`).
    pub image: ImageField<T, D>,
    pub params: SegParams<T>,
    /// Cells per side of the initial uniform mesh.
    pub n_per_side: usize,
    pub macro_dt: T,
    pub motion: MeshMotionParams<T>,
    pub radau: RadauConfig<T>,
    /// `false` keeps the initial mesh for the whole run.
    pub adapt_mesh: bool,
    pub metric_floor: T,
    /// Floor relative to the largest Hessian eigenvalue; the larger of the
    /// two floors applies.
    pub metric_rel_floor: T,
    /// Record the energy after every accepted physics step.
    pub track_step_energy: bool,
    pub output: Option<OutputSink>,
}

impl<T: Real, const D: usize> RunConfig<T, D> {
    pub fn new(image: ImageField<T, D>, params: SegParams<T>, n_per_side: usize) -> Self {
        RunConfig {
            image,
            params,
            n_per_side,
            macro_dt: T::lit(0.05),
            motion: MeshMotionParams::default(),
            radau: RadauConfig::default(),
            adapt_mesh: true,
            metric_floor: T::lit(DEFAULT_FLOOR),
            metric_rel_floor: T::lit(DEFAULT_REL_FLOOR),
            track_step_energy: false,
            output: None,
        }
    }

    pub fn domain(&self) -> DomainBox<T, D> {
        *self.image.domain()
    }
}

/// One row of the run history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord<T> {
    pub t: T,
    pub energy: AtEnergy<T>,
    pub phi_min: T,
    pub phi_max: T,
    pub min_volume: T,
    /// Physics step statistics over the preceding macro interval.
    pub dt_min: T,
    pub dt_mean: T,
    pub dt_max: T,
}

#[derive(Debug, Clone)]
pub struct RunSummary<T: Real, const D: usize> {
    pub mesh: SimplicialMesh<T, D>,
    pub state: NodalState<T>,
    pub history: Vec<HistoryRecord<T>>,
    /// `(t, energy)` after each accepted physics step when tracked.
    pub step_energy: Vec<(T, T)>,
    pub stats: IntegrationStats<T>,
    /// Macro steps in which mesh adaptation was abandoned.
    pub mesh_fallbacks: usize,
}

impl<T: Real, const D: usize> RunSummary<T, D> {
    /// Vertex position and value of the smallest `Φ`.
    pub fn phi_argmin(&self) -> ([T; D], T) {
        let (i, v) = self
            .state
            .phi
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::infinity()), |best, (i, v)| if v < best.1 { (i, v) } else { best });
        (*self.mesh.vertex(i), v)
    }
}

fn record<T: Real, const D: usize>(
    t: T,
    mesh: &SimplicialMesh<T, D>,
    state: &NodalState<T>,
    cfg: &RunConfig<T, D>,
    stats: &IntegrationStats<T>,
) -> Result<HistoryRecord<T>> {
    let energy = at_energy(mesh, &state.u, &state.phi, &cfg.image, &cfg.params)?;
    let (phi_min, phi_max) = state.phi_range();
    let (dt_min, dt_max) = if stats.accepted == 0 {
        (T::zero(), T::zero())
    } else {
        (stats.dt_min, stats.dt_max)
    };
    Ok(HistoryRecord {
        t,
        energy,
        phi_min,
        phi_max,
        min_volume: mesh.min_volume(),
        dt_min,
        dt_mean: stats.dt_mean(),
        dt_max,
    })
}

/// Moves the mesh for one macro step, halving the mesh pseudo-time twice
/// on tangling before keeping the current mesh.
fn adapt<T: Real, const D: usize>(
    phys: &SimplicialMesh<T, D>,
    comp_ref: &SimplicialMesh<T, D>,
    metric: &MetricField<T, D>,
    cfg: &RunConfig<T, D>,
    t: T,
) -> Result<Option<SimplicialMesh<T, D>>> {
    let ref_min = comp_ref.min_volume();
    let mut dt = cfg.macro_dt;
    for _ in 0..3 {
        // Last accepted pseudo-time state whose elements all keep a fair
        // share of their reference volume.
        let mut healthy: Option<(T, SimplicialMesh<T, D>)> = None;
        let step = step_computational_mesh_with(phys, metric, comp_ref, &cfg.motion, dt, |s, xi| {
            let verts = xi.chunks_exact(D).map(|c| std::array::from_fn(|i| c[i])).collect();
            let m = comp_ref.with_vertices(verts);
            if m.min_volume() >= T::lit(HEALTHY_VOLUME_RATIO) * ref_min {
                healthy = Some((s, m));
            }
        })?;
        // A shorter pseudo-time replays the same trajectory, so a failed
        // integration is not retried.
        let (comp, retry) = if !step.failed {
            (step.comp, true)
        } else if let Some((s, m)) = healthy.filter(|(s, _)| *s > T::zero()) {
            log::info!("t = {t}: mesh step truncated at pseudo-time {s} of {dt}");
            (m, false)
        } else {
            return Ok(None);
        };
        match apply_correspondence(phys, &comp, comp_ref) {
            Ok(m) => return Ok(Some(m)),
            Err(Error::MeshTangled { .. }) if !retry => return Ok(None),
            Err(Error::MeshTangled { element, det }) => {
                log::warn!("t = {t}: mesh tangled at element {element} (det {det:e}) with mesh step {dt}");
                dt /= T::lit(2.0);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Runs the full segmentation: at each macro step the metric is rebuilt
/// from `u_h`, the mesh is moved, and the physics is integrated over the
/// interval on the linearly interpolated mesh.
pub fn run_segmentation<T: Real, const D: usize>(cfg: &RunConfig<T, D>) -> Result<RunSummary<T, D>> {
    cfg.params.validate()?;
    cfg.motion.validate()?;
    cfg.radau.validate()?;
    let schedule = macro_step_schedule(cfg.params.final_time, cfg.macro_dt)?;
    let comp_ref = build_uniform_mesh(cfg.n_per_side, cfg.domain())?;
    let mut mesh = comp_ref.clone();
    let l = cfg.params.scale;
    let u0 = mesh.vertices().iter().map(|x| l * cfg.image.eval(x)).collect();
    let mut state = NodalState::new(u0, vec![T::one(); mesh.n_vertices()])?;
    log::info!(
        "run: {} vertices, {} elements, {} macro steps, eps = {}, L = {}",
        mesh.n_vertices(),
        mesh.n_elements(),
        schedule.len() - 1,
        cfg.params.eps,
        l
    );

    let mut sink = cfg.output.clone();
    if let Some(s) = sink.as_mut() {
        s.begin::<T>()?;
    }
    let mut summary = RunSummary {
        mesh: mesh.clone(),
        state: state.clone(),
        history: Vec::with_capacity(schedule.len()),
        step_energy: Vec::new(),
        stats: IntegrationStats::default(),
        mesh_fallbacks: 0,
    };
    let first = record(schedule[0], &mesh, &state, cfg, &IntegrationStats::default())?;
    emit(&mut sink, &first, 0, &mesh, &state, None, cfg)?;
    summary.history.push(first);
    if cfg.track_step_energy {
        summary.step_energy.push((schedule[0], first.energy.total));
    }

    let mut radau = cfg.radau;
    for (n, w) in schedule.windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let result = macro_step(cfg, &comp_ref, &mesh, &state, t0, t1, &radau, &mut summary);
        let (mesh_np1, y, metric, stats, next_dt) = match result {
            Ok(v) => v,
            Err(e) => {
                if let Some(s) = sink.as_mut() {
                    s.snapshot(&mesh, &state, cfg, "last_good")?;
                }
                return Err(e);
            }
        };
        radau.dt_init = Some(next_dt);
        let new_state = NodalState::from_interleaved(&y);
        if let Err(e) = new_state.check(t1) {
            if let Some(s) = sink.as_mut() {
                s.snapshot(&mesh, &state, cfg, "last_good")?;
            }
            return Err(e);
        }
        mesh = mesh_np1;
        state = new_state;
        summary.stats.merge(&stats);
        let rec = record(t1, &mesh, &state, cfg, &stats)?;
        emit(&mut sink, &rec, n + 1, &mesh, &state, metric.as_ref(), cfg)?;
        summary.history.push(rec);
    }
    if let Some(s) = sink.as_mut() {
        s.snapshot(&mesh, &state, cfg, "final")?;
    }
    summary.mesh = mesh;
    summary.state = state;
    Ok(summary)
}

type MacroOutcome<T, const D: usize> = (SimplicialMesh<T, D>, Vec<T>, Option<MetricField<T, D>>, IntegrationStats<T>, T);

#[allow(clippy::too_many_arguments)]
fn macro_step<T: Real, const D: usize>(
    cfg: &RunConfig<T, D>,
    comp_ref: &SimplicialMesh<T, D>,
    mesh: &SimplicialMesh<T, D>,
    state: &NodalState<T>,
    t0: T,
    t1: T,
    radau: &RadauConfig<T>,
    summary: &mut RunSummary<T, D>,
) -> Result<MacroOutcome<T, D>> {
    let (mesh_np1, metric) = if cfg.adapt_mesh {
        let metric = metric_for_state_relative(mesh, &state.u, cfg.metric_floor, cfg.metric_rel_floor);
        match adapt(mesh, comp_ref, &metric, cfg, t0)? {
            Some(m) => (m, Some(metric)),
            None => {
                summary.mesh_fallbacks += 1;
                log::warn!("t = {t0}: mesh adaptation abandoned for this step");
                (mesh.clone(), Some(metric))
            }
        }
    } else {
        (mesh.clone(), None)
    };
    let ode = PhysicsOde::new(mesh, &mesh_np1, t0, t1, &cfg.image, &cfg.params)?;
    let track = cfg.track_step_energy;
    let mut energies = Vec::new();
    let mut energy_err = None;
    let res = integrate_interval_with(&ode, t0, t1, &state.interleaved(), radau, |info| {
        if track && energy_err.is_none() {
            let s = NodalState::from_interleaved(info.y);
            match at_energy(&ode.mesh_at(info.t), &s.u, &s.phi, &cfg.image, &cfg.params) {
                Ok(e) => energies.push((info.t, e.total)),
                Err(e) => energy_err = Some(e),
            }
        }
    })?;
    if let Some(e) = energy_err {
        return Err(e);
    }
    summary.step_energy.extend(energies);
    Ok((mesh_np1, res.y, metric, res.stats, res.next_dt))
}

fn emit<T: Real, const D: usize>(
    sink: &mut Option<OutputSink>,
    rec: &HistoryRecord<T>,
    step: usize,
    mesh: &SimplicialMesh<T, D>,
    state: &NodalState<T>,
    metric: Option<&MetricField<T, D>>,
    cfg: &RunConfig<T, D>,
) -> Result<()> {
    let Some(s) = sink.as_mut() else {
        return Ok(());
    };
    s.history_row(rec)?;
    let every = cfg.params.output_every;
    if every > 0 && step.is_multiple_of(every) {
        s.snapshot(mesh, state, cfg, &format!("step{step:05}"))?;
        if let Some(m) = metric {
            s.metric(m, &format!("step{step:05}"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(max: f64, min: f64) -> GradStats<f64> {
        GradStats {
            grad_max: max,
            grad_min: min,
            resolution: 1,
        }
    }

    #[test]
    fn epsilon_rule_values() {
        let e = select_epsilon(&stats(50.0, 0.0), 0.01, 1e-3).unwrap();
        assert!((e.eps - 8e-5).abs() < 1e-18);
        assert_eq!(e.mean_grad, 25.0);
        let e2 = select_epsilon(&stats(100.0, 0.0), 0.01, 1e-3).unwrap();
        assert!((e.eps / e2.eps - 4.0).abs() < 1e-12);
        let m = select_epsilon(&stats(7.0, 7.0), 0.3, 0.2).unwrap();
        assert!((m.eps - 0.2 / (2.0 * 0.3 * 49.0)).abs() < 1e-15);
        assert!(matches!(select_epsilon(&stats(0.0, 0.0), 0.01, 1e-3), Err(Error::FlatImage)));
    }

    #[test]
    fn scale_rule_values() {
        assert_eq!(select_scale(3000.0, 3000.0).unwrap(), 1.0);
        assert_eq!(select_scale(50.0, 3000.0).unwrap(), 60.0);
        assert_eq!(select_scale(1e6, 3000.0).unwrap(), 1.0);
    }

    #[test]
    fn phi_formulas() {
        assert_eq!(equilibrium_phi(0.0, 0.01, 1e-3, 0.1), 1.0);
        assert!((equilibrium_phi(5.0f64, 0.01, 1e-3, 0.01) - 0.5).abs() < 1e-15);
        assert_eq!(asymptotic_phi(3.0, 0.0, 1e-3, 0.1), 1.0);
        assert_eq!(asymptotic_phi(3.0, 0.01, 1e-3, 0.0), 1.0);
    }

    #[test]
    fn schedules() {
        assert_eq!(macro_step_schedule(1.0, 0.25).unwrap().len(), 5);
        let g = macro_step_schedule(20.0, 0.5).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!(*g.last().unwrap(), 20.0);
        let g = macro_step_schedule(7.0, 0.05).unwrap();
        assert_eq!(g.len(), 141);
        assert_eq!(*g.last().unwrap(), 7.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
