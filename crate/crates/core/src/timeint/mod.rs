//! Stiff time integrators for `M(t) y' = f(t, y)`.
//!
//! [`radau`] is the three-stage Radau IIA method used for the physics
//! system; [`ndf`] is a variable-order numerical differentiation formula
//! used for the moving-mesh equation.

pub mod controller;
pub mod ndf;
pub mod radau;

pub use controller::{step_controller, ControllerConfig};
pub use ndf::{integrate_ndf, NdfConfig};
pub use radau::{integrate_interval, integrate_interval_with, radau_step, RadauConfig};

use crate::linalg::{fd_jacobian, BandedMatrix, ColumnGroups, Sparsity};
use crate::Real;

/// Semi-discrete system `M(t) y' = f(t, y)`.
pub trait OdeSystem<T: Real> {
    fn dim(&self) -> usize;

    fn rhs(&self, t: T, y: &[T], out: &mut [T]);

    /// Structural pattern of `∂f/∂y`; also bounds the mass matrix band.
    fn sparsity(&self) -> Sparsity {
        Sparsity::dense(self.dim())
    }

    /// `∂f/∂y` at `(t, y)` given `f0 = f(t, y)`. Defaults to colored
    /// forward differences.
    fn jacobian(&self, t: T, y: &[T], f0: &[T], pattern: &JacobianPattern, out: &mut BandedMatrix<T>) {
        fd_jacobian(|yy, o| self.rhs(t, yy, o), y, f0, &pattern.sparsity, &pattern.groups, out);
    }

    /// `false` when `M` is the identity.
    fn has_mass(&self) -> bool {
        false
    }

    /// Writes `M(t)` into `out`, whose band matches the Jacobian band.
    fn mass(&self, _t: T, out: &mut BandedMatrix<T>) {
        out.fill_zero();
        for i in 0..out.n() {
            out.set(i, i, T::one());
        }
    }
}

/// Jacobian sparsity with its column coloring.
#[derive(Debug, Clone)]
pub struct JacobianPattern {
    pub sparsity: Sparsity,
    pub groups: ColumnGroups,
}

impl JacobianPattern {
    pub fn new(sparsity: Sparsity) -> Self {
        let groups = ColumnGroups::new(&sparsity);
        JacobianPattern { sparsity, groups }
    }
}

/// Counters and step-size statistics of one integration call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationStats<T> {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    pub factorizations: usize,
    pub dt_min: T,
    pub dt_max: T,
    pub dt_sum: T,
}

impl<T: Real> Default for IntegrationStats<T> {
    fn default() -> Self {
        IntegrationStats {
            accepted: 0,
            rejected: 0,
            rhs_evals: 0,
            jacobian_evals: 0,
            factorizations: 0,
            dt_min: T::infinity(),
            dt_max: T::zero(),
            dt_sum: T::zero(),
        }
    }
}

impl<T: Real> IntegrationStats<T> {
    fn record_step(&mut self, h: T) {
        self.accepted += 1;
        self.dt_min = self.dt_min.min(h);
        self.dt_max = self.dt_max.max(h);
        self.dt_sum += h;
    }

    pub fn dt_mean(&self) -> T {
        if self.accepted == 0 {
            T::zero()
        } else {
            self.dt_sum / T::from_usize_lossy(self.accepted)
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
        self.jacobian_evals += other.jacobian_evals;
        self.factorizations += other.factorizations;
        self.dt_min = self.dt_min.min(other.dt_min);
        self.dt_max = self.dt_max.max(other.dt_max);
        self.dt_sum += other.dt_sum;
    }
}

/// State reported to observers after every accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a, T> {
    pub t: T,
    pub y: &'a [T],
    pub dt: T,
    pub error: T,
}

/// Result of integrating over one interval.
#[derive(Debug, Clone)]
pub struct IntervalResult<T> {
    pub y: Vec<T>,
    pub stats: IntegrationStats<T>,
    /// Step size the controller proposes for a continuation.
    pub next_dt: T,
}
