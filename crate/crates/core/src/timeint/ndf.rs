//! Variable-order (1–5) numerical differentiation formulas in
//! backward-difference form with quasi-constant step size, as in the
//! classical NDF family for stiff problems with an identity mass matrix.

use crate::error::{Error, Result};
use crate::linalg::{weighted_rms, BandedLu, BandedMatrix};
use crate::timeint::{IntegrationStats, IntervalResult, JacobianPattern, OdeSystem, StepInfo};
use crate::Real;

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const KAPPA: [f64; MAX_ORDER + 1] = [0.0, -0.1850, -1.0 / 9.0, -0.0823, -0.0415, 0.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdfConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub dt_max: T,
    pub dt_init: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for NdfConfig<T> {
    fn default() -> Self {
        NdfConfig {
            abs_tol: T::lit(1e-6),
            rel_tol: T::lit(1e-4),
            dt_max: T::infinity(),
            dt_init: None,
            max_steps: 100_000,
        }
    }
}

struct Coefficients<T> {
    gamma: [T; MAX_ORDER + 1],
    alpha: [T; MAX_ORDER + 1],
    error_const: [T; MAX_ORDER + 2],
}

impl<T: Real> Coefficients<T> {
    fn new() -> Self {
        let mut gamma = [0.0; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
        }
        let mut alpha = [0.0; MAX_ORDER + 1];
        let mut error_const = [0.0; MAX_ORDER + 2];
        for k in 0..=MAX_ORDER {
            alpha[k] = (1.0 - KAPPA[k]) * gamma[k];
            error_const[k] = KAPPA[k] * gamma[k] + 1.0 / (k + 1) as f64;
        }
        error_const[MAX_ORDER + 1] = 1.0 / (MAX_ORDER + 2) as f64;
        Coefficients {
            gamma: gamma.map(T::lit),
            alpha: alpha.map(T::lit),
            error_const: error_const.map(T::lit),
        }
    }
}

/// `R[i][j] = Π_{k ≤ i} M[k][j]` with `M[0][·] = 1`,
/// `M[i][j] = (i − 1 − factor·j)/i`.
fn compute_r<T: Real>(order: usize, factor: T) -> Vec<Vec<T>> {
    let m = order + 1;
    let mut r = vec![vec![T::zero(); m]; m];
    for j in 0..m {
        r[0][j] = T::one();
    }
    for i in 1..m {
        for j in 0..m {
            let mij = if j == 0 {
                T::zero()
            } else {
                let fi = T::from_usize_lossy(i);
                (fi - T::one() - factor * T::from_usize_lossy(j)) / fi
            };
            r[i][j] = r[i - 1][j] * mij;
        }
    }
    r
}

/// Rescales the difference array for a step-size change by `factor`.
fn change_d<T: Real>(d: &mut [Vec<T>], order: usize, factor: T) {
    let r = compute_r(order, factor);
    let u = compute_r(order, T::one());
    let m = order + 1;
    let mut ru = vec![vec![T::zero(); m]; m];
    for i in 0..m {
        for k in 0..m {
            for j in 0..m {
                ru[i][j] += r[i][k] * u[k][j];
            }
        }
    }
    let n = d[0].len();
    let old: Vec<Vec<T>> = d[..m].to_vec();
    for i in 0..m {
        for col in 0..n {
            let mut s = T::zero();
            for k in 0..m {
                s += ru[k][i] * old[k][col];
            }
            d[i][col] = s;
        }
    }
}

fn min_step<T: Real>(t: T) -> T {
    (T::lit(10.0) * T::epsilon() * t.abs()).max(T::min_positive_value() * T::lit(10.0))
}

/// Integrates `y' = f(t, y)` from `t0` to exactly `t1`.
pub fn integrate_ndf<T: Real, O: OdeSystem<T> + ?Sized>(
    ode: &O,
    t0: T,
    t1: T,
    y0: &[T],
    cfg: &NdfConfig<T>,
    mut observer: impl FnMut(&StepInfo<T>),
) -> Result<IntervalResult<T>> {
    if ode.has_mass() {
        return Err(Error::InvalidParameter("NDF integrator requires an identity mass matrix".into()));
    }
    if !(cfg.abs_tol > T::zero() && cfg.rel_tol > T::zero() && cfg.dt_max > T::zero()) {
        return Err(Error::InvalidParameter(format!("invalid NDF configuration: {cfg:?}")));
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("interval [{t0}, {t1}] is reversed")));
    }
    let n = ode.dim();
    let mut stats = IntegrationStats::default();
    if t1 == t0 {
        return Ok(IntervalResult {
            y: y0.to_vec(),
            stats,
            next_dt: cfg.dt_init.unwrap_or(cfg.dt_max),
        });
    }
    let coef = Coefficients::<T>::new();
    let pattern = JacobianPattern::new(ode.sparsity());
    let eps = T::epsilon();
    let newton_tol = (T::lit(10.0) * eps / cfg.rel_tol).max(T::lit(0.03).min(cfg.rel_tol.sqrt()));
    let scale_of = |y: &[T]| -> Vec<T> { y.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect() };

    let mut f = vec![T::zero(); n];
    ode.rhs(t0, y0, &mut f);
    stats.rhs_evals += 1;

    let mut h_abs = match cfg.dt_init {
        Some(h) => h,
        None => {
            let scale = scale_of(y0);
            let d0 = weighted_rms(y0, &scale);
            let d1 = weighted_rms(&f, &scale);
            let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
                T::lit(1e-6)
            } else {
                T::lit(0.01) * d0 / d1
            };
            let y1: Vec<T> = (0..n).map(|j| y0[j] + h0 * f[j]).collect();
            let mut f1 = vec![T::zero(); n];
            ode.rhs(t0 + h0, &y1, &mut f1);
            stats.rhs_evals += 1;
            let diff: Vec<T> = (0..n).map(|j| f1[j] - f[j]).collect();
            let d2 = weighted_rms(&diff, &scale) / h0;
            let h1 = if d1 <= T::lit(1e-15) && d2 <= T::lit(1e-15) {
                (h0 * T::lit(1e-3)).max(T::lit(1e-6))
            } else {
                (T::lit(0.01) / d1.max(d2)).powf(T::lit(0.5))
            };
            (T::lit(100.0) * h0).min(h1)
        }
    };
    h_abs = h_abs.min(cfg.dt_max).min(t1 - t0);

    let mut jac: BandedMatrix<T> = pattern.sparsity.banded_zeros();
    ode.jacobian(t0, y0, &f, &pattern, &mut jac);
    stats.jacobian_evals += 1;
    stats.rhs_evals += pattern.groups.count();

    let mut d: Vec<Vec<T>> = vec![vec![T::zero(); n]; MAX_ORDER + 3];
    d[0].copy_from_slice(y0);
    for j in 0..n {
        d[1][j] = f[j] * h_abs;
    }
    let mut t = t0;
    let mut order = 1usize;
    let mut n_equal_steps = 0usize;
    let mut lu: Option<BandedLu<T>> = None;
    let mut h_suggest = h_abs;
    let mut steps = 0usize;

    while t < t1 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::Integrator {
                t: t.as_f64(),
                reason: format!("exceeded {} steps", cfg.max_steps),
            });
        }
        let min_h = min_step(t);
        if h_abs > cfg.dt_max {
            change_d(&mut d, order, cfg.dt_max / h_abs);
            h_abs = cfg.dt_max;
            n_equal_steps = 0;
            lu = None;
        } else if h_abs < min_h {
            change_d(&mut d, order, min_h / h_abs);
            h_abs = min_h;
            n_equal_steps = 0;
            lu = None;
        }
        let mut current_jac = false;
        let (t_new, y_new, d_corr, safety, error_norm) = loop {
            if h_abs < min_h {
                return Err(Error::StepTooSmall {
                    t: t.as_f64(),
                    dt: h_abs.as_f64(),
                });
            }
            let mut t_new = t + h_abs;
            if t_new > t1 {
                t_new = t1;
                change_d(&mut d, order, (t_new - t) / h_abs);
                n_equal_steps = 0;
                lu = None;
            }
            let h = t_new - t;
            h_abs = h;
            let mut y_predict = vec![T::zero(); n];
            for row in d.iter().take(order + 1) {
                for j in 0..n {
                    y_predict[j] += row[j];
                }
            }
            let scale = scale_of(&y_predict);
            let mut psi = vec![T::zero(); n];
            for k in 1..=order {
                for j in 0..n {
                    psi[j] += d[k][j] * coef.gamma[k];
                }
            }
            for v in psi.iter_mut() {
                *v /= coef.alpha[order];
            }
            let c = h / coef.alpha[order];
            let mut outcome;
            loop {
                if lu.is_none() {
                    let mut id: BandedMatrix<T> = BandedMatrix::zeros(n, jac.lower_bandwidth(), jac.upper_bandwidth());
                    for i in 0..n {
                        id.set(i, i, T::one());
                    }
                    stats.factorizations += 1;
                    lu = BandedMatrix::combine(T::one(), &id, -c, &jac).factor().ok();
                }
                outcome = match &lu {
                    Some(factors) => solve_system(ode, t_new, &y_predict, c, &psi, factors, &scale, newton_tol, &mut stats),
                    None => None,
                };
                if outcome.is_some() || current_jac {
                    break;
                }
                // Refresh at the last accepted state: the predictor may lie
                // outside the region where `f` is defined.
                ode.rhs(t, &d[0], &mut f);
                ode.jacobian(t, &d[0], &f, &pattern, &mut jac);
                stats.rhs_evals += 1 + pattern.groups.count();
                stats.jacobian_evals += 1;
                lu = None;
                current_jac = true;
            }
            let Some((n_iter, y_new, d_corr)) = outcome else {
                stats.rejected += 1;
                h_abs *= T::lit(0.5);
                change_d(&mut d, order, T::lit(0.5));
                n_equal_steps = 0;
                lu = None;
                continue;
            };
            let nmax = T::from_usize_lossy(NEWTON_MAXITER);
            let safety = T::lit(0.9) * (T::lit(2.0) * nmax + T::one()) / (T::lit(2.0) * nmax + T::from_usize_lossy(n_iter));
            let scale = scale_of(&y_new);
            let err: Vec<T> = d_corr.iter().map(|&v| v * coef.error_const[order]).collect();
            let error_norm = weighted_rms(&err, &scale);
            if error_norm > T::one() {
                stats.rejected += 1;
                let factor = T::lit(MIN_FACTOR).max(safety * error_norm.powf(-T::one() / T::from_usize_lossy(order + 1)));
                h_abs *= factor;
                change_d(&mut d, order, factor);
                n_equal_steps = 0;
                continue;
            }
            break (t_new, y_new, d_corr, safety, error_norm);
        };

        let h_taken = t_new - t;
        n_equal_steps += 1;
        t = t_new;
        for j in 0..n {
            d[order + 2][j] = d_corr[j] - d[order + 1][j];
            d[order + 1][j] = d_corr[j];
        }
        for i in (0..=order).rev() {
            for j in 0..n {
                let v = d[i + 1][j];
                d[i][j] += v;
            }
        }
        stats.record_step(h_taken);
        observer(&StepInfo {
            t,
            y: &y_new,
            dt: h_taken,
            error: error_norm,
        });
        h_suggest = h_abs;
        if n_equal_steps < order + 1 {
            continue;
        }
        let scale = scale_of(&y_new);
        let norm_of = |k: usize, row: &[T]| -> T {
            let e: Vec<T> = row.iter().map(|&v| v * coef.error_const[k]).collect();
            weighted_rms(&e, &scale)
        };
        let error_m_norm = if order > 1 { norm_of(order - 1, &d[order]) } else { T::infinity() };
        let error_p_norm = if order < MAX_ORDER {
            norm_of(order + 1, &d[order + 2])
        } else {
            T::infinity()
        };
        let norms = [error_m_norm, error_norm, error_p_norm];
        let mut best = 0;
        let mut factors = [T::zero(); 3];
        for k in 0..3 {
            let e = T::from_usize_lossy(order + k);
            factors[k] = if norms[k] == T::zero() {
                T::infinity()
            } else {
                norms[k].powf(-T::one() / e)
            };
            if factors[k] > factors[best] {
                best = k;
            }
        }
        order = order + best - 1;
        let factor = T::lit(MAX_FACTOR).min(safety * factors[best]);
        h_abs *= factor;
        change_d(&mut d, order, factor);
        n_equal_steps = 0;
        lu = None;
        h_suggest = h_abs;
    }
    Ok(IntervalResult {
        y: d[0].clone(),
        stats,
        next_dt: h_suggest,
    })
}

/// Simplified Newton iteration for `y − c f(t, y) − ψ·… = 0`; returns the
/// iteration count, the new state and the accumulated correction.
#[allow(clippy::too_many_arguments)]
fn solve_system<T: Real, O: OdeSystem<T> + ?Sized>(
    ode: &O,
    t_new: T,
    y_predict: &[T],
    c: T,
    psi: &[T],
    lu: &BandedLu<T>,
    scale: &[T],
    tol: T,
    stats: &mut IntegrationStats<T>,
) -> Option<(usize, Vec<T>, Vec<T>)> {
    let n = y_predict.len();
    let mut d = vec![T::zero(); n];
    let mut y = y_predict.to_vec();
    let mut f = vec![T::zero(); n];
    let mut dy_norm_old: Option<T> = None;
    for k in 0..NEWTON_MAXITER {
        ode.rhs(t_new, &y, &mut f);
        stats.rhs_evals += 1;
        if f.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut dy: Vec<T> = (0..n).map(|j| c * f[j] - psi[j] - d[j]).collect();
        lu.solve_in_place(&mut dy);
        let dy_norm = weighted_rms(&dy, scale);
        let rate = dy_norm_old.map(|old| dy_norm / old);
        if let Some(rate) = rate {
            let remaining = T::from_usize_lossy(NEWTON_MAXITER - k);
            if rate >= T::one() || rate.powf(remaining) / (T::one() - rate) * dy_norm > tol {
                return None;
            }
        }
        for j in 0..n {
            y[j] += dy[j];
            d[j] += dy[j];
        }
        if dy_norm == T::zero() || rate.is_some_and(|r| r / (T::one() - r) * dy_norm < tol) {
            return Some((k + 1, y, d));
        }
        dy_norm_old = Some(dy_norm);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;

    impl OdeSystem<f64> for Decay {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
            out[0] = -y[0];
            out[1] = -1000.0 * (y[1] - y[0].cos());
        }
    }

    #[test]
    fn compute_r_identity_factor() {
        // R(1)·R(1) = I for the difference-array rescaling.
        let r = compute_r::<f64>(3, 1.0);
        let mut p = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    p[i][j] += r[i][k] * r[k][j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert!((p[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stiff_decay() {
        let cfg = NdfConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let r = integrate_ndf(&Decay, 0.0, 3.0, &[1.0, 0.0], &cfg, |_| {}).unwrap();
        let y0 = (-3.0f64).exp();
        assert!((r.y[0] - y0).abs() < 1e-4, "{:?}", r.y);
        assert!((r.y[1] - y0.cos()).abs() < 1e-3);
        assert!(r.stats.accepted < 2000);
    }

    #[test]
    fn stationary_problem_is_exact() {
        struct Zero;
        impl OdeSystem<f64> for Zero {
            fn dim(&self) -> usize {
                3
            }
            fn rhs(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
                out.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let r = integrate_ndf(&Zero, 0.0, 1.0, &[0.1, 0.2, 0.3], &NdfConfig::default(), |_| {}).unwrap();
        assert_eq!(r.y, vec![0.1, 0.2, 0.3]);
    }
}
