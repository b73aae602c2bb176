//! Three-stage Radau IIA (order 5) with simplified Newton iterations in the
//! transformed stage variables, collocation-based starting guesses and the
//! stiffly filtered embedded error estimate.

use crate::error::{Error, Result};
use crate::linalg::{small, weighted_rms, BandedLu, BandedMatrix};
use crate::timeint::controller::{step_controller, ControllerConfig};
use crate::timeint::{IntegrationStats, IntervalResult, JacobianPattern, OdeSystem, StepInfo};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadauConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub dt_min: T,
    pub dt_max: T,
    /// First step size; a starting-step heuristic is used when `None`.
    pub dt_init: Option<T>,
    pub newton_max_iter: usize,
    /// Newton stopping tolerance; derived from `rel_tol` when `None`.
    pub newton_tol: Option<T>,
    /// Convergence rate below which the Jacobian is kept for the next step.
    pub jacobian_reuse_theta: T,
    pub max_steps: usize,
    pub controller: ControllerConfig<T>,
}

impl<T: Real> Default for RadauConfig<T> {
    fn default() -> Self {
        RadauConfig {
            abs_tol: T::lit(1e-6),
            rel_tol: T::lit(1e-6),
            dt_min: T::lit(1e-14),
            dt_max: T::infinity(),
            dt_init: None,
            newton_max_iter: 7,
            newton_tol: None,
            jacobian_reuse_theta: T::lit(1e-3),
            max_steps: 1_000_000,
            controller: ControllerConfig::default(),
        }
    }
}

impl<T: Real> RadauConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > T::zero()
            && self.rel_tol > T::zero()
            && self.dt_min > T::zero()
            && self.dt_min <= self.dt_max
            && self.newton_max_iter >= 2
            && self.controller.safety > T::zero()
            && self.controller.safety <= T::one();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid Radau configuration: {self:?}")))
        }
    }

    fn fnewt(&self) -> T {
        self.newton_tol.unwrap_or_else(|| {
            let eps = T::epsilon();
            (T::lit(10.0) * eps / self.rel_tol).max(T::lit(0.03).min(self.rel_tol.sqrt()))
        })
    }
}

/// Coefficients of the method in the form used by the solver.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tableau<T> {
    pub c: [T; 3],
    pub a_inv: [[T; 3]; 3],
    /// `T⁻¹ A⁻¹ T = diag(γ, [[α, −β], [β, α]])`.
    pub t: [[T; 3]; 3],
    pub ti: [[T; 3]; 3],
    pub gamma: T,
    pub alpha: T,
    pub beta: T,
    pub dd: [T; 3],
}

pub(crate) fn butcher_a() -> [[f64; 3]; 3] {
    let s6 = 6f64.sqrt();
    [
        [(88.0 - 7.0 * s6) / 360.0, (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0],
        [(296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0, (-2.0 - 3.0 * s6) / 225.0],
        [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
    ]
}

impl<T: Real> Tableau<T> {
    #[allow(clippy::excessive_precision)]
    pub(crate) fn new() -> Self {
        let s6 = 6f64.sqrt();
        let cbrt81 = 81f64.cbrt();
        let cbrt9 = 9f64.cbrt();
        let gamma = 30.0 / (6.0 + cbrt81 - cbrt9);
        let alph = (12.0 - cbrt81 + cbrt9) / 60.0;
        let beta = (cbrt81 + cbrt9) * 3f64.sqrt() / 60.0;
        let cno = alph * alph + beta * beta;
        let t = [
            [9.1232394870892942792e-02, -0.14125529502095420843, -3.0029194105147424492e-02],
            [0.24171793270710701896, 0.20412935229379993199, 0.38294211275726193779],
            [0.96604818261509293619, 1.0, 0.0],
        ];
        let ti = [
            [4.3255798900631553510, 0.33919925181580986954, 0.54177053993587487119],
            [-4.1787185915519047273, -0.32768282076106238708, 0.47662355450055045196],
            [-0.50287263494578687595, 2.5719269498556054292, -0.59603920482822492497],
        ];
        let a_inv = small::inverse(&butcher_a()).expect("Radau IIA matrix is invertible");
        let lit3 = |m: [[f64; 3]; 3]| m.map(|r| r.map(T::lit));
        Tableau {
            c: [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0].map(T::lit),
            a_inv: lit3(a_inv),
            t: lit3(t),
            ti: lit3(ti),
            gamma: T::lit(gamma),
            alpha: T::lit(alph / cno),
            beta: T::lit(beta / cno),
            dd: [-(13.0 + 7.0 * s6) / 3.0, (-13.0 + 7.0 * s6) / 3.0, -1.0 / 3.0].map(T::lit),
        }
    }
}

enum Newton<T> {
    Converged { z: [Vec<T>; 3], theta: T },
    /// Converging too slowly: retry with `h·factor`.
    Slow { factor: T },
    Diverged,
}

struct Radau<'a, T: Real, O: ?Sized> {
    ode: &'a O,
    cfg: &'a RadauConfig<T>,
    tab: Tableau<T>,
    n: usize,
    pattern: JacobianPattern,
    jac: BandedMatrix<T>,
    mass_bar: BandedMatrix<T>,
    e1: Option<BandedLu<T>>,
    e2: Option<BandedLu<T::Complex>>,
    stats: IntegrationStats<T>,
    fnewt: T,
}

impl<'a, T: Real, O: OdeSystem<T> + ?Sized> Radau<'a, T, O> {
    fn new(ode: &'a O, cfg: &'a RadauConfig<T>) -> Self {
        let n = ode.dim();
        let pattern = JacobianPattern::new(ode.sparsity());
        let jac = pattern.sparsity.banded_zeros();
        let mut mass_bar = jac.clone();
        for i in 0..n {
            mass_bar.set(i, i, T::one());
        }
        Radau {
            ode,
            cfg,
            tab: Tableau::new(),
            n,
            pattern,
            jac,
            mass_bar,
            e1: None,
            e2: None,
            stats: IntegrationStats::default(),
            fnewt: cfg.fnewt(),
        }
    }

    fn rhs(&mut self, t: T, y: &[T], out: &mut [T]) {
        self.stats.rhs_evals += 1;
        self.ode.rhs(t, y, out);
    }

    fn update_jacobian(&mut self, t: T, y: &[T], f0: &[T]) {
        self.stats.jacobian_evals += 1;
        self.stats.rhs_evals += self.pattern.groups.count();
        self.ode.jacobian(t, y, f0, &self.pattern, &mut self.jac);
    }

    fn factor(&mut self, t: T, h: T) -> bool {
        self.stats.factorizations += 1;
        if self.ode.has_mass() {
            self.ode.mass(t + h, &mut self.mass_bar);
        }
        let tab = self.tab;
        let e1 = BandedMatrix::<T>::combine(tab.gamma / h, &self.mass_bar, -T::one(), &self.jac).factor();
        let e2 = BandedMatrix::<T::Complex>::combine(
            T::complex(tab.alpha / h, tab.beta / h),
            &self.mass_bar,
            T::complex(-T::one(), T::zero()),
            &self.jac,
        )
        .factor();
        match (e1, e2) {
            (Ok(a), Ok(b)) => {
                self.e1 = Some(a);
                self.e2 = Some(b);
                true
            }
            _ => {
                self.e1 = None;
                self.e2 = None;
                false
            }
        }
    }

    fn mass_times(&self, m: Option<&BandedMatrix<T>>, x: &[T], out: &mut [T]) {
        match m {
            Some(m) => m.matvec(x, out),
            None => out.copy_from_slice(x),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn newton(&mut self, t: T, y: &[T], h: T, mut z: [Vec<T>; 3], scale: &[T], faccon: &mut T, theta0: T) -> Newton<T> {
        let n = self.n;
        let tab = self.tab;
        let nit = self.cfg.newton_max_iter;
        let masses: Option<Vec<BandedMatrix<T>>> = if self.ode.has_mass() {
            Some(
                tab.c
                    .iter()
                    .map(|&c| {
                        let mut m = self.mass_bar.clone();
                        self.ode.mass(t + c * h, &mut m);
                        m
                    })
                    .collect(),
            )
        } else {
            None
        };
        let mut w = transform(&tab.ti, &z);
        let mut ytmp = vec![T::zero(); n];
        let mut f = vec![T::zero(); n];
        let mut az = vec![T::zero(); n];
        let mut maz = vec![T::zero(); n];
        let mut r: [Vec<T>; 3] = std::array::from_fn(|_| vec![T::zero(); n]);
        let mut cbuf = vec![T::complex(T::zero(), T::zero()); n];
        let mut theta = theta0;
        let mut thqold = T::one();
        let mut dynold = T::one();
        *faccon = faccon.max(T::epsilon()).powf(T::lit(0.8));
        let inv_h = T::one() / h;
        let mut newt = 0usize;
        loop {
            if newt >= nit {
                return Newton::Diverged;
            }
            for i in 0..3 {
                for j in 0..n {
                    ytmp[j] = y[j] + z[i][j];
                    az[j] = tab.a_inv[i][0] * z[0][j] + tab.a_inv[i][1] * z[1][j] + tab.a_inv[i][2] * z[2][j];
                }
                self.rhs(t + tab.c[i] * h, &ytmp, &mut f);
                self.mass_times(masses.as_ref().map(|m| &m[i]), &az, &mut maz);
                for j in 0..n {
                    r[i][j] = f[j] - maz[j] * inv_h;
                }
            }
            if r.iter().any(|ri| ri.iter().any(|v| !v.is_finite())) {
                return Newton::Diverged;
            }
            let mut dw = transform(&tab.ti, &r);
            self.e1.as_ref().expect("factored").solve_in_place(&mut dw[0]);
            for j in 0..n {
                cbuf[j] = T::complex(dw[1][j], dw[2][j]);
            }
            self.e2.as_ref().expect("factored").solve_in_place(&mut cbuf);
            for j in 0..n {
                let (re, im) = T::complex_parts(cbuf[j]);
                dw[1][j] = re;
                dw[2][j] = im;
            }
            newt += 1;
            let mut sum = T::zero();
            for d in &dw {
                for j in 0..n {
                    let q = d[j] / scale[j];
                    sum += q * q;
                }
            }
            let dyno = (sum / T::from_usize_lossy(3 * n)).sqrt();
            if !dyno.is_finite() {
                return Newton::Diverged;
            }
            if newt > 1 && newt < nit {
                let thq = dyno / dynold;
                theta = if newt == 2 { thq } else { (thq * thqold).sqrt() };
                thqold = thq;
                if theta < T::lit(0.99) {
                    *faccon = theta / (T::one() - theta);
                    let remaining = T::from_usize_lossy(nit - 1 - newt);
                    let dyth = *faccon * dyno * theta.powf(remaining) / self.fnewt;
                    if dyth >= T::one() {
                        let qnewt = dyth.max(T::lit(1e-4)).min(T::lit(20.0));
                        let factor = T::lit(0.8) * qnewt.powf(-T::one() / (T::lit(4.0) + remaining));
                        return Newton::Slow { factor };
                    }
                } else {
                    return Newton::Diverged;
                }
            }
            dynold = dyno.max(T::epsilon());
            for i in 0..3 {
                for j in 0..n {
                    w[i][j] += dw[i][j];
                }
            }
            z = transform(&tab.t, &w);
            if *faccon * dyno <= self.fnewt {
                return Newton::Converged { z, theta };
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn error_estimate(&mut self, t: T, y: &[T], f0: &[T], z: &[Vec<T>; 3], h: T, scale: &[T], retry: bool) -> T {
        let n = self.n;
        let dd = self.tab.dd;
        let f2: Vec<T> = (0..n)
            .map(|j| (dd[0] * z[0][j] + dd[1] * z[1][j] + dd[2] * z[2][j]) / h)
            .collect();
        let mut mf2 = vec![T::zero(); n];
        if self.ode.has_mass() {
            // `f0` belongs to the step start, so the mass must too.
            let mut m0 = self.mass_bar.clone();
            self.ode.mass(t, &mut m0);
            m0.matvec(&f2, &mut mf2);
        } else {
            mf2.copy_from_slice(&f2);
        }
        let e1 = self.e1.as_ref().expect("factored");
        let mut cont: Vec<T> = (0..n).map(|j| mf2[j] + f0[j]).collect();
        e1.solve_in_place(&mut cont);
        let mut err = weighted_rms(&cont, scale).max(T::lit(1e-10));
        if err >= T::one() && retry {
            let ytmp: Vec<T> = (0..n).map(|j| y[j] + cont[j]).collect();
            let mut f1 = vec![T::zero(); n];
            self.rhs(t, &ytmp, &mut f1);
            let e1 = self.e1.as_ref().expect("factored");
            for j in 0..n {
                cont[j] = f1[j] + mf2[j];
            }
            e1.solve_in_place(&mut cont);
            err = weighted_rms(&cont, scale).max(T::lit(1e-10));
        }
        if err.is_finite() {
            err
        } else {
            T::infinity()
        }
    }

    fn scale(&self, y: &[T]) -> Vec<T> {
        y.iter().map(|v| self.cfg.abs_tol + self.cfg.rel_tol * v.abs()).collect()
    }

    /// Starting step from the local derivative scale (fifth-order rule).
    fn initial_step(&mut self, t: T, y: &[T], f0: &[T], span: T) -> T {
        let n = self.n;
        let mut yp = f0.to_vec();
        if self.ode.has_mass() {
            let mut m = self.mass_bar.clone();
            self.ode.mass(t, &mut m);
            match m.factor() {
                Ok(lu) => lu.solve_in_place(&mut yp),
                Err(_) => return span.min(self.cfg.dt_max) * T::lit(1e-6),
            }
        }
        let scale = self.scale(y);
        let d0 = weighted_rms(y, &scale);
        let d1 = weighted_rms(&yp, &scale);
        let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * d0 / d1
        };
        let h0 = h0.min(span);
        let y1: Vec<T> = (0..n).map(|j| y[j] + h0 * yp[j]).collect();
        let mut f1 = vec![T::zero(); n];
        self.rhs(t + h0, &y1, &mut f1);
        let mut diff: Vec<T> = (0..n).map(|j| f1[j] - f0[j]).collect();
        if self.ode.has_mass() {
            let mut m = self.mass_bar.clone();
            self.ode.mass(t + h0, &mut m);
            if let Ok(lu) = m.factor() {
                lu.solve_in_place(&mut diff);
            }
        }
        let d2 = weighted_rms(&diff, &scale) / h0;
        let h1 = if d1 <= T::lit(1e-15) && d2 <= T::lit(1e-15) {
            (h0 * T::lit(1e-3)).max(T::lit(1e-6))
        } else {
            (T::lit(0.01) / d1.max(d2)).powf(T::one() / T::lit(6.0))
        };
        (T::lit(100.0) * h0).min(h1)
    }

    fn run(&mut self, t0: T, t1: T, y0: &[T], observer: &mut dyn FnMut(&StepInfo<T>)) -> Result<IntervalResult<T>> {
        let n = self.n;
        let cfg = *self.cfg;
        let tab = self.tab;
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut f0 = vec![T::zero(); n];
        self.rhs(t, &y, &mut f0);
        let span = t1 - t0;
        let mut h = match cfg.dt_init {
            Some(h) => h,
            None => self.initial_step(t, &y, &f0, span),
        };
        h = h.min(cfg.dt_max).min(span).max(cfg.dt_min.min(span));
        let mut first = true;
        let mut reject = false;
        let mut need_jac = true;
        let mut jac_fresh = false;
        let mut faccon = T::one();
        let mut theta = cfg.jacobian_reuse_theta;
        let mut err_prev: Option<T> = None;
        let mut cont: Option<([Vec<T>; 3], T)> = None;
        let mut lu_h: Option<T> = None;
        let mut h_suggest = h;
        let mut steps = 0usize;
        let (c1, c2) = (tab.c[0], tab.c[1]);
        let c1m1 = c1 - T::one();
        let c2m1 = c2 - T::one();
        let c1mc2 = c1 - c2;

        while t < t1 {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::Integrator {
                    t: t.as_f64(),
                    reason: format!("exceeded {} steps", cfg.max_steps),
                });
            }
            let mut last = false;
            if t + h * T::lit(1.0001) >= t1 {
                h = t1 - t;
                last = true;
            }
            if need_jac {
                self.update_jacobian(t, &y, &f0);
                need_jac = false;
                jac_fresh = true;
                lu_h = None;
            }
            if lu_h != Some(h) {
                if self.factor(t, h) {
                    lu_h = Some(h);
                } else {
                    lu_h = None;
                    self.stats.rejected += 1;
                    reject = true;
                    h = self.shrink(t, &y, h, T::lit(0.5))?;
                    continue;
                }
            }
            let scale = self.scale(&y);
            let z0: [Vec<T>; 3] = match (&cont, first) {
                (Some((ak, h_old)), false) => {
                    let c3q = h / *h_old;
                    let cq = [c1 * c3q, c2 * c3q, c3q];
                    std::array::from_fn(|i| {
                        let q = cq[i];
                        (0..n)
                            .map(|j| q * (ak[0][j] + (q - c2m1) * (ak[1][j] + (q - c1m1) * ak[2][j])))
                            .collect()
                    })
                }
                _ => std::array::from_fn(|_| vec![T::zero(); n]),
            };
            match self.newton(t, &y, h, z0, &scale, &mut faccon, theta) {
                Newton::Diverged => {
                    self.stats.rejected += 1;
                    reject = true;
                    if !jac_fresh {
                        need_jac = true;
                    }
                    h = self.shrink(t, &y, h, T::lit(0.5))?;
                }
                Newton::Slow { factor } => {
                    self.stats.rejected += 1;
                    reject = true;
                    if !jac_fresh {
                        need_jac = true;
                    }
                    h = self.shrink(t, &y, h, factor)?;
                }
                Newton::Converged { z, theta: th } => {
                    theta = th;
                    let err = self.error_estimate(t, &y, &f0, &z, h, &scale, first || reject);
                    let accepted = err < T::one();
                    let h_new = step_controller(h, err, err_prev, accepted, &cfg.controller, cfg.dt_min, cfg.dt_max);
                    if accepted {
                        let mut ak: [Vec<T>; 3] = std::array::from_fn(|_| vec![T::zero(); n]);
                        for j in 0..n {
                            let (z1, z2, z3) = (z[0][j], z[1][j], z[2][j]);
                            let a1 = (z2 - z3) / c2m1;
                            let a = (z1 - z2) / c1mc2;
                            let acont3 = (a - z1 / c1) / c2;
                            let a2 = (a - a1) / c1m1;
                            ak[0][j] = a1;
                            ak[1][j] = a2;
                            ak[2][j] = a2 - acont3;
                            y[j] += z3;
                        }
                        t = if last { t1 } else { t + h };
                        self.rhs(t, &y, &mut f0);
                        if y.iter().any(|v| !v.is_finite()) {
                            return Err(Error::Integrator {
                                t: t.as_f64(),
                                reason: "non-finite state".into(),
                            });
                        }
                        self.stats.record_step(h);
                        observer(&StepInfo { t, y: &y, dt: h, error: err });
                        err_prev = Some(err.max(T::lit(1e-2)));
                        let mut h_next = if reject { h_new.min(h) } else { h_new };
                        h_suggest = h_next;
                        first = false;
                        reject = false;
                        jac_fresh = false;
                        cont = Some((ak, h));
                        let qt = h_next / h;
                        if theta <= cfg.jacobian_reuse_theta {
                            if qt >= T::one() && qt <= T::lit(1.2) {
                                h_next = h;
                            }
                        } else {
                            need_jac = true;
                        }
                        h = h_next;
                    } else {
                        self.stats.rejected += 1;
                        let next = if first { h * T::lit(0.1) } else { h_new };
                        reject = true;
                        if !jac_fresh {
                            need_jac = true;
                        }
                        if next < cfg.dt_min {
                            return Err(self.too_small(t, &y, next));
                        }
                        h = next;
                    }
                }
            }
        }
        Ok(IntervalResult {
            y,
            stats: self.stats,
            next_dt: h_suggest,
        })
    }

    fn shrink(&self, t: T, y: &[T], h: T, factor: T) -> Result<T> {
        let next = h * factor;
        if next < self.cfg.dt_min {
            Err(self.too_small(t, y, next))
        } else {
            Ok(next)
        }
    }

    fn too_small(&self, t: T, y: &[T], dt: T) -> Error {
        let (lo, hi) = y
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
        log::error!(
            "Radau step size {:e} below minimum at t = {t}; state range [{lo}, {hi}], stats {:?}",
            dt.as_f64(),
            self.stats
        );
        Error::StepTooSmall {
            t: t.as_f64(),
            dt: dt.as_f64(),
        }
    }
}

fn transform<T: Real>(m: &[[T; 3]; 3], v: &[Vec<T>; 3]) -> [Vec<T>; 3] {
    let n = v[0].len();
    std::array::from_fn(|i| {
        (0..n)
            .map(|j| m[i][0] * v[0][j] + m[i][1] * v[1][j] + m[i][2] * v[2][j])
            .collect()
    })
}

/// One Radau IIA step of size `dt` from `(t, y)` with a fresh Jacobian and
/// zero starting guess. Returns the order-5 solution and the normalized
/// error estimate.
pub fn radau_step<T: Real, O: OdeSystem<T> + ?Sized>(
    ode: &O,
    t: T,
    y: &[T],
    dt: T,
    cfg: &RadauConfig<T>,
) -> Result<(Vec<T>, T)> {
    cfg.validate()?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("step size {dt} must be positive")));
    }
    let mut s = Radau::new(ode, cfg);
    let n = s.n;
    let mut f0 = vec![T::zero(); n];
    s.rhs(t, y, &mut f0);
    s.update_jacobian(t, y, &f0);
    if !s.factor(t, dt) {
        return Err(Error::Integrator {
            t: t.as_f64(),
            reason: "singular iteration matrix".into(),
        });
    }
    let scale = s.scale(y);
    let mut faccon = T::one();
    let z0 = std::array::from_fn(|_| vec![T::zero(); n]);
    match s.newton(t, y, dt, z0, &scale, &mut faccon, cfg.jacobian_reuse_theta) {
        Newton::Converged { z, .. } => {
            let err = s.error_estimate(t, y, &f0, &z, dt, &scale, true);
            let y_next = y.iter().zip(&z[2]).map(|(&a, &b)| a + b).collect();
            Ok((y_next, err))
        }
        _ => Err(Error::Integrator {
            t: t.as_f64(),
            reason: "Newton iteration failed to converge".into(),
        }),
    }
}

/// Integrates from `t0` to exactly `t1`.
pub fn integrate_interval<T: Real, O: OdeSystem<T> + ?Sized>(
    ode: &O,
    t0: T,
    t1: T,
    y0: &[T],
    cfg: &RadauConfig<T>,
) -> Result<IntervalResult<T>> {
    integrate_interval_with(ode, t0, t1, y0, cfg, |_| {})
}

/// As [`integrate_interval`], calling `observer` after every accepted step.
pub fn integrate_interval_with<T: Real, O: OdeSystem<T> + ?Sized>(
    ode: &O,
    t0: T,
    t1: T,
    y0: &[T],
    cfg: &RadauConfig<T>,
    mut observer: impl FnMut(&StepInfo<T>),
) -> Result<IntervalResult<T>> {
    cfg.validate()?;
    if y0.len() != ode.dim() {
        return Err(Error::DimensionMismatch {
            expected: ode.dim(),
            found: y0.len(),
        });
    }
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter(format!("interval [{t0}, {t1}] is reversed")));
    }
    if t1 == t0 {
        return Ok(IntervalResult {
            y: y0.to_vec(),
            stats: IntegrationStats::default(),
            next_dt: cfg.dt_init.unwrap_or(cfg.dt_max),
        });
    }
    Radau::new(ode, cfg).run(t0, t1, y0, &mut observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Sparsity;
    use crate::timeint::JacobianPattern;

    /// `y' = λ y` componentwise with an exact Jacobian.
    struct Linear {
        lambda: Vec<f64>,
    }

    impl OdeSystem<f64> for Linear {
        fn dim(&self) -> usize {
            self.lambda.len()
        }
        fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
            for i in 0..y.len() {
                out[i] = self.lambda[i] * y[i];
            }
        }
        fn sparsity(&self) -> Sparsity {
            Sparsity::new((0..self.dim()).map(|i| vec![i]).collect())
        }
        fn jacobian(&self, _t: f64, _y: &[f64], _f0: &[f64], _p: &JacobianPattern, out: &mut BandedMatrix<f64>) {
            for i in 0..self.dim() {
                out.set(i, i, self.lambda[i]);
            }
        }
    }

    /// Padé (2,3) stability function of the method.
    fn stability(z: f64) -> f64 {
        (1.0 + 2.0 * z / 5.0 + z * z / 20.0) / (1.0 - 3.0 * z / 5.0 + 3.0 * z * z / 20.0 - z * z * z / 60.0)
    }

    #[test]
    fn transformation_block_structure() {
        let tab = Tableau::<f64>::new();
        let ainv = tab.a_inv;
        let mut prod = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        prod[i][j] += tab.ti[i][k] * ainv[k][l] * tab.t[l][j];
                    }
                }
            }
        }
        let expect = [[tab.gamma, 0.0, 0.0], [0.0, tab.alpha, -tab.beta], [0.0, tab.beta, tab.alpha]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((prod[i][j] - expect[i][j]).abs() < 1e-12, "{i}{j}: {prod:?}");
            }
        }
        let a = butcher_a();
        for i in 0..3 {
            let row: f64 = a[i].iter().sum();
            assert!((row - tab.c[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_matches_stability_function() {
        let ode = Linear { lambda: vec![-1.0] };
        let cfg = RadauConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let (y, _) = radau_step(&ode, 0.0, &[1.0], 0.1, &cfg).unwrap();
        assert!((y[0] - stability(-0.1)).abs() < 1e-15);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-9);
        let stiff = Linear { lambda: vec![-1e6] };
        let (y, _) = radau_step(&stiff, 0.0, &[1.0], 1.0, &cfg).unwrap();
        assert!(y[0].abs() < 1e-5);
        assert!((y[0] - stability(-1e6)).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_is_exact() {
        let ode = Linear { lambda: vec![0.0, 0.0] };
        let (y, _) = radau_step(&ode, 0.0, &[1.5, -2.0], 0.3, &RadauConfig::default()).unwrap();
        assert_eq!(y, vec![1.5, -2.0]);
        let r = integrate_interval(&ode, 0.0, 0.0, &[3.0, 4.0], &RadauConfig::default()).unwrap();
        assert_eq!(r.y, vec![3.0, 4.0]);
    }

    #[test]
    fn adaptive_integration_lands_on_end() {
        let ode = Linear { lambda: vec![-1.0, -50.0] };
        let cfg = RadauConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            ..Default::default()
        };
        let mut last_t = 0.0;
        let r = integrate_interval_with(&ode, 0.0, 2.0, &[1.0, 1.0], &cfg, |s| {
            assert!(s.error < 1.0);
            last_t = s.t;
        })
        .unwrap();
        assert_eq!(last_t, 2.0);
        assert!((r.y[0] - (-2.0f64).exp()).abs() < 1e-7);
        assert!(r.y[1].abs() < 1e-9);
    }
}
