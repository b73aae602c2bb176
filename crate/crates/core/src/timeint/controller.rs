use crate::Real;

/// Predictive two-step controller
/// `Δt·safety·err^{−k}·(err_prev/err)^{k₂}` on normalized errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig<T> {
    pub safety: T,
    pub exponent: T,
    pub history_exponent: T,
    pub max_growth: T,
    pub min_shrink: T,
}

impl<T: Real> Default for ControllerConfig<T> {
    fn default() -> Self {
        ControllerConfig {
            safety: T::lit(0.9),
            exponent: T::lit(1.0 / 6.0),
            history_exponent: T::lit(0.08),
            max_growth: T::lit(5.0),
            min_shrink: T::lit(0.2),
        }
    }
}

/// Next step size from the normalized error `err` (tolerance = 1) of the
/// step just attempted. The history factor uses `err_prev`, the error of the
/// previous accepted step, and applies only when `accepted`.
pub fn step_controller<T: Real>(
    dt: T,
    err: T,
    err_prev: Option<T>,
    accepted: bool,
    cfg: &ControllerConfig<T>,
    dt_min: T,
    dt_max: T,
) -> T {
    let err = err.max(T::lit(1e-10));
    let mut fac = cfg.safety * err.powf(-cfg.exponent);
    if accepted {
        if let Some(prev) = err_prev {
            fac *= (prev.max(T::lit(1e-10)) / err).powf(cfg.history_exponent);
        }
    } else {
        fac = fac.min(cfg.safety);
    }
    fac = fac.max(cfg.min_shrink).min(cfg.max_growth);
    (dt * fac).max(dt_min).min(dt_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_and_growth() {
        let c = ControllerConfig::<f64>::default();
        let dt = step_controller(0.1, 1.0, Some(1.0), true, &c, 1e-12, 1.0);
        assert!((dt - 0.09).abs() < 1e-15);
        let dt = step_controller(0.1, 1.0 / 64.0, None, true, &c, 1e-12, 1.0);
        assert!((dt - 0.1 * 0.9 * 2.0).abs() < 1e-12);
        assert!(step_controller(0.1, 3.0, Some(0.5), false, &c, 1e-12, 1.0) < 0.1);
        assert_eq!(step_controller(0.1, 1e-30, None, true, &c, 1e-12, 1.0), 0.5);
        assert_eq!(step_controller(0.1, 1e-30, None, true, &c, 1e-12, 0.2), 0.2);
        assert_eq!(step_controller(0.1, 1e30, None, false, &c, 1e-12, 1.0), 0.1 * 0.2);
    }
}
