//! Adaptive Dormand–Prince 5(4) stepper for complex linear ODEs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type C = Complex64;

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeSystem: Sync {
    fn rhs(&self, t: f64, y: &[C], dy: &mut [C]);
}

impl<F> OdeSystem for F
where
    F: Fn(f64, &[C], &mut [C]) + Sync,
{
    fn rhs(&self, t: f64, y: &[C], dy: &mut [C]) {
        self(t, y, dy)
    }
}

/// Step-size control settings.
///
/// Tolerances are meant globally: when the integration horizon is known the
/// local error of a step of size `h` is held below `tol * h / horizon`
/// (error per unit step), so errors accumulated over the whole run stay of
/// order `tol` rather than growing with the number of steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size (us); unbounded when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step_us: Option<f64>,
    /// Accepted plus rejected steps before giving up.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-9, abs_tol: 1e-11, max_step_us: None, max_steps: 5_000_000 }
    }
}

impl IntegratorConfig {
    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        IntegratorConfig { rel_tol, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("integrator tolerances must be positive".into()));
        }
        if let Some(h) = self.max_step_us {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter("max_step_us must be positive".into()));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Deviation of the conserved total probability from one at the end.
    pub norm_drift: f64,
}

// Dormand & Prince tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth- minus fourth-order weights
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = 11.0 / 84.0 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<C>; 7],
    stage: Vec<C>,
    y_new: Vec<C>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        let z = vec![C::new(0.0, 0.0); dim];
        Workspace { k: std::array::from_fn(|_| z.clone()), stage: z.clone(), y_new: z }
    }
}

/// One trial step of size `h` from `(t, y)` with `k1 = f(t, y)` already in
/// `ws.k[0]`. Leaves the fifth-order solution in `ws.y_new`, its derivative
/// in `ws.k[6]`, and returns the scaled RMS error estimate.
fn trial<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[C],
    h: f64,
    ws: &mut Workspace,
    cfg: &IntegratorConfig,
    horizon: Option<f64>,
) -> f64 {
    let Workspace { k, stage, y_new } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    let dim = y.len();

    for i in 0..dim {
        stage[i] = y[i] + k1[i] * (h * A21);
    }
    sys.rhs(t + C2 * h, stage, k2);
    for i in 0..dim {
        stage[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
    }
    sys.rhs(t + C3 * h, stage, k3);
    for i in 0..dim {
        stage[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
    }
    sys.rhs(t + C4 * h, stage, k4);
    for i in 0..dim {
        stage[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
    }
    sys.rhs(t + C5 * h, stage, k5);
    for i in 0..dim {
        stage[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
    }
    sys.rhs(t + h, stage, k6);
    for i in 0..dim {
        y_new[i] = y[i] + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * h;
    }
    sys.rhs(t + h, y_new, k7);

    let fraction = horizon.map_or(1.0, |span| (h / span).min(1.0));
    let mut acc = 0.0;
    for i in 0..dim {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let scale = fraction * (cfg.abs_tol + cfg.rel_tol * y[i].norm().max(y_new[i].norm()));
        let r = e.norm() / scale;
        acc += r * r;
    }
    (acc / dim.max(1) as f64).sqrt()
}

/// Stateful adaptive integrator; [`advance`](Self::advance) takes exactly
/// one accepted step so callers can inspect the solution between steps.
pub struct Integrator<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    cfg: IntegratorConfig,
    t: f64,
    y: Vec<C>,
    h: f64,
    ws: Workspace,
    stats: IntegratorStats,
    last_rejected: bool,
    last_error: f64,
    horizon: Option<f64>,
}

impl<'a, S: OdeSystem + ?Sized> Integrator<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: Vec<C>, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut ws = Workspace::new(y0.len());
        sys.rhs(t0, &y0, &mut ws.k[0]);
        let y_norm = y0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let f_norm = ws.k[0].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut h = if y_norm > 1e-5 && f_norm > 1e-5 { 0.01 * y_norm / f_norm } else { 1e-6 };
        if let Some(m) = cfg.max_step_us {
            h = h.min(m);
        }
        Ok(Integrator {
            sys,
            cfg,
            t: t0,
            y: y0,
            h,
            ws,
            stats: IntegratorStats { rhs_evaluations: 1, ..Default::default() },
            last_rejected: false,
            last_error: 0.0,
            horizon: None,
        })
    }

    /// Switches to error-per-unit-step control over an interval of length
    /// `span` (see [`IntegratorConfig`]).
    pub fn with_horizon(mut self, span: f64) -> Self {
        if span > 0.0 && span.is_finite() {
            self.horizon = Some(span);
        }
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C] {
        &self.y
    }

    /// Derivative at the current point.
    pub fn dy(&self) -> &[C] {
        &self.ws.k[0]
    }

    pub fn into_state(self) -> (Vec<C>, IntegratorStats) {
        (self.y, self.stats)
    }

    pub fn stats(&self) -> IntegratorStats {
        self.stats
    }

    /// Takes one accepted step, never past `t_end`.
    pub fn advance(&mut self, t_end: f64) -> Result<()> {
        let remaining = t_end - self.t;
        if remaining <= 0.0 {
            return Ok(());
        }
        loop {
            if self.stats.accepted_steps + self.stats.rejected_steps >= self.cfg.max_steps {
                return Err(Error::StepLimit { steps: self.cfg.max_steps, t: self.t, achieved_error: self.last_error });
            }
            let remaining = t_end - self.t;
            let mut h = self.h.min(remaining);
            // avoid leaving a sliver at the end of the interval
            let last = h >= remaining || remaining - h < 1e-3 * h;
            if last {
                h = remaining;
            }
            let err = trial(self.sys, self.t, &self.y, h, &mut self.ws, &self.cfg, self.horizon);
            self.stats.rhs_evaluations += 6;
            self.last_error = err;
            if err.is_finite() && err <= 1.0 {
                self.t = if last { t_end } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.ws.y_new);
                self.ws.k.swap(0, 6);
                self.stats.accepted_steps += 1;
                let mut factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if self.last_rejected {
                    factor = factor.min(1.0);
                }
                self.last_rejected = false;
                // keep the previous size when the last step was truncated
                self.h = (h * factor).max(if last { self.h } else { 0.0 });
                if let Some(m) = self.cfg.max_step_us {
                    self.h = self.h.min(m);
                }
                return Ok(());
            }
            self.stats.rejected_steps += 1;
            self.last_rejected = true;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
            self.h = h * factor;
            if self.h <= 16.0 * f64::EPSILON * self.t.abs().max(1e-300) {
                return Err(Error::StepSizeUnderflow { t: self.t, h: self.h });
            }
            if self.stats.accepted_steps + self.stats.rejected_steps >= self.cfg.max_steps {
                return Err(Error::StepLimit { steps: self.cfg.max_steps, t: self.t, achieved_error: err });
            }
        }
    }

    pub fn integrate_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            self.advance(t_end)?;
        }
        Ok(())
    }

    /// Fifth-order solution of a single unadapted step of size `h` from
    /// `(t0, y0)` with derivative `f0`; the integrator state is untouched.
    pub fn single_step(&self, t0: f64, y0: &[C], f0: &[C], h: f64) -> Vec<C> {
        let mut ws = Workspace::new(y0.len());
        ws.k[0].copy_from_slice(f0);
        trial(self.sys, t0, y0, h, &mut ws, &self.cfg, self.horizon);
        ws.y_new
    }
}
