//! Explicit Runge–Kutta integration with dense output.
//!
//! Two schemes: classical RK4 on a uniform grid, and the Dormand–Prince 5(4)
//! pair with a PI step-size controller. Both store `(t, y, ẏ)` at every
//! accepted step so the solution can be read back anywhere by cubic Hermite
//! interpolation.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Classical RK4 with the largest uniform step not exceeding `step`.
    Rk4Fixed { step: f64 },
    /// Dormand–Prince 5(4), local extrapolation, PI control.
    Rk45Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk45Adaptive,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            scheme: Scheme::Rk4Fixed { step },
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.scheme {
            Scheme::Rk4Fixed { step } => step > 0.0 && step.is_finite(),
            Scheme::Rk45Adaptive => self.rel_tol > 0.0 && self.abs_tol > 0.0,
        };
        if !ok || self.max_steps == 0 {
            return Err(Error::Contract(format!("invalid integrator configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Accepted steps of an integration, first knot at the start of the span and
/// last at its end.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    knots: Vec<Knot>,
}

impl DenseTrajectory {
    pub fn from_knots(knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Contract("a trajectory needs at least one knot".into()));
        }
        if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Contract("trajectory knots must be strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn start(&self) -> f64 {
        self.knots[0].t
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].t
    }

    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn final_state(&self) -> &[f64] {
        &self.knots[self.knots.len() - 1].y
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.knots[0].y
    }

    /// Cubic Hermite interpolation of the state.
    pub fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let slack = 1e-12 * (self.end() - self.start()).abs().max(1.0);
        if !(t >= self.start() - slack && t <= self.end() + slack) {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("outside the stored trajectory [{}, {}]", self.start(), self.end()),
            });
        }
        let k = self.knots.partition_point(|k| k.t <= t);
        if k == 0 {
            return Ok(self.knots[0].y.clone());
        }
        if k == self.knots.len() {
            return Ok(self.knots[k - 1].y.clone());
        }
        let (a, b) = (&self.knots[k - 1], &self.knots[k]);
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok((0..a.y.len())
            .map(|i| h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i])
            .collect())
    }
}

fn check_state(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure {
            t,
            reason: "non-finite state".into(),
        });
    }
    Ok(())
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for (o, v) in out.iter_mut().zip(k) {
                *o += h * c * v;
            }
        }
    }
    out
}

/// Integrates `ẏ = f(t, y)` over `[0, span]`.
pub fn solve_ivp<F>(mut f: F, span: f64, y0: Vec<f64>, cfg: &IntegratorConfig) -> Result<DenseTrajectory>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::Contract(format!("integration span must be positive, got {span}")));
    }
    check_state(0.0, &y0)?;
    let f0 = f(0.0, &y0)?;
    if f0.len() != y0.len() {
        return Err(Error::dims("right-hand side", y0.len(), f0.len()));
    }
    let first = Knot { t: 0.0, y: y0, dy: f0 };
    let knots = match cfg.scheme {
        Scheme::Rk4Fixed { step } => rk4(&mut f, span, step, first, cfg.max_steps)?,
        Scheme::Rk45Adaptive => dopri5(&mut f, span, first, cfg)?,
    };
    Ok(DenseTrajectory { knots })
}

/// Number of uniform RK4 steps for `span` at nominal `step`.
pub fn rk4_steps(span: f64, step: f64) -> usize {
    ((span / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn rk4<F>(f: &mut F, span: f64, step: f64, first: Knot, max_steps: usize) -> Result<Vec<Knot>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = rk4_steps(span, step);
    if n > max_steps {
        return Err(Error::IntegrationFailure {
            t: 0.0,
            reason: format!("{n} fixed steps exceed the limit of {max_steps}"),
        });
    }
    let h = span / n as f64;
    let mut knots = Vec::with_capacity(n + 1);
    knots.push(first);
    for i in 0..n {
        let last = &knots[i];
        let t = last.t;
        let k1 = last.dy.clone();
        let k2 = f(t + 0.5 * h, &axpy(&last.y, h, &[(0.5, &k1)]))?;
        let k3 = f(t + 0.5 * h, &axpy(&last.y, h, &[(0.5, &k2)]))?;
        let k4 = f(t + h, &axpy(&last.y, h, &[(1.0, &k3)]))?;
        let y = axpy(
            &last.y,
            h,
            &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
        );
        let t_next = if i + 1 == n { span } else { (i + 1) as f64 * h };
        check_state(t_next, &y)?;
        let dy = f(t_next, &y)?;
        knots.push(Knot { t: t_next, y, dy });
    }
    Ok(knots)
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], cfg: &IntegratorConfig) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step<F>(f: &mut F, first: &Knot, span: f64, cfg: &IntegratorConfig) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let zero = vec![0.0; first.y.len()];
    let d0 = error_norm(&first.y, &first.y, &zero, cfg);
    let d1 = error_norm(&first.dy, &first.y, &zero, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = axpy(&first.y, h0, &[(1.0, &first.dy)]);
    let f1 = f(h0, &y1)?;
    let diff: Vec<f64> = f1.iter().zip(&first.dy).map(|(a, b)| a - b).collect();
    let d2 = error_norm(&diff, &first.y, &zero, cfg) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

fn dopri5<F>(f: &mut F, span: f64, first: Knot, cfg: &IntegratorConfig) -> Result<Vec<Knot>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    const SAFETY: f64 = 0.9;
    const MIN_FACTOR: f64 = 0.2;
    const MAX_FACTOR: f64 = 10.0;
    const BETA1: f64 = 0.7 / 5.0;
    const BETA2: f64 = 0.4 / 5.0;

    let mut h = initial_step(f, &first, span, cfg)?;
    let mut knots = vec![first];
    let mut err_prev = 1e-4_f64;
    let mut rejected_last = false;
    let mut attempts = 0usize;
    loop {
        let last = &knots[knots.len() - 1];
        let t = last.t;
        if t >= span {
            break;
        }
        if attempts >= cfg.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("exceeded {} steps", cfg.max_steps),
            });
        }
        attempts += 1;
        let mut final_step = false;
        if t + h >= span || span - (t + h) < 1e-12 * span {
            h = span - t;
            final_step = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(last.dy.clone());
        for s in 1..7 {
            let terms: Vec<(f64, &[f64])> = (0..s).map(|j| (A[s][j], k[j].as_slice())).collect();
            let ys = axpy(&last.y, h, &terms);
            let ts = if s >= 5 && final_step { span } else { t + C[s] * h };
            k.push(f(ts, &ys)?);
        }
        let terms: Vec<(f64, &[f64])> = (0..6).map(|j| (A[6][j], k[j].as_slice())).collect();
        let y_new = axpy(&last.y, h, &terms);
        let err_terms: Vec<(f64, &[f64])> = (0..7).map(|j| (E[j], k[j].as_slice())).collect();
        let err_vec = axpy(&vec![0.0; last.y.len()], h, &err_terms);
        let err = error_norm(&err_vec, &last.y, &y_new, cfg);
        if !err.is_finite() {
            if y_new.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "non-finite error estimate".into(),
                });
            }
            h *= MIN_FACTOR;
            rejected_last = true;
            continue;
        }
        if err <= 1.0 {
            let t_new = if final_step { span } else { t + h };
            check_state(t_new, &y_new)?;
            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                SAFETY * err.powf(-BETA1) * err_prev.powf(BETA2)
            };
            factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
            if rejected_last {
                factor = factor.min(1.0);
            }
            err_prev = err.max(1e-4);
            rejected_last = false;
            let dy = k.pop().unwrap_or_default();
            knots.push(Knot { t: t_new, y: y_new, dy });
            h *= factor;
        } else {
            h *= (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
            rejected_last = true;
        }
    }
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_rk45() {
        let traj = solve_ivp(|_t, y| Ok(vec![-0.5 * y[0]]), 1.0, vec![2.0], &IntegratorConfig::default()).unwrap();
        assert!((traj.final_state()[0] - 2.0 * (-0.5_f64).exp()).abs() < 1e-10);
        assert_eq!(traj.start(), 0.0);
        assert_eq!(traj.end(), 1.0);
        let mid = traj.interpolate(0.37).unwrap()[0];
        assert!((mid - 2.0 * (-0.5_f64 * 0.37).exp()).abs() < 1e-8);
    }

    #[test]
    fn rk4_converges_fourth_order() {
        let err = |h: f64| {
            let traj = solve_ivp(|_t, y| Ok(vec![y[1], -y[0]]), 2.0, vec![1.0, 0.0], &IntegratorConfig::rk4(h)).unwrap();
            (traj.final_state()[0] - 2.0_f64.cos()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
        let traj = solve_ivp(|_t, _y| Ok(vec![0.0]), 1.0, vec![3.0], &IntegratorConfig::rk4(0.3)).unwrap();
        assert_eq!(traj.steps(), 4);
        assert_eq!(traj.end(), 1.0);
    }

    #[test]
    fn time_dependent_rhs() {
        let traj = solve_ivp(|t, _y| Ok(vec![t.cos()]), 3.0, vec![0.0], &IntegratorConfig::default()).unwrap();
        assert!((traj.final_state()[0] - 3.0_f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn failures() {
        let blowup = solve_ivp(|_t, y| Ok(vec![y[0] * y[0]]), 2.0, vec![1.0], &IntegratorConfig::default());
        assert!(matches!(blowup, Err(Error::IntegrationFailure { .. })), "{blowup:?}");
        let cfg = IntegratorConfig {
            max_steps: 3,
            ..Default::default()
        };
        let capped = solve_ivp(|t, _y| Ok(vec![(50.0 * t).sin()]), 10.0, vec![0.0], &cfg);
        assert!(matches!(capped, Err(Error::IntegrationFailure { .. })));
        assert!(solve_ivp(|_t, y| Ok(y.to_vec()), 0.0, vec![1.0], &IntegratorConfig::default()).is_err());
        let traj = solve_ivp(|_t, y| Ok(y.to_vec()), 1.0, vec![1.0], &IntegratorConfig::rk4(0.5)).unwrap();
        assert!(traj.interpolate(1.5).is_err());
    }

    #[test]
    fn interpolation_is_exact_at_knots() {
        let traj = solve_ivp(|_t, y| Ok(vec![-y[0]]), 1.0, vec![1.0], &IntegratorConfig::default()).unwrap();
        for k in traj.knots() {
            assert_eq!(traj.interpolate(k.t).unwrap(), k.y);
        }
    }
}
