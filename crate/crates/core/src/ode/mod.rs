//! Initial value problems `ẏ = r(x, y, t)`, `y(0) = u(x)`, summarized by
//! the terminal state `y(τ)`, and three ways to differentiate them:
//!
//! * [`adjoint_reverse`] integrates the adjoint system backwards in time
//!   along the stored forward trajectory, one reverse sweep through `r`
//!   per right-hand-side evaluation;
//! * [`forward_sensitivity`] integrates `S = dy/dx` alongside the state, one
//!   forward sweep through `r` per input per evaluation;
//! * [`trace_reverse_ode`] records a fixed-step RK4 solve on one tape.

mod integrator;

use std::sync::Arc;

pub use integrator::{rk4_steps, solve_ivp, DenseTrajectory, IntegratorConfig, Knot, Scheme};

use crate::ad::{Tape, TapeBuilder, Var};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// `r(x, y, t)`.
pub type RhsFn = dyn for<'t> Fn(&[Var<'t>], &[Var<'t>], Var<'t>) -> Vec<Var<'t>> + Send + Sync;
/// `u(x)`.
pub type InitialFn = dyn for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync;

#[derive(Clone)]
pub struct OdeSystem {
    dim_x: usize,
    dim_y: usize,
    horizon: f64,
    rhs: Arc<RhsFn>,
    initial: Arc<InitialFn>,
}

impl std::fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeSystem")
            .field("dim_x", &self.dim_x)
            .field("dim_y", &self.dim_y)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl OdeSystem {
    pub fn new<R, U>(dim_x: usize, dim_y: usize, horizon: f64, rhs: R, initial: U) -> Result<Self>
    where
        R: for<'t> Fn(&[Var<'t>], &[Var<'t>], Var<'t>) -> Vec<Var<'t>> + Send + Sync + 'static,
        U: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync + 'static,
    {
        Self::from_parts(dim_x, dim_y, horizon, Arc::new(rhs), Arc::new(initial))
    }

    pub(crate) fn from_parts(
        dim_x: usize,
        dim_y: usize,
        horizon: f64,
        rhs: Arc<RhsFn>,
        initial: Arc<InitialFn>,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Contract(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            dim_x,
            dim_y,
            horizon,
            rhs,
            initial,
        })
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Contract(format!("horizon must be positive, got {horizon}")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::dims("ODE input", self.dim_x, x.len()));
        }
        Ok(())
    }

    fn apply_rhs<'t>(&self, x: &[Var<'t>], y: &[Var<'t>], t: Var<'t>) -> Result<Vec<Var<'t>>> {
        let out = (self.rhs)(x, y, t);
        if out.len() != self.dim_y {
            return Err(Error::dims("right-hand side", self.dim_y, out.len()));
        }
        Ok(out)
    }

    fn apply_initial<'t>(&self, x: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        let out = (self.initial)(x);
        if out.len() != self.dim_y {
            return Err(Error::dims("initial state", self.dim_y, out.len()));
        }
        Ok(out)
    }

    pub fn initial_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let b = TapeBuilder::passive();
        let xs = b.inputs(x);
        let out = self.apply_initial(&xs)?.iter().map(Var::value).collect();
        if let Some(msg) = b.poisoned() {
            return Err(Error::Program(msg));
        }
        Ok(out)
    }

    pub fn rhs_value(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        let b = TapeBuilder::passive();
        let xs = b.inputs(x);
        let ys = b.inputs(y);
        let out = self.apply_rhs(&xs, &ys, b.constant(t))?.iter().map(Var::value).collect();
        if let Some(msg) = b.poisoned() {
            return Err(Error::Program(msg));
        }
        Ok(out)
    }

    /// `r` recorded at `(x, y, t)` with inputs `[x, y]`.
    pub fn rhs_tape(&self, x: &[f64], y: &[f64], t: f64) -> Result<Tape> {
        let b = TapeBuilder::new();
        let xs = b.inputs(x);
        let ys = b.inputs(y);
        let out = self.apply_rhs(&xs, &ys, b.constant(t))?;
        b.finish(&out)
    }

    pub fn initial_tape(&self, x: &[f64]) -> Result<Tape> {
        self.check_x(x)?;
        let b = TapeBuilder::new();
        let xs = b.inputs(x);
        let out = self.apply_initial(&xs)?;
        b.finish(&out)
    }
}

pub fn integrate(sys: &OdeSystem, x: &[f64], cfg: &IntegratorConfig) -> Result<DenseTrajectory> {
    let y0 = sys.initial_state(x)?;
    solve_ivp(|t, y| sys.rhs_value(x, y, t), sys.horizon, y0, cfg)
}

fn check_alpha(sys: &OdeSystem, alpha: &[f64]) -> Result<()> {
    if alpha.len() != sys.dim_y {
        return Err(Error::dims("cotangent", sys.dim_y, alpha.len()));
    }
    Ok(())
}

fn check_span(sys: &OdeSystem, traj: &DenseTrajectory) -> Result<()> {
    let tol = 1e-12 * sys.horizon.max(1.0);
    if traj.start().abs() > tol || (traj.end() - sys.horizon).abs() > tol {
        return Err(Error::IntegrationFailure {
            t: traj.end(),
            reason: format!(
                "trajectory covers [{}, {}], expected [0, {}]",
                traj.start(),
                traj.end(),
                sys.horizon
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeAdjoint {
    pub gradient: Vec<f64>,
    /// `λ(t)` with `λ(τ) = 0`; `a(t) = α − λ(t)` is the classical adjoint.
    pub lambda: DenseTrajectory,
    /// `∫₀^τ (∂r/∂x)ᵀ(α − λ) dt`.
    pub quadrature: Vec<f64>,
    pub backward_steps: usize,
}

/// Gradient of `αᵀy(τ)` by the adjoint method.
///
/// The backward pass runs in reversed time `s = τ − t` on the state
/// `(λ, q)`:
/// `dλ/ds = −(∂r/∂y)ᵀ(α − λ)`, `dq/ds = (∂r/∂x)ᵀ(α − λ)`,
/// reading `y(τ − s)` from the forward trajectory.
pub fn adjoint_reverse(
    sys: &OdeSystem,
    x: &[f64],
    trajectory: &DenseTrajectory,
    alpha: &[f64],
    cfg: &IntegratorConfig,
) -> Result<OdeAdjoint> {
    sys.check_x(x)?;
    check_alpha(sys, alpha)?;
    check_span(sys, trajectory)?;
    let (n, i) = (sys.dim_y, sys.dim_x);
    let tau = sys.horizon;
    let backward = |s: f64, z: &[f64]| -> Result<Vec<f64>> {
        let t = (tau - s).max(0.0);
        let y = trajectory.interpolate(t)?;
        let a: Vec<f64> = alpha.iter().zip(&z[..n]).map(|(a, l)| a - l).collect();
        let cot = sys.rhs_tape(x, &y, t)?.reverse_sweep(&a)?;
        let mut dz = Vec::with_capacity(n + i);
        dz.extend(cot[i..].iter().map(|v| -v));
        dz.extend_from_slice(&cot[..i]);
        Ok(dz)
    };
    let back = solve_ivp(backward, tau, vec![0.0; n + i], cfg)?;
    let end = back.final_state();
    let quadrature = end[n..].to_vec();
    let a0: Vec<f64> = alpha.iter().zip(&end[..n]).map(|(a, l)| a - l).collect();
    let mut gradient = sys.initial_tape(x)?.reverse_sweep(&a0)?;
    for (g, q) in gradient.iter_mut().zip(&quadrature) {
        *g += q;
    }
    let mut knots = back
        .knots()
        .iter()
        .rev()
        .map(|k| Knot {
            t: tau - k.t,
            y: k.y[..n].to_vec(),
            dy: k.dy[..n].iter().map(|v| -v).collect(),
        })
        .collect::<Vec<_>>();
    if let Some(first) = knots.first_mut() {
        first.t = 0.0;
    }
    Ok(OdeAdjoint {
        gradient,
        lambda: DenseTrajectory::from_knots(knots)?,
        quadrature,
        backward_steps: back.steps(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSensitivity {
    /// `dy(τ)/dx`, N×I.
    pub sensitivity: DenseMatrix,
    /// Forward trajectory of the augmented state `[y, S]`, `S` stored column by column.
    pub trajectory: DenseTrajectory,
}

/// Integrates `S' = ∂r/∂x + (∂r/∂y)S`, `S(0) = ∂u/∂x`, with the state.
pub fn forward_sensitivity(sys: &OdeSystem, x: &[f64], cfg: &IntegratorConfig) -> Result<ForwardSensitivity> {
    sys.check_x(x)?;
    let (n, i) = (sys.dim_y, sys.dim_x);
    let u_tape = sys.initial_tape(x)?;
    let s0 = u_tape.jacobian()?;
    let mut z0 = u_tape.output_values();
    for j in 0..i {
        z0.extend(s0.column(j));
    }
    let rhs = |t: f64, z: &[f64]| -> Result<Vec<f64>> {
        let tape = sys.rhs_tape(x, &z[..n], t)?;
        let mut dz = tape.output_values();
        let mut seed = vec![0.0; i + n];
        for j in 0..i {
            seed[..i].fill(0.0);
            seed[j] = 1.0;
            seed[i..].copy_from_slice(&z[n + j * n..n + (j + 1) * n]);
            dz.extend(tape.forward_sweep(&seed)?);
        }
        Ok(dz)
    };
    let trajectory = solve_ivp(rhs, sys.horizon, z0, cfg)?;
    let end = trajectory.final_state();
    let mut sensitivity = DenseMatrix::zeros(n, i);
    for j in 0..i {
        sensitivity.set_column(j, &end[n + j * n..n + (j + 1) * n]);
    }
    Ok(ForwardSensitivity {
        sensitivity,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrace {
    pub gradient: Vec<f64>,
    pub tape_len: usize,
    pub steps: usize,
}

/// Records every RK4 stage on one tape and reverse-sweeps it.
pub fn trace_reverse_ode(sys: &OdeSystem, x: &[f64], cfg: &IntegratorConfig, alpha: &[f64]) -> Result<OdeTrace> {
    sys.check_x(x)?;
    check_alpha(sys, alpha)?;
    cfg.validate()?;
    let Scheme::Rk4Fixed { step } = cfg.scheme else {
        return Err(Error::Contract(
            "the trace route requires the fixed-step RK4 scheme".into(),
        ));
    };
    let steps = rk4_steps(sys.horizon, step);
    if steps > cfg.max_steps {
        return Err(Error::IntegrationFailure {
            t: 0.0,
            reason: format!("{steps} fixed steps exceed the limit of {}", cfg.max_steps),
        });
    }
    let h = sys.horizon / steps as f64;
    let b = TapeBuilder::new();
    let xs = b.inputs(x);
    let mut y = sys.apply_initial(&xs)?;
    fn stage<'t>(y: &[Var<'t>], k: &[Var<'t>], ch: f64) -> Vec<Var<'t>> {
        y.iter().zip(k).map(|(&yv, &kv)| yv + kv * ch).collect()
    }
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = sys.apply_rhs(&xs, &y, b.constant(t))?;
        let k2 = sys.apply_rhs(&xs, &stage(&y, &k1, 0.5 * h), b.constant(t + 0.5 * h))?;
        let k3 = sys.apply_rhs(&xs, &stage(&y, &k2, 0.5 * h), b.constant(t + 0.5 * h))?;
        let k4 = sys.apply_rhs(&xs, &stage(&y, &k3, h), b.constant(t + h))?;
        y = (0..y.len())
            .map(|m| y[m] + (k1[m] + k2[m] * 2.0 + k3[m] * 2.0 + k4[m]) * (h / 6.0))
            .collect();
    }
    let tape = b.finish(&y)?;
    if let Some(node) = tape.nodes().iter().position(|n| !n.value.is_finite()) {
        return Err(Error::IntegrationFailure {
            t: sys.horizon,
            reason: format!("non-finite value at tape node {node}"),
        });
    }
    Ok(OdeTrace {
        gradient: tape.reverse_sweep(alpha)?,
        tape_len: tape.len(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use crate::linalg::dot;

    fn still() -> OdeSystem {
        OdeSystem::new(2, 2, 1.5, |_x, y, _t| y.iter().map(|&v| v * 0.0).collect(), |x| x.to_vec()).unwrap()
    }

    fn decay() -> OdeSystem {
        OdeSystem::new(2, 1, 1.0, |x, y, _t| vec![-(x[0] * y[0])], |x| vec![x[1] * 1.0]).unwrap()
    }

    fn harmonic() -> OdeSystem {
        OdeSystem::new(1, 2, 10.0, |x, y, _t| vec![y[1] * 1.0, -(x[0] * y[0])], |x| {
            vec![x[0].lift(1.0), x[0] * 0.0]
        })
        .unwrap()
    }

    // nonlinear, time-dependent, with coupled inputs
    fn forced() -> OdeSystem {
        OdeSystem::new(
            3,
            2,
            2.0,
            |x, y, t| {
                vec![
                    y[1] * x[0] - (y[0] * y[0]) * 0.1 + t.sin() * x[2],
                    -(y[0] * x[1]) + (y[1] * 0.3).cos() - y[1] * 0.2,
                ]
            },
            |x| vec![x[0] * x[1], x[2].exp()],
        )
        .unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn integrate_examples() {
        let traj = integrate(&still(), &[0.3, -0.8], &cfg()).unwrap();
        assert_eq!(traj.final_state(), &[0.3, -0.8]);
        let traj = integrate(&decay(), &[0.5, 2.0], &cfg()).unwrap();
        assert!((traj.final_state()[0] - 2.0 * (-0.5_f64).exp()).abs() < 1e-10);
        let k = 2.0;
        let traj = integrate(&harmonic(), &[k], &cfg()).unwrap();
        for knot in traj.knots() {
            let e = k * knot.y[0] * knot.y[0] + knot.y[1] * knot.y[1];
            assert!((e - k).abs() < 1e-8, "{e}");
        }
    }

    #[test]
    fn adjoint_examples() {
        let sys = still();
        let x = [0.3, -0.8];
        let traj = integrate(&sys, &x, &cfg()).unwrap();
        let adj = adjoint_reverse(&sys, &x, &traj, &[0.7, 0.2], &cfg()).unwrap();
        assert_eq!(adj.gradient, vec![0.7, 0.2]);
        assert!(adj.lambda.knots().iter().all(|k| k.y.iter().all(|&v| v == 0.0)));

        let sys = decay();
        let x = [0.5, 2.0];
        let traj = integrate(&sys, &x, &cfg()).unwrap();
        let adj = adjoint_reverse(&sys, &x, &traj, &[1.0], &cfg()).unwrap();
        let e = (-0.5_f64).exp();
        assert!((adj.gradient[0] + 2.0 * e).abs() < 1e-8, "{:?}", adj.gradient);
        assert!((adj.gradient[1] - e).abs() < 1e-8);
        assert_eq!(adj.lambda.end(), 1.0);
        assert_eq!(adj.lambda.final_state(), &[0.0]);
        assert_eq!(adj.lambda.start(), 0.0);
    }

    #[test]
    fn classical_adjoint_residual_at_knots() {
        let sys = forced();
        let x = [0.4, 1.2, -0.3];
        let alpha = [0.5, -1.0];
        let traj = integrate(&sys, &x, &cfg()).unwrap();
        let adj = adjoint_reverse(&sys, &x, &traj, &alpha, &cfg()).unwrap();
        let last = adj.lambda.knots().last().unwrap();
        let a_tau: Vec<f64> = alpha.iter().zip(&last.y).map(|(a, l)| a - l).collect();
        assert_eq!(a_tau, alpha);
        // da/dt = −(∂r/∂y)ᵀa with ∂r/∂y from finite differences
        for k in adj.lambda.knots().iter().step_by(3) {
            let y = traj.interpolate(k.t).unwrap();
            let ry = fd::jacobian(|y: &[f64]| sys.rhs_value(&x, y, k.t), &y, 1e-6).unwrap();
            let a: Vec<f64> = alpha.iter().zip(&k.y).map(|(a, l)| a - l).collect();
            let rhs = ry.matvec_transposed(&a);
            for m in 0..2 {
                assert!((-k.dy[m] + rhs[m]).abs() < 1e-7, "{} {}", k.dy[m], rhs[m]);
            }
        }
    }

    #[test]
    fn adjoint_matches_fd_and_forward() {
        let sys = forced();
        let x = [0.4, 1.2, -0.3];
        let alpha = [0.5, -1.0];
        let traj = integrate(&sys, &x, &cfg()).unwrap();
        let adj = adjoint_reverse(&sys, &x, &traj, &alpha, &cfg()).unwrap();
        let f = |x: &[f64]| Ok(integrate(&sys, x, &cfg())?.final_state().to_vec());
        let fdg = fd::gradient(f, &x, &alpha, 1e-5).unwrap();
        assert!(fd::max_rel_err(&adj.gradient, &fdg) < 1e-4);
        let fwd = forward_sensitivity(&sys, &x, &cfg()).unwrap();
        let v = [0.3, -0.7, 1.1];
        let lhs = dot(&alpha, &fwd.sensitivity.matvec(&v));
        let rhs = dot(&adj.gradient, &v);
        assert!((lhs - rhs).abs() < 1e-6);
    }

    #[test]
    fn forward_examples() {
        let fwd = forward_sensitivity(&still(), &[0.3, -0.8], &cfg()).unwrap();
        assert_eq!(fwd.sensitivity, DenseMatrix::identity(2));
        let fwd = forward_sensitivity(&decay(), &[0.5, 2.0], &cfg()).unwrap();
        let e = (-0.5_f64).exp();
        assert!((fwd.sensitivity[(0, 0)] + 2.0 * e).abs() < 1e-8);
        assert!((fwd.sensitivity[(0, 1)] - e).abs() < 1e-8);
    }

    #[test]
    fn trace_examples() {
        let sys = still();
        let t = trace_reverse_ode(&sys, &[0.3, -0.8], &IntegratorConfig::rk4(0.1), &[0.7, 0.2]).unwrap();
        assert_eq!(t.gradient, vec![0.7, 0.2]);
        let sys = decay();
        let x = [0.5, 2.0];
        let t = trace_reverse_ode(&sys, &x, &IntegratorConfig::rk4(1e-3), &[1.0]).unwrap();
        let traj = integrate(&sys, &x, &cfg()).unwrap();
        let adj = adjoint_reverse(&sys, &x, &traj, &[1.0], &cfg()).unwrap();
        assert!(fd::max_rel_err(&t.gradient, &adj.gradient) < 1e-6);
        let short = trace_reverse_ode(&sys, &x, &IntegratorConfig::rk4(2e-3), &[1.0]).unwrap();
        assert_eq!(short.steps * 2, t.steps);
        let per_step = (t.tape_len - short.tape_len) / (t.steps - short.steps);
        assert_eq!(t.tape_len - short.tape_len, per_step * (t.steps - short.steps));
        assert!(trace_reverse_ode(&sys, &x, &cfg(), &[1.0]).is_err());
    }

    #[test]
    fn span_mismatch_is_rejected() {
        let sys = decay();
        let x = [0.5, 2.0];
        let traj = integrate(&sys.clone().with_horizon(0.5).unwrap(), &x, &cfg()).unwrap();
        assert!(matches!(
            adjoint_reverse(&sys, &x, &traj, &[1.0], &cfg()),
            Err(Error::IntegrationFailure { .. })
        ));
    }
}
