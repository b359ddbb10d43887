//! Semi-explicit index-1 DAEs
//!
//! ```text
//! ẏᵈ = rᵈ(x, y, t),   0 = cᵃ(x, y, t),   yᵈ(0) = uᵈ(x),   y = (yᵈ, yᵃ)
//! ```
//!
//! with `∂cᵃ/∂yᵃ` invertible along the solution, summarized by `y(τ)`.
//!
//! The forward scheme is half-explicit: the differential states are advanced
//! by an explicit Runge–Kutta method and the algebraic states are projected
//! back onto `cᵃ = 0` by Newton at every stage.
//!
//! [`dae_adjoint_reverse`] integrates the adjoint backwards in time. With
//! `a` the adjoint of the differential states and `ν` the pointwise algebraic
//! multiplier,
//!
//! ```text
//! ν   = −(∂cᵃ/∂yᵃ)⁻ᵀ (∂rᵈ/∂yᵃ)ᵀ a
//! ȧ   = −(∂rᵈ/∂yᵈ)ᵀ a − (∂cᵃ/∂yᵈ)ᵀ ν
//! ρ   = −(∂cᵃ/∂yᵃ)⁻ᵀ αᵃ            at τ
//! a(τ) = αᵈ + (∂cᵃ/∂yᵈ)ᵀ ρ
//! ∇   = (∂uᵈ/∂x)ᵀ a(0) + ∫₀^τ (∂rᵈ/∂x)ᵀ a + (∂cᵃ/∂x)ᵀ ν dt + (∂cᵃ/∂x)ᵀ ρ |τ
//! ```
//!
//! [`reduce_to_ode`] eliminates `yᵃ` inside the right-hand side instead and
//! serves as an independent route to the same derivatives.

use std::sync::{Arc, Mutex};

use crate::ad::{Tape, TapeBuilder, Var};
use crate::algebraic::{self, ConstraintSystem};
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, lu_solve, DenseMatrix};
use crate::newton::NewtonConfig;
use crate::ode::{self, solve_ivp, DenseTrajectory, IntegratorConfig, Knot, OdeSystem};

/// `rᵈ(x, y, t)` or `cᵃ(x, y, t)` over the full state `y = (yᵈ, yᵃ)`.
pub type DaeFn = dyn for<'t> Fn(&[Var<'t>], &[Var<'t>], Var<'t>) -> Vec<Var<'t>> + Send + Sync;

#[derive(Clone)]
pub struct DaeSystem {
    dim_x: usize,
    dim_d: usize,
    dim_a: usize,
    horizon: f64,
    rhs: Arc<DaeFn>,
    constraint: Arc<DaeFn>,
    initial: Arc<ode::InitialFn>,
    algebraic_guess: Vec<f64>,
    newton: NewtonConfig,
    // cᵃ as a constraint on yᵃ with parameters [x, yᵈ, t]
    projection: ConstraintSystem,
}

impl std::fmt::Debug for DaeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DaeSystem")
            .field("dim_x", &self.dim_x)
            .field("dim_d", &self.dim_d)
            .field("dim_a", &self.dim_a)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl DaeSystem {
    pub fn new<R, C, U>(
        dim_x: usize,
        dim_d: usize,
        dim_a: usize,
        horizon: f64,
        rhs: R,
        constraint: C,
        initial: U,
    ) -> Result<Self>
    where
        R: for<'t> Fn(&[Var<'t>], &[Var<'t>], Var<'t>) -> Vec<Var<'t>> + Send + Sync + 'static,
        C: for<'t> Fn(&[Var<'t>], &[Var<'t>], Var<'t>) -> Vec<Var<'t>> + Send + Sync + 'static,
        U: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync + 'static,
    {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Contract(format!("horizon must be positive, got {horizon}")));
        }
        let constraint: Arc<DaeFn> = Arc::new(constraint);
        let c = Arc::clone(&constraint);
        let projection = ConstraintSystem::new(dim_x + dim_d + 1, dim_a, move |p, ya| {
            let (x, rest) = p.split_at(dim_x);
            let (d, t) = rest.split_at(dim_d);
            let y: Vec<Var<'_>> = d.iter().chain(ya).copied().collect();
            c(x, &y, t[0])
        });
        Ok(Self {
            dim_x,
            dim_d,
            dim_a,
            horizon,
            rhs: Arc::new(rhs),
            constraint,
            initial: Arc::new(initial),
            algebraic_guess: vec![0.0; dim_a],
            newton: NewtonConfig::default(),
            projection,
        })
    }

    /// Starting point for the initial algebraic solve (zeros by default).
    pub fn with_algebraic_guess(mut self, guess: Vec<f64>) -> Result<Self> {
        if guess.len() != self.dim_a {
            return Err(Error::dims("algebraic guess", self.dim_a, guess.len()));
        }
        self.algebraic_guess = guess;
        Ok(self)
    }

    pub fn with_newton(mut self, cfg: NewtonConfig) -> Self {
        self.newton = cfg;
        self
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

    pub fn dim_differential(&self) -> usize {
        self.dim_d
    }

    pub fn dim_algebraic(&self) -> usize {
        self.dim_a
    }

    pub fn dim_state(&self) -> usize {
        self.dim_d + self.dim_a
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::dims("DAE input", self.dim_x, x.len()));
        }
        Ok(())
    }

    fn params(x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(x.len() + d.len() + 1);
        p.extend_from_slice(x);
        p.extend_from_slice(d);
        p.push(t);
        p
    }

    fn apply_rhs<'t>(&self, x: &[Var<'t>], y: &[Var<'t>], t: Var<'t>) -> Result<Vec<Var<'t>>> {
        let out = (self.rhs)(x, y, t);
        if out.len() != self.dim_d {
            return Err(Error::dims("differential right-hand side", self.dim_d, out.len()));
        }
        Ok(out)
    }

    fn apply_constraint<'t>(&self, x: &[Var<'t>], y: &[Var<'t>], t: Var<'t>) -> Result<Vec<Var<'t>>> {
        let out = (self.constraint)(x, y, t);
        if out.len() != self.dim_a {
            return Err(Error::dims("algebraic constraint", self.dim_a, out.len()));
        }
        Ok(out)
    }

    pub fn initial_differential(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let b = TapeBuilder::passive();
        let xs = b.inputs(x);
        let out: Vec<f64> = (self.initial)(&xs).iter().map(Var::value).collect();
        if out.len() != self.dim_d {
            return Err(Error::dims("initial differential state", self.dim_d, out.len()));
        }
        if let Some(msg) = b.poisoned() {
            return Err(Error::Program(msg));
        }
        Ok(out)
    }

    /// Solves `cᵃ(x, (yᵈ, ·), t) = 0` by Newton from `guess`.
    pub fn solve_algebraic(&self, x: &[f64], d: &[f64], t: f64, guess: &[f64]) -> Result<Vec<f64>> {
        if self.dim_a == 0 {
            return Ok(Vec::new());
        }
        let p = Self::params(x, d, t);
        Ok(algebraic::newton_solve(&self.projection, &p, guess, &self.newton, false)?.y_star)
    }

    /// `ẏᵃ = −(∂cᵃ/∂yᵃ)⁻¹((∂cᵃ/∂yᵈ)ẏᵈ + ∂cᵃ/∂t)`.
    pub fn algebraic_rate(&self, x: &[f64], d: &[f64], ya: &[f64], t: f64, d_rate: &[f64]) -> Result<Vec<f64>> {
        if self.dim_a == 0 {
            return Ok(Vec::new());
        }
        let p = Self::params(x, d, t);
        let mut v = vec![0.0; self.dim_x];
        v.extend_from_slice(d_rate);
        v.push(1.0);
        algebraic::ift_forward(&self.projection, &p, ya, &v)
    }

    /// `cᵃ(x, y, t)`.
    pub fn constraint_residual(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        let b = TapeBuilder::passive();
        let xs = b.inputs(x);
        let ys = b.inputs(y);
        let out = self.apply_constraint(&xs, &ys, b.constant(t))?;
        Ok(out.iter().map(Var::value).collect())
    }

    fn rhs_value(&self, x: &[f64], y: &[f64], t: f64) -> Result<Vec<f64>> {
        let b = TapeBuilder::passive();
        let xs = b.inputs(x);
        let ys = b.inputs(y);
        let out = self.apply_rhs(&xs, &ys, b.constant(t))?;
        if let Some(msg) = b.poisoned() {
            return Err(Error::Program(msg));
        }
        Ok(out.iter().map(Var::value).collect())
    }

    /// `[rᵈ; cᵃ]` recorded at `(x, y, t)` with inputs `[x, yᵈ, yᵃ]`.
    fn combined_tape(&self, x: &[f64], y: &[f64], t: f64) -> Result<Tape> {
        let b = TapeBuilder::new();
        let xs = b.inputs(x);
        let ys = b.inputs(y);
        let tv = b.constant(t);
        let mut out = self.apply_rhs(&xs, &ys, tv)?;
        out.extend(self.apply_constraint(&xs, &ys, tv)?);
        b.finish(&out)
    }

    fn initial_tape(&self, x: &[f64]) -> Result<Tape> {
        let b = TapeBuilder::new();
        let xs = b.inputs(x);
        let out = (self.initial)(&xs);
        if out.len() != self.dim_d {
            return Err(Error::dims("initial differential state", self.dim_d, out.len()));
        }
        b.finish(&out)
    }
}

/// Differential part prescribed by `uᵈ(x)`, algebraic part solved from `cᵃ = 0`.
pub fn consistent_initialize(sys: &DaeSystem, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d0 = sys.initial_differential(x)?;
    let ya0 = sys
        .solve_algebraic(x, &d0, 0.0, &sys.algebraic_guess)
        .map_err(|e| Error::InconsistentInitialization { reason: e.to_string() })?;
    Ok((d0, ya0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeTrajectory {
    /// `(t, yᵈ, ẏᵈ)` at the accepted steps.
    pub differential: DenseTrajectory,
    /// `(t, yᵃ, ẏᵃ)` at the same times.
    pub algebraic: DenseTrajectory,
}

impl DaeTrajectory {
    pub fn final_state(&self) -> Vec<f64> {
        let mut y = self.differential.final_state().to_vec();
        y.extend_from_slice(self.algebraic.final_state());
        y
    }

    pub fn state_at_knot(&self, k: usize) -> Vec<f64> {
        let mut y = self.differential.knots()[k].y.clone();
        y.extend_from_slice(&self.algebraic.knots()[k].y);
        y
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.differential.knots().iter().map(|k| k.t)
    }

    /// Full state at `t`: Hermite interpolation of `yᵈ`, then `yᵃ` projected
    /// onto the constraint starting from its own interpolant.
    pub fn interpolate(&self, sys: &DaeSystem, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut y = self.differential.interpolate(t)?;
        if sys.dim_a > 0 {
            let guess = self.algebraic.interpolate(t)?;
            let ya = sys.solve_algebraic(x, &y, t, &guess).map_err(|e| Error::IntegrationFailure {
                t,
                reason: format!("algebraic projection failed: {e}"),
            })?;
            y.extend(ya);
        }
        Ok(y)
    }

    /// ‖cᵃ‖∞ over all knots.
    pub fn max_constraint_residual(&self, sys: &DaeSystem, x: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (k, t) in self.times().enumerate() {
            let r = sys.constraint_residual(x, &self.state_at_knot(k), t)?;
            worst = r.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        Ok(worst)
    }
}

pub fn dae_integrate(sys: &DaeSystem, x: &[f64], cfg: &IntegratorConfig) -> Result<DaeTrajectory> {
    let (d0, a0) = consistent_initialize(sys, x)?;
    let warm = Mutex::new(a0.clone());
    let project = |t: f64, d: &[f64]| -> Result<Vec<f64>> {
        let mut guess = warm.lock().unwrap_or_else(|p| p.into_inner());
        let ya = sys.solve_algebraic(x, d, t, &guess).map_err(|e| Error::IntegrationFailure {
            t,
            reason: format!("algebraic projection failed: {e}"),
        })?;
        guess.clone_from(&ya);
        Ok(ya)
    };
    let rhs = |t: f64, d: &[f64]| -> Result<Vec<f64>> {
        let ya = project(t, d)?;
        let y: Vec<f64> = d.iter().chain(&ya).copied().collect();
        sys.rhs_value(x, &y, t)
    };
    let differential = solve_ivp(rhs, sys.horizon, d0, cfg)?;
    let mut knots = Vec::with_capacity(differential.knots().len());
    *warm.lock().unwrap_or_else(|p| p.into_inner()) = a0;
    for k in differential.knots() {
        let ya = project(k.t, &k.y)?;
        let dy = sys.algebraic_rate(x, &k.y, &ya, k.t, &k.dy)?;
        knots.push(Knot { t: k.t, y: ya, dy });
    }
    Ok(DaeTrajectory {
        differential,
        algebraic: DenseTrajectory::from_knots(knots)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaeAdjoint {
    pub gradient: Vec<f64>,
    /// `λᵈ(t) = a(τ) − a(t)`, zero at `τ`.
    pub lambda_differential: DenseTrajectory,
    /// Pointwise algebraic multipliers `λᵃ(t) = ν(t)` at the backward knots.
    pub lambda_algebraic: Vec<(f64, Vec<f64>)>,
    /// `ρ = −(∂cᵃ/∂yᵃ)⁻ᵀαᵃ` at `τ`.
    pub terminal_multiplier: Vec<f64>,
    pub quadrature: Vec<f64>,
}

/// `(−(∂cᵃ/∂yᵃ)⁻ᵀ w)` from a combined tape.
fn algebraic_multiplier(sys: &DaeSystem, tape: &Tape, w: &[f64]) -> Result<Vec<f64>> {
    let (i, d, a) = (sys.dim_x, sys.dim_d, sys.dim_a);
    let cols = tape.jacobian_columns(i + d..i + d + a)?;
    let mut c_a = DenseMatrix::zeros(a, a);
    for r in 0..a {
        c_a.set_row(r, cols.row(d + r));
    }
    let lu = lu_factor(&c_a)?;
    let nu = lu_solve(&lu, w, true).map_err(|e| e.implicit("algebraic adjoint"))?;
    Ok(nu.into_iter().map(|v| -v).collect())
}

/// Gradient of `αᵀy(τ)` by the DAE adjoint.
pub fn dae_adjoint_reverse(
    sys: &DaeSystem,
    x: &[f64],
    trajectory: &DaeTrajectory,
    alpha: &[f64],
    cfg: &IntegratorConfig,
) -> Result<DaeAdjoint> {
    sys.check_x(x)?;
    let (i, d, a) = (sys.dim_x, sys.dim_d, sys.dim_a);
    if alpha.len() != d + a {
        return Err(Error::dims("cotangent", d + a, alpha.len()));
    }
    let tau = sys.horizon;
    let span_tol = 1e-12 * tau.max(1.0);
    if (trajectory.differential.end() - tau).abs() > span_tol || trajectory.differential.start().abs() > span_tol {
        return Err(Error::IntegrationFailure {
            t: trajectory.differential.end(),
            reason: format!("trajectory does not cover [0, {tau}]"),
        });
    }

    // terminal conditions
    let y_tau = trajectory.final_state();
    let terminal = sys.combined_tape(x, &y_tau, tau)?;
    let (rho, a_tau, terminal_x) = if a > 0 {
        let rho = algebraic_multiplier(sys, &terminal, &alpha[d..])?;
        let mut seed = vec![0.0; d];
        seed.extend_from_slice(&rho);
        let cot = terminal.reverse_sweep(&seed)?;
        let a_tau: Vec<f64> = alpha[..d].iter().zip(&cot[i..i + d]).map(|(p, q)| p + q).collect();
        (rho, a_tau, cot[..i].to_vec())
    } else {
        (Vec::new(), alpha.to_vec(), vec![0.0; i])
    };

    // (da/ds, dq/ds, ν) at t = τ − s
    let pointwise = |t: f64, adj: &[f64]| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let y = trajectory.interpolate(sys, x, t)?;
        let tape = sys.combined_tape(x, &y, t)?;
        let mut seed = adj.to_vec();
        seed.resize(d + a, 0.0);
        let nu = if a > 0 {
            let w = tape.reverse_sweep(&seed)?;
            let nu = algebraic_multiplier(sys, &tape, &w[i + d..])?;
            seed[d..].copy_from_slice(&nu);
            nu
        } else {
            Vec::new()
        };
        let cot = tape.reverse_sweep(&seed)?;
        Ok((cot[i..i + d].to_vec(), cot[..i].to_vec(), nu))
    };
    let backward = |s: f64, z: &[f64]| -> Result<Vec<f64>> {
        let (da, dq, _) = pointwise((tau - s).max(0.0), &z[..d])?;
        Ok(da.into_iter().chain(dq).collect())
    };
    let mut z0 = a_tau.clone();
    z0.resize(d + i, 0.0);
    let back = solve_ivp(backward, tau, z0, cfg)?;
    let end = back.final_state();
    let quadrature = end[d..].to_vec();
    let mut gradient = sys.initial_tape(x)?.reverse_sweep(&end[..d])?;
    for ((g, q), tx) in gradient.iter_mut().zip(&quadrature).zip(&terminal_x) {
        *g += q + tx;
    }

    let mut lambda_knots = Vec::with_capacity(back.knots().len());
    let mut lambda_algebraic = Vec::with_capacity(back.knots().len());
    for k in back.knots().iter().rev() {
        let t = if k.t == tau { 0.0 } else { tau - k.t };
        lambda_knots.push(Knot {
            t,
            y: a_tau.iter().zip(&k.y[..d]).map(|(p, q)| p - q).collect(),
            dy: k.dy[..d].to_vec(),
        });
        if a > 0 {
            lambda_algebraic.push((t, pointwise(t, &k.y[..d])?.2));
        }
    }
    Ok(DaeAdjoint {
        gradient,
        lambda_differential: DenseTrajectory::from_knots(lambda_knots)?,
        lambda_algebraic,
        terminal_multiplier: rho,
        quadrature,
    })
}

/// The ODE over `yᵈ` obtained by solving `cᵃ = 0` for `yᵃ` inside the
/// right-hand side. `yᵃ` enters the recording as implicit nodes whose
/// partials come from the implicit function theorem, so first-order sweeps
/// through the reduced system are exact; second-order sweeps are refused.
pub fn reduce_to_ode(sys: &DaeSystem) -> Result<OdeSystem> {
    let dae = sys.clone();
    let warm = Arc::new(Mutex::new(sys.algebraic_guess.clone()));
    let rhs = pin_rhs(move |x, d, t| {
        let b = t.tape();
        let zero = || d.iter().map(|&v| v * 0.0).collect::<Vec<_>>();
        if b.is_nested() {
            b.poison("second-order sweeps through a reduced DAE are not supported");
            return zero();
        }
        match reduced_rhs(&dae, &warm, x, d, t) {
            Ok(out) => out,
            Err(e) => {
                b.poison(e.to_string());
                zero()
            }
        }
    });
    OdeSystem::from_parts(
        sys.dim_x,
        sys.dim_d,
        sys.horizon,
        Arc::new(rhs),
        Arc::clone(&sys.initial),
    )
}

fn pin_rhs<F>(f: F) -> F
where
    F: for<'t> Fn(&[Var<'t>], &[Var<'t>], Var<'t>) -> Vec<Var<'t>>,
{
    f
}

fn reduced_rhs<'t>(
    sys: &DaeSystem,
    warm: &Mutex<Vec<f64>>,
    x: &[Var<'t>],
    d: &[Var<'t>],
    t: Var<'t>,
) -> Result<Vec<Var<'t>>> {
    let b = t.tape();
    let xv: Vec<f64> = x.iter().map(Var::value).collect();
    let dv: Vec<f64> = d.iter().map(Var::value).collect();
    let guess = warm.lock().unwrap_or_else(|p| p.into_inner()).clone();
    let ya = sys.solve_algebraic(&xv, &dv, t.value(), &guess)?;
    warm.lock().unwrap_or_else(|p| p.into_inner()).clone_from(&ya);
    let ya_vars: Vec<Var<'t>> = if b.is_passive() || sys.dim_a == 0 {
        ya.iter().map(|&v| b.constant(v)).collect()
    } else {
        // ∂yᵃ/∂(x, yᵈ, t) = −(∂cᵃ/∂yᵃ)⁻¹ ∂cᵃ/∂(x, yᵈ, t)
        let p = DaeSystem::params(&xv, &dv, t.value());
        let np = p.len();
        let jac = sys.projection.constraint_tape(&p, &ya)?.jacobian()?;
        let mut c_a = DenseMatrix::zeros(sys.dim_a, sys.dim_a);
        for r in 0..sys.dim_a {
            c_a.set_row(r, &jac.row(r)[np..]);
        }
        let lu = lu_factor(&c_a)?;
        let mut h = DenseMatrix::zeros(sys.dim_a, np);
        for col in 0..np {
            let sol = lu_solve(&lu, &jac.column(col), false).map_err(|e| e.implicit("reduced DAE"))?;
            h.set_column(col, &sol.iter().map(|v| -v).collect::<Vec<_>>());
        }
        let operands: Vec<Var<'t>> = x.iter().chain(d).copied().chain(std::iter::once(t)).collect();
        ya.iter()
            .enumerate()
            .map(|(k, &v)| b.record_implicit(&operands, v, h.row(k)))
            .collect()
    };
    let y: Vec<Var<'t>> = d.iter().copied().chain(ya_vars).collect();
    sys.apply_rhs(x, &y, t)
}

/// Gradient of `αᵀy(τ)` through [`reduce_to_ode`]: the ODE adjoint for the
/// differential part, the constraint's implicit function theorem for `yᵃ(τ)`.
pub fn reduced_gradient(sys: &DaeSystem, x: &[f64], alpha: &[f64], cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    sys.check_x(x)?;
    let (i, d, a) = (sys.dim_x, sys.dim_d, sys.dim_a);
    if alpha.len() != d + a {
        return Err(Error::dims("cotangent", d + a, alpha.len()));
    }
    let red = reduce_to_ode(sys)?;
    let traj = ode::integrate(&red, x, cfg)?;
    let mut alpha_d = alpha[..d].to_vec();
    let mut direct = vec![0.0; i];
    if a > 0 {
        let d_tau = traj.final_state();
        let ya = sys.solve_algebraic(x, d_tau, sys.horizon, &sys.algebraic_guess)?;
        let p = DaeSystem::params(x, d_tau, sys.horizon);
        let g = algebraic::ift_reverse(&sys.projection, &p, &ya, &alpha[d..])?;
        direct.copy_from_slice(&g[..i]);
        for (ad, gd) in alpha_d.iter_mut().zip(&g[i..i + d]) {
            *ad += gd;
        }
    }
    let mut gradient = ode::adjoint_reverse(&red, x, &traj, &alpha_d, cfg)?.gradient;
    for (g, v) in gradient.iter_mut().zip(&direct) {
        *g += v;
    }
    Ok(gradient)
}

/// `dy(τ)/dx` (N×I) from forward sensitivities of the reduced system.
pub fn dae_forward_sensitivity(sys: &DaeSystem, x: &[f64], cfg: &IntegratorConfig) -> Result<DenseMatrix> {
    sys.check_x(x)?;
    let (i, d, a) = (sys.dim_x, sys.dim_d, sys.dim_a);
    let red = reduce_to_ode(sys)?;
    let fwd = ode::forward_sensitivity(&red, x, cfg)?;
    let mut s = DenseMatrix::zeros(d + a, i);
    let d_tau = &fwd.trajectory.final_state()[..d];
    let ya = sys.solve_algebraic(x, d_tau, sys.horizon, &sys.algebraic_guess)?;
    let p = DaeSystem::params(x, d_tau, sys.horizon);
    for j in 0..i {
        let mut col = fwd.sensitivity.column(j);
        if a > 0 {
            let mut v = vec![0.0; i];
            v[j] = 1.0;
            v.extend_from_slice(&col);
            v.push(0.0);
            col.extend(algebraic::ift_forward(&sys.projection, &p, &ya, &v)?);
        }
        s.set_column(j, &col);
    }
    Ok(s)
}
