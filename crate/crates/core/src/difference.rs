//! Discrete dynamical systems `y_{i+1} − y_i = Δ(y_i, x, i)`, `y_0 = u(x)`,
//! summarized by the final state `y_I`.
//!
//! The gradient of `αᵀy_I` is available through two backward recursions
//! that never assemble the `I·N × I·N` constraint Jacobian:
//!
//! * [`reverse_ift`] eliminates the block-bidiagonal system `C_yᵀγ = (0, …, α)`
//!   from the bottom up: `γ_I = α`, `γ_i = (I + ∂Δ_i/∂y_i)ᵀγ_{i+1}`;
//! * [`reverse_adjoint`] runs the adjoint difference equation
//!   `λ_I = 0`, `λ_i = λ_{i+1} − (∂Δ_i/∂y_i)ᵀ(α − λ_{i+1})`.
//!
//! The two are related by `γ_i = α − λ_i`. Each step costs one reverse
//! sweep through `Δ`.

use std::sync::Arc;

use crate::ad::{TapeBuilder, Var};
use crate::error::{Error, Result};

/// `Δ(y, x, i)`.
pub type DeltaFn = dyn for<'t> Fn(&[Var<'t>], &[Var<'t>], usize) -> Vec<Var<'t>> + Send + Sync;
/// `u(x)`.
pub type InitialFn = dyn for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync;

#[derive(Clone)]
pub struct DifferenceSystem {
    state_dim: usize,
    input_dim: usize,
    steps: usize,
    delta: Arc<DeltaFn>,
    initial: Arc<InitialFn>,
}

impl std::fmt::Debug for DifferenceSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DifferenceSystem")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("steps", &self.steps)
            .finish()
    }
}

impl DifferenceSystem {
    pub fn new<D, U>(state_dim: usize, input_dim: usize, steps: usize, delta: D, initial: U) -> Result<Self>
    where
        D: for<'t> Fn(&[Var<'t>], &[Var<'t>], usize) -> Vec<Var<'t>> + Send + Sync + 'static,
        U: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync + 'static,
    {
        if steps == 0 {
            return Err(Error::Contract("a difference system needs at least one step".into()));
        }
        Ok(Self {
            state_dim,
            input_dim,
            steps,
            delta: Arc::new(delta),
            initial: Arc::new(initial),
        })
    }

    pub fn with_steps(mut self, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Contract("a difference system needs at least one step".into()));
        }
        self.steps = steps;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::dims("difference input", self.input_dim, x.len()));
        }
        Ok(())
    }

    fn check_state<'t>(&self, out: Vec<Var<'t>>, what: &'static str) -> Result<Vec<Var<'t>>> {
        if out.len() != self.state_dim {
            return Err(Error::dims(what, self.state_dim, out.len()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    /// `y_0, …, y_I`.
    pub states: Vec<Vec<f64>>,
}

impl DiscreteTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or_default()
    }
}

pub fn simulate(sys: &DifferenceSystem, x: &[f64]) -> Result<DiscreteTrajectory> {
    sys.check_x(x)?;
    let b = TapeBuilder::passive();
    let xs = b.inputs(x);
    let y0: Vec<f64> = sys
        .check_state((sys.initial)(&xs), "initial state")?
        .iter()
        .map(Var::value)
        .collect();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedTrajectory { step: 0 });
    }
    let mut states = Vec::with_capacity(sys.steps + 1);
    states.push(y0);
    for i in 0..sys.steps {
        let b = TapeBuilder::passive();
        let ys = b.inputs(&states[i]);
        let xs = b.inputs(x);
        let delta = sys.check_state((sys.delta)(&ys, &xs, i), "delta output")?;
        let next: Vec<f64> = states[i].iter().zip(&delta).map(|(y, d)| y + d.value()).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedTrajectory { step: i + 1 });
        }
        states.push(next);
    }
    Ok(DiscreteTrajectory { states })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceGradient {
    pub gradient: Vec<f64>,
    /// Backward-recursion states indexed `1..=I` (entry `k` holds index `k + 1`):
    /// `γ_i` for [`reverse_ift`], `λ_i` for [`reverse_adjoint`].
    pub backward_states: Vec<Vec<f64>>,
    /// Reverse sweeps performed (through `Δ` and `u`).
    pub sweeps: usize,
}

/// One reverse sweep of `Δ_i` at `y_i` with cotangent `w`; returns
/// `((∂Δ_i/∂y)ᵀw, (∂Δ_i/∂x)ᵀw)`.
fn delta_vjp(sys: &DifferenceSystem, y: &[f64], x: &[f64], i: usize, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = TapeBuilder::new();
    let ys = b.inputs(y);
    let xs = b.inputs(x);
    let out = sys.check_state((sys.delta)(&ys, &xs, i), "delta output")?;
    let tape = b.finish(&out)?;
    let mut cot = tape.reverse_sweep(w)?;
    let x_part = cot.split_off(sys.state_dim);
    Ok((cot, x_part))
}

fn initial_vjp(sys: &DifferenceSystem, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let b = TapeBuilder::new();
    let xs = b.inputs(x);
    let out = sys.check_state((sys.initial)(&xs), "initial state")?;
    b.finish(&out)?.reverse_sweep(w)
}

fn check_reverse_inputs(sys: &DifferenceSystem, x: &[f64], traj: &DiscreteTrajectory, alpha: &[f64]) -> Result<()> {
    sys.check_x(x)?;
    if alpha.len() != sys.state_dim {
        return Err(Error::dims("cotangent", sys.state_dim, alpha.len()));
    }
    if traj.states.len() != sys.steps + 1 {
        return Err(Error::dims("trajectory length", sys.steps + 1, traj.states.len()));
    }
    Ok(())
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Gradient of `αᵀy_I` by backward elimination of the IFT system.
pub fn reverse_ift(
    sys: &DifferenceSystem,
    x: &[f64],
    traj: &DiscreteTrajectory,
    alpha: &[f64],
) -> Result<DifferenceGradient> {
    check_reverse_inputs(sys, x, traj, alpha)?;
    let steps = sys.steps;
    let mut gradient = vec![0.0; sys.input_dim];
    let mut gammas = vec![Vec::new(); steps];
    gammas[steps - 1] = alpha.to_vec();
    let mut sweeps = 0;
    // γ_i = γ_{i+1} + (∂Δ_i/∂y_i)ᵀγ_{i+1}, collecting (∂Δ_i/∂x)ᵀγ_{i+1}
    for i in (1..steps).rev() {
        let (dy, dx) = delta_vjp(sys, &traj.states[i], x, i, &gammas[i])?;
        sweeps += 1;
        add_into(&mut gradient, &dx);
        let mut gamma = gammas[i].clone();
        add_into(&mut gamma, &dy);
        gammas[i - 1] = gamma;
    }
    // first step carries the dependence of y_0 = u(x)
    let (dy0, dx0) = delta_vjp(sys, &traj.states[0], x, 0, &gammas[0])?;
    add_into(&mut gradient, &dx0);
    let mut w = gammas[0].clone();
    add_into(&mut w, &dy0);
    add_into(&mut gradient, &initial_vjp(sys, x, &w)?);
    sweeps += 2;
    Ok(DifferenceGradient {
        gradient,
        backward_states: gammas,
        sweeps,
    })
}

/// Gradient of `αᵀy_I` from the adjoint difference equation.
pub fn reverse_adjoint(
    sys: &DifferenceSystem,
    x: &[f64],
    traj: &DiscreteTrajectory,
    alpha: &[f64],
) -> Result<DifferenceGradient> {
    check_reverse_inputs(sys, x, traj, alpha)?;
    let steps = sys.steps;
    let n = sys.state_dim;
    let mut gradient = vec![0.0; sys.input_dim];
    let mut lambdas = vec![Vec::new(); steps];
    lambdas[steps - 1] = vec![0.0; n];
    let shifted = |lambda: &[f64]| -> Vec<f64> { alpha.iter().zip(lambda).map(|(a, l)| a - l).collect() };
    let mut sweeps = 0;
    for i in (1..steps).rev() {
        let a = shifted(&lambdas[i]);
        let (dy, dx) = delta_vjp(sys, &traj.states[i], x, i, &a)?;
        sweeps += 1;
        add_into(&mut gradient, &dx);
        lambdas[i - 1] = lambdas[i].iter().zip(&dy).map(|(l, d)| l - d).collect();
    }
    let a1 = shifted(&lambdas[0]);
    let (dy0, dx0) = delta_vjp(sys, &traj.states[0], x, 0, &a1)?;
    add_into(&mut gradient, &dx0);
    let mut w = a1;
    add_into(&mut w, &dy0);
    add_into(&mut gradient, &initial_vjp(sys, x, &w)?);
    sweeps += 2;
    Ok(DifferenceGradient {
        gradient,
        backward_states: lambdas,
        sweeps,
    })
}

/// Records the whole simulation on one tape and reverse-sweeps it.
/// Returns the gradient and the tape length.
pub fn trace_reverse(sys: &DifferenceSystem, x: &[f64], alpha: &[f64]) -> Result<(Vec<f64>, usize)> {
    sys.check_x(x)?;
    if alpha.len() != sys.state_dim {
        return Err(Error::dims("cotangent", sys.state_dim, alpha.len()));
    }
    let b = TapeBuilder::new();
    let xs = b.inputs(x);
    let mut ys = sys.check_state((sys.initial)(&xs), "initial state")?;
    for i in 0..sys.steps {
        let delta = sys.check_state((sys.delta)(&ys, &xs, i), "delta output")?;
        ys = ys.iter().zip(&delta).map(|(&y, &d)| y + d).collect();
    }
    let tape = b.finish(&ys)?;
    Ok((tape.reverse_sweep(alpha)?, tape.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use crate::linalg::{block_bidiagonal_solve, DenseMatrix};

    fn constant_delta(steps: usize) -> DifferenceSystem {
        DifferenceSystem::new(1, 1, steps, |_y, x, _i| vec![x[0] * 1.0], |x| vec![x[0] * 0.0]).unwrap()
    }

    fn geometric(steps: usize) -> DifferenceSystem {
        DifferenceSystem::new(1, 1, steps, |y, x, _i| vec![x[0] * y[0]], |x| vec![x[0].lift(1.0)]).unwrap()
    }

    fn identity_map() -> DifferenceSystem {
        DifferenceSystem::new(2, 2, 4, |y, _x, _i| y.iter().map(|&v| v * 0.0).collect(), |x| x.to_vec()).unwrap()
    }

    // non-symmetric ∂Δ/∂y and explicit step dependence
    fn coupled(steps: usize) -> DifferenceSystem {
        DifferenceSystem::new(
            2,
            3,
            steps,
            |y, x, i| {
                let h = 0.01 * (1.0 + 0.1 * (i % 3) as f64);
                vec![y[1] * h * x[0], (y[0].sin() * x[1] + y[1] * y[0] * 0.1 - x[2]) * -h]
            },
            |x| vec![x[0] * x[2], x[1].cos()],
        )
        .unwrap()
    }

    #[test]
    fn simulate_examples() {
        let t = simulate(&identity_map(), &[0.5, -2.0]).unwrap();
        assert!(t.states.iter().all(|s| s == &[0.5, -2.0]));
        let t = simulate(&constant_delta(5), &[0.7]).unwrap();
        assert!((t.final_state()[0] - 3.5).abs() < 1e-14);
        let a: f64 = 0.3;
        let t = simulate(&geometric(3), &[a]).unwrap();
        assert!((t.final_state()[0] - (1.0 + a).powi(3)).abs() < 1e-14);
        for w in t.states.windows(2) {
            assert!((w[1][0] - w[0][0] - a * w[0][0]).abs() < 1e-15);
        }
    }

    #[test]
    fn diverging_state_is_reported() {
        let sys = DifferenceSystem::new(1, 1, 10, |y, _x, _i| vec![y[0] * y[0] * 1e200], |x| vec![x[0] * 1.0]).unwrap();
        assert!(matches!(simulate(&sys, &[2.0]), Err(Error::DivergedTrajectory { .. })));
        assert!(DifferenceSystem::new(1, 1, 0, |y, _x, _i| y.to_vec(), |x| x.to_vec()).is_err());
    }

    #[test]
    fn gradient_examples() {
        let sys = identity_map();
        let x = [0.5, -2.0];
        let t = simulate(&sys, &x).unwrap();
        assert_eq!(reverse_ift(&sys, &x, &t, &[0.3, 0.4]).unwrap().gradient, vec![0.3, 0.4]);
        let adj = reverse_adjoint(&sys, &x, &t, &[0.3, 0.4]).unwrap();
        assert_eq!(adj.gradient, vec![0.3, 0.4]);
        assert!(adj.backward_states.iter().all(|l| l.iter().all(|&v| v == 0.0)));

        let sys = constant_delta(5);
        let t = simulate(&sys, &[0.7]).unwrap();
        let ift = reverse_ift(&sys, &[0.7], &t, &[1.0]).unwrap();
        assert!((ift.gradient[0] - 5.0).abs() < 1e-14);
        assert!(ift.backward_states.iter().all(|g| g == &[1.0]));
        let adj = reverse_adjoint(&sys, &[0.7], &t, &[1.0]).unwrap();
        assert!((adj.gradient[0] - 5.0).abs() < 1e-14);
        assert!(adj.backward_states.iter().all(|l| l == &[0.0]));

        let a = 0.3;
        let sys = geometric(3);
        let t = simulate(&sys, &[a]).unwrap();
        let expected = 3.0 * (1.0_f64 + a).powi(2);
        let ift = reverse_ift(&sys, &[a], &t, &[1.0]).unwrap();
        let adj = reverse_adjoint(&sys, &[a], &t, &[1.0]).unwrap();
        assert!((ift.gradient[0] - expected).abs() < 1e-14);
        assert!((adj.gradient[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn routes_agree_with_each_other_and_fd() {
        let sys = coupled(40);
        let x = [0.8, 1.3, -0.4];
        let alpha = [0.6, -1.1];
        let t = simulate(&sys, &x).unwrap();
        let ift = reverse_ift(&sys, &x, &t, &alpha).unwrap();
        let adj = reverse_adjoint(&sys, &x, &t, &alpha).unwrap();
        for (g, l) in ift.backward_states.iter().zip(&adj.backward_states) {
            for k in 0..2 {
                assert!((g[k] - (alpha[k] - l[k])).abs() <= 1e-12);
            }
        }
        assert!(fd::max_rel_err(&ift.gradient, &adj.gradient) <= 1e-12);
        let (tr, _) = trace_reverse(&sys, &x, &alpha).unwrap();
        assert!(fd::max_rel_err(&tr, &ift.gradient) <= 1e-12);
        let f = |x: &[f64]| Ok(simulate(&sys, x)?.final_state().to_vec());
        let fdg = fd::gradient(f, &x, &alpha, 1e-6).unwrap();
        assert!(fd::max_rel_err(&ift.gradient, &fdg) <= 1e-7);
        assert_eq!(ift.sweeps, 41);
        assert_eq!(adj.sweeps, 41);
    }

    #[test]
    fn gammas_solve_the_assembled_block_system() {
        // C_yᵀγ = (0, …, 0, α) with unit diagonal blocks and −(I + ∂Δ_i/∂y_i)ᵀ above
        let steps = 6;
        let sys = coupled(steps);
        let x = [0.8, 1.3, -0.4];
        let alpha = [0.6, -1.1];
        let t = simulate(&sys, &x).unwrap();
        let diag = vec![DenseMatrix::identity(2); steps];
        let off: Vec<DenseMatrix> = (1..steps)
            .map(|i| {
                let tape = crate::ad::record(&[t.states[i].clone(), x.to_vec()].concat(), |v: &[Var<'_>]| {
                    (sys.delta)(&v[..2], &v[2..], i)
                })
                .unwrap();
                let a = tape.jacobian_columns(0..2).unwrap();
                let mut m = DenseMatrix::zeros(2, 2);
                for r in 0..2 {
                    for c in 0..2 {
                        m[(r, c)] = -(a[(c, r)] + if r == c { 1.0 } else { 0.0 });
                    }
                }
                m
            })
            .collect();
        let mut rhs = vec![0.0; 2 * steps];
        rhs[2 * steps - 2..].copy_from_slice(&alpha);
        let dense = block_bidiagonal_solve(&diag, &off, &rhs).unwrap();
        let ift = reverse_ift(&sys, &x, &t, &alpha).unwrap();
        for (k, g) in ift.backward_states.iter().enumerate() {
            assert!((g[0] - dense[2 * k]).abs() < 1e-12 && (g[1] - dense[2 * k + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_system() {
        let sys = coupled(1);
        let x = [0.8, 1.3, -0.4];
        let t = simulate(&sys, &x).unwrap();
        let ift = reverse_ift(&sys, &x, &t, &[1.0, 0.0]).unwrap();
        let (tr, _) = trace_reverse(&sys, &x, &[1.0, 0.0]).unwrap();
        assert!(fd::max_rel_err(&ift.gradient, &tr) < 1e-14);
    }
}
