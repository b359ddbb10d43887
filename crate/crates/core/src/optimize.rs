//! Differentiation through maximizers.
//!
//! `y*(x) = argmax_y F(x, y)` is the implicit function of the stationarity
//! constraint `∂F/∂y = 0`, so its derivatives come from a solve against the
//! Hessian `∂²F/∂y²` followed by one second-order sweep for the mixed block
//! `∂²F/∂y∂x`. Equality constraints `k(x, y) = 0` are handled by extending
//! the output with multipliers, `ζ = (y, μ)`, and working with the
//! stationarity of `Φ = F + μ·k` in `ζ`.
//!
//! Maximization is the convention throughout; negate `F` to minimize.

use std::sync::Arc;

use crate::ad::{TapeBuilder, Var};
use crate::error::{Error, Result};
use crate::linalg::{is_negative_definite, lu_factor, lu_solve, norm_inf, DenseMatrix};
use crate::newton::{self, NewtonConfig};

/// `F(x, y)`.
pub type ObjectiveFn = dyn for<'t> Fn(&[Var<'t>], &[Var<'t>]) -> Var<'t> + Send + Sync;
/// `k(x, y)`.
pub type EqualityFn = dyn for<'t> Fn(&[Var<'t>], &[Var<'t>]) -> Vec<Var<'t>> + Send + Sync;

#[derive(Clone)]
pub struct ObjectiveProblem {
    dim_x: usize,
    dim_y: usize,
    objective: Arc<ObjectiveFn>,
    start_hint: Option<Vec<f64>>,
}

impl std::fmt::Debug for ObjectiveProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveProblem")
            .field("dim_x", &self.dim_x)
            .field("dim_y", &self.dim_y)
            .field("start_hint", &self.start_hint)
            .finish()
    }
}

impl ObjectiveProblem {
    pub fn new<F>(dim_x: usize, dim_y: usize, objective: F) -> Self
    where
        F: for<'t> Fn(&[Var<'t>], &[Var<'t>]) -> Var<'t> + Send + Sync + 'static,
    {
        Self {
            dim_x,
            dim_y,
            objective: Arc::new(objective),
            start_hint: None,
        }
    }

    /// A starting point inside the region where `F` is concave.
    pub fn with_start_hint(mut self, y0: Vec<f64>) -> Self {
        self.start_hint = Some(y0);
        self
    }

    pub fn start_hint(&self) -> Option<&[f64]> {
        self.start_hint.as_deref()
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// The same problem with an empty set of equality constraints.
    pub fn unconstrained(&self) -> ConstrainedProblem {
        ConstrainedProblem {
            objective: self.clone(),
            dim_k: 0,
            constraints: Arc::new(|_x, _y| Vec::new()),
        }
    }
}

#[derive(Clone)]
pub struct ConstrainedProblem {
    objective: ObjectiveProblem,
    dim_k: usize,
    constraints: Arc<EqualityFn>,
}

impl std::fmt::Debug for ConstrainedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstrainedProblem")
            .field("objective", &self.objective)
            .field("dim_k", &self.dim_k)
            .finish()
    }
}

impl ConstrainedProblem {
    pub fn new<K>(objective: ObjectiveProblem, dim_k: usize, constraints: K) -> Result<Self>
    where
        K: for<'t> Fn(&[Var<'t>], &[Var<'t>]) -> Vec<Var<'t>> + Send + Sync + 'static,
    {
        if dim_k > objective.dim_y {
            return Err(Error::Contract(format!(
                "{dim_k} equality constraints on {} outputs",
                objective.dim_y
            )));
        }
        Ok(Self {
            objective,
            dim_k,
            constraints: Arc::new(constraints),
        })
    }

    pub fn objective(&self) -> &ObjectiveProblem {
        &self.objective
    }

    pub fn dim_x(&self) -> usize {
        self.objective.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.objective.dim_y
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    fn dim_zeta(&self) -> usize {
        self.dim_y() + self.dim_k
    }

    /// `Φ(x, ζ)` on the builder, with inputs laid out as `[x, y, μ]`.
    fn lagrangian<'t>(&self, v: &[Var<'t>]) -> Result<Var<'t>> {
        let (i, j) = (self.dim_x(), self.dim_y());
        let (x, rest) = v.split_at(i);
        let (y, mu) = rest.split_at(j);
        let mut phi = (self.objective.objective)(x, y);
        if self.dim_k > 0 {
            let k = (self.constraints)(x, y);
            if k.len() != self.dim_k {
                return Err(Error::dims("equality constraints", self.dim_k, k.len()));
            }
            for (&m, &kv) in mu.iter().zip(&k) {
                phi = phi + m * kv;
            }
        }
        Ok(phi)
    }

    /// `∂Φ/∂ζ` and its tangent along `tangent` (laid out as `[x, ζ]`).
    fn stationarity_sweep(&self, x: &[f64], zeta: &[f64], tangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = TapeBuilder::nested();
        let point: Vec<f64> = x.iter().chain(zeta).copied().collect();
        let vars = b.inputs_with_tangents(&point, tangent);
        let phi = self.lagrangian(&vars)?;
        b.finish(&[phi])?.reverse_sweep_nested(&[1.0])
    }

    fn check(&self, x: &[f64], zeta: &[f64]) -> Result<()> {
        if x.len() != self.dim_x() {
            return Err(Error::dims("optimization input", self.dim_x(), x.len()));
        }
        if zeta.len() != self.dim_zeta() {
            return Err(Error::dims("optimization output", self.dim_zeta(), zeta.len()));
        }
        Ok(())
    }

    /// `∂Φ/∂ζ` at `(x, ζ)` with the Hessian `∂²Φ/∂ζ²`, one column per
    /// Hessian-vector product.
    pub fn stationarity(&self, x: &[f64], zeta: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
        self.check(x, zeta)?;
        let (i, n) = (self.dim_x(), self.dim_zeta());
        let mut hessian = DenseMatrix::zeros(n, n);
        let mut grad = vec![0.0; n];
        let mut seed = vec![0.0; i + n];
        for col in 0..n {
            seed[i + col] = 1.0;
            let (g, hv) = self.stationarity_sweep(x, zeta, &seed)?;
            seed[i + col] = 0.0;
            hessian.set_column(col, &hv[i..]);
            if col == 0 {
                grad.copy_from_slice(&g[i..]);
            }
        }
        Ok((grad, hessian))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    NegativeDefinite,
    Indefinite,
    /// Not assessed: with equality constraints the relevant test is on the
    /// Hessian restricted to the constraint tangent space.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimumSolution {
    pub y_star: Vec<f64>,
    /// Present for constrained problems.
    pub multipliers: Option<Vec<f64>>,
    /// ‖∂Φ/∂ζ‖∞ at the solution.
    pub gradient_norm: f64,
    pub hessian_definiteness: Definiteness,
    pub iterations: usize,
    /// Set when the stationary point may not be a maximum.
    pub warning: Option<String>,
    hessian: DenseMatrix,
}

impl OptimumSolution {
    /// `∂²Φ/∂ζ²` at the solution, as used by Newton's final step.
    pub fn hessian(&self) -> &DenseMatrix {
        &self.hessian
    }

    fn zeta(&self) -> Vec<f64> {
        let mut z = self.y_star.clone();
        if let Some(mu) = &self.multipliers {
            z.extend_from_slice(mu);
        }
        z
    }
}

pub fn maximize(problem: &ObjectiveProblem, x: &[f64], y0: &[f64], cfg: &NewtonConfig) -> Result<OptimumSolution> {
    let mut sol = maximize_constrained(&problem.unconstrained(), x, y0, &[], cfg)?;
    sol.multipliers = None;
    let negative_definite = is_negative_definite(&sol.hessian);
    sol.hessian_definiteness = if negative_definite {
        Definiteness::NegativeDefinite
    } else {
        Definiteness::Indefinite
    };
    if !negative_definite {
        sol.warning = Some("Hessian is not negative definite; the stationary point may not be a maximum".into());
    }
    Ok(sol)
}

/// Newton on `∂Φ/∂ζ = 0`. `mu0` may be empty, meaning zeros.
pub fn maximize_constrained(
    problem: &ConstrainedProblem,
    x: &[f64],
    y0: &[f64],
    mu0: &[f64],
    cfg: &NewtonConfig,
) -> Result<OptimumSolution> {
    if y0.len() != problem.dim_y() {
        return Err(Error::dims("initial guess", problem.dim_y(), y0.len()));
    }
    let mut zeta0 = y0.to_vec();
    match mu0.len() {
        0 => zeta0.resize(problem.dim_zeta(), 0.0),
        k if k == problem.dim_k => zeta0.extend_from_slice(mu0),
        k => return Err(Error::dims("initial multipliers", problem.dim_k, k)),
    }
    problem.check(x, &zeta0)?;
    let out = newton::solve(|z| problem.stationarity(x, z), &zeta0, cfg, false)
        .map_err(|e| e.implicit("singular stationarity Hessian"))?;
    let mut y_star = out.root;
    let multipliers = y_star.split_off(problem.dim_y());
    Ok(OptimumSolution {
        y_star,
        multipliers: Some(multipliers),
        gradient_norm: out.residual_norm,
        hessian_definiteness: Definiteness::Unknown,
        iterations: out.iterations,
        warning: None,
        hessian: out.jacobian,
    })
}

/// `(dy*/dx)ᵀα` for an unconstrained maximizer.
pub fn reverse_unconstrained(
    problem: &ObjectiveProblem,
    x: &[f64],
    solution: &OptimumSolution,
    alpha: &[f64],
) -> Result<Vec<f64>> {
    reverse_constrained(&problem.unconstrained(), x, solution, alpha)
}

/// `(dy*/dx)ᵀα`: solve `(∂²Φ/∂ζ²)ᵀγ = (α, 0)` and contract with the mixed
/// block through one second-order sweep seeded with `γ`.
pub fn reverse_constrained(
    problem: &ConstrainedProblem,
    x: &[f64],
    solution: &OptimumSolution,
    alpha: &[f64],
) -> Result<Vec<f64>> {
    if alpha.len() != problem.dim_y() {
        return Err(Error::dims("cotangent", problem.dim_y(), alpha.len()));
    }
    let zeta = solution.zeta();
    problem.check(x, &zeta)?;
    let mut beta = alpha.to_vec();
    beta.resize(problem.dim_zeta(), 0.0);
    let scale = solution.hessian.max_abs().max(1.0);
    let lu = lu_factor(&solution.hessian)?;
    if lu.is_singular() || lu.min_pivot_abs() < crate::algebraic::IMPLICIT_PIVOT_RTOL * scale {
        return Err(Error::ImplicitUndefined {
            context: format!("stationarity Hessian pivot {:e}", lu.min_pivot_abs()),
        });
    }
    let gamma = lu_solve(&lu, &beta, true).map_err(|e| e.implicit("reverse through optimum"))?;
    let mut seed = vec![0.0; problem.dim_x()];
    seed.extend_from_slice(&gamma);
    let (_, hv) = problem.stationarity_sweep(x, &zeta, &seed)?;
    Ok(hv[..problem.dim_x()].iter().map(|v| -v).collect())
}

/// Stationarity residual of a candidate solution, for diagnostics.
pub fn stationarity_norm(problem: &ConstrainedProblem, x: &[f64], zeta: &[f64]) -> Result<f64> {
    let seed = vec![0.0; problem.dim_x() + problem.dim_zeta()];
    problem.check(x, zeta)?;
    let (g, _) = problem.stationarity_sweep(x, zeta, &seed)?;
    Ok(norm_inf(&g[problem.dim_x()..]))
}
