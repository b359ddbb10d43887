//! Differentiable algebraic equation solving.
//!
//! A [`ConstraintSystem`] defines `y = f(x)` implicitly through
//! `c(x, y) = 0` with `dim c == dim y`, optionally followed by a summary
//! `g(y)`. Derivatives of `g∘f` are available through three routes:
//!
//! * the implicit function theorem, forward ([`ift_forward`]) and reverse
//!   ([`ift_reverse`]): one sweep for `C_x·v` or `C_xᵀγ`, J sweeps for
//!   `C_y`, one dense solve, one sweep through `g`;
//! * the adjoint method ([`adjoint_reverse`]), which solves for the
//!   multipliers `λ = −C_y⁻ᵀα` and contracts `C_xᵀλ`;
//! * the trace method ([`trace_reverse`]), which records every Newton update
//!   on one tape and reverse-sweeps through the solver as it ran.

use std::sync::Arc;

use crate::ad::{SweepStrategy, Tape, TapeBuilder, Var};
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, lu_solve, norm_inf, DenseMatrix, LuFactors};
use crate::newton::{self, NewtonConfig};

/// `c(x, y)`.
pub type ConstraintFn = dyn for<'t> Fn(&[Var<'t>], &[Var<'t>]) -> Vec<Var<'t>> + Send + Sync;
/// `g(y)`.
pub type SummaryFn = dyn for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync;

/// Pivots of `C_y` smaller than this fraction of the largest entry of
/// `[C_x | C_y]` are treated as singular by the derivative routes. A root
/// with singular `C_y` is only located to within √(residual tolerance), so
/// its computed `C_y` never vanishes exactly.
pub const IMPLICIT_PIVOT_RTOL: f64 = 1e-5;

#[derive(Clone)]
pub struct ConstraintSystem {
    dim_x: usize,
    dim_y: usize,
    constraint: Arc<ConstraintFn>,
    summary: Option<(usize, Arc<SummaryFn>)>,
}

impl std::fmt::Debug for ConstraintSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstraintSystem")
            .field("dim_x", &self.dim_x)
            .field("dim_y", &self.dim_y)
            .field("dim_summary", &self.dim_summary())
            .finish()
    }
}

impl ConstraintSystem {
    pub fn new<F>(dim_x: usize, dim_y: usize, constraint: F) -> Self
    where
        F: for<'t> Fn(&[Var<'t>], &[Var<'t>]) -> Vec<Var<'t>> + Send + Sync + 'static,
    {
        Self {
            dim_x,
            dim_y,
            constraint: Arc::new(constraint),
            summary: None,
        }
    }

    pub fn with_summary<G>(mut self, dim_summary: usize, summary: G) -> Self
    where
        G: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync + 'static,
    {
        self.summary = Some((dim_summary, Arc::new(summary)));
        self
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn dim_summary(&self) -> usize {
        self.summary.as_ref().map_or(self.dim_y, |(k, _)| *k)
    }

    pub fn has_identity_summary(&self) -> bool {
        self.summary.is_none()
    }

    fn check_inputs(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::dims("constraint input x", self.dim_x, x.len()));
        }
        if y.len() != self.dim_y {
            return Err(Error::dims("constraint input y", self.dim_y, y.len()));
        }
        Ok(())
    }

    /// Records `c` with inputs laid out as `[x, y]`.
    pub fn constraint_tape(&self, x: &[f64], y: &[f64]) -> Result<Tape> {
        self.check_inputs(x, y)?;
        let b = TapeBuilder::new();
        let xs = b.inputs(x);
        let ys = b.inputs(y);
        let out = (self.constraint)(&xs, &ys);
        if out.len() != self.dim_y {
            return Err(Error::dims("constraint output (dim Z must equal dim Y)", self.dim_y, out.len()));
        }
        b.finish(&out)
    }

    pub fn residual(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.constraint_tape(x, y)?.output_values())
    }

    pub(crate) fn apply_constraint<'t>(&self, x: &[Var<'t>], y: &[Var<'t>]) -> Vec<Var<'t>> {
        (self.constraint)(x, y)
    }

    pub(crate) fn apply_summary<'t>(&self, y: &[Var<'t>]) -> Vec<Var<'t>> {
        match &self.summary {
            Some((_, g)) => g(y),
            None => y.to_vec(),
        }
    }

    fn summary_tape(&self, y: &[f64]) -> Result<Tape> {
        let b = TapeBuilder::new();
        let ys = b.inputs(y);
        let out = self.apply_summary(&ys);
        if out.len() != self.dim_summary() {
            return Err(Error::dims("summary output", self.dim_summary(), out.len()));
        }
        b.finish(&out)
    }

    pub fn summary_value(&self, y: &[f64]) -> Result<Vec<f64>> {
        if self.summary.is_none() {
            return Ok(y.to_vec());
        }
        Ok(self.summary_tape(y)?.output_values())
    }

    /// `C_y` from a constraint tape. Reverse sweeps when J ≤ I, forward
    /// sweeps otherwise; both cost J sweeps.
    pub(crate) fn c_y(&self, tape: &Tape) -> Result<DenseMatrix> {
        let strategy = if self.dim_y <= self.dim_x {
            SweepStrategy::Reverse
        } else {
            SweepStrategy::Forward
        };
        tape.jacobian_columns_with(self.dim_x..self.dim_x + self.dim_y, strategy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSolution {
    pub y_star: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Iterates `y_0, …, y_n` when requested.
    pub iterate_trace: Option<Vec<Vec<f64>>>,
    /// Damping factor of each accepted update, aligned with `iterate_trace`.
    pub dampings: Option<Vec<f64>>,
}

pub fn newton_solve(
    sys: &ConstraintSystem,
    x: &[f64],
    y0: &[f64],
    cfg: &NewtonConfig,
    keep_trace: bool,
) -> Result<ImplicitSolution> {
    sys.check_inputs(x, y0)?;
    let eval = |y: &[f64]| {
        let tape = sys.constraint_tape(x, y)?;
        Ok((tape.output_values(), sys.c_y(&tape)?))
    };
    let out = newton::solve(eval, y0, cfg, keep_trace).map_err(|e| e.implicit("singular C_y at a Newton iterate"))?;
    let (iterate_trace, dampings) = match out.steps {
        Some(steps) => {
            let dampings = steps.iter().map(|s| s.damping).collect();
            let mut trace: Vec<Vec<f64>> = steps.into_iter().map(|s| s.from).collect();
            trace.push(out.root.clone());
            (Some(trace), Some(dampings))
        }
        None => (None, None),
    };
    Ok(ImplicitSolution {
        y_star: out.root,
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        iterate_trace,
        dampings,
    })
}

/// Factors `C_y`, rejecting it when singular relative to `[C_x | C_y]`.
fn factor_c_y(tape: &Tape, c_y: &DenseMatrix) -> Result<LuFactors> {
    let scale = tape.jacobian()?.max_abs().max(f64::MIN_POSITIVE);
    let lu = lu_factor(c_y)?;
    if lu.is_singular() || lu.min_pivot_abs() < IMPLICIT_PIVOT_RTOL * scale {
        return Err(Error::ImplicitUndefined {
            context: format!("smallest pivot {:e}", lu.min_pivot_abs()),
        });
    }
    Ok(lu)
}

/// Forward directional derivative `J_{g∘f}·v` via the implicit function theorem.
pub fn ift_forward(sys: &ConstraintSystem, x: &[f64], y_star: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != sys.dim_x {
        return Err(Error::dims("tangent", sys.dim_x, v.len()));
    }
    let tape = sys.constraint_tape(x, y_star)?;
    // u = C_x·v with zero y-tangents
    let mut seed = v.to_vec();
    seed.resize(sys.dim_x + sys.dim_y, 0.0);
    let u = tape.forward_sweep(&seed)?;
    let c_y = sys.c_y(&tape)?;
    let lu = factor_c_y(&tape, &c_y)?;
    let t = lu_solve(&lu, &u, false).map_err(|e| e.implicit("ift_forward"))?;
    let jt = if sys.has_identity_summary() {
        t
    } else {
        sys.summary_tape(y_star)?.forward_sweep(&t)?
    };
    Ok(jt.into_iter().map(|v| -v).collect())
}

/// Reverse directional derivative `J_{g∘f}ᵀ·α` via the implicit function theorem.
pub fn ift_reverse(sys: &ConstraintSystem, x: &[f64], y_star: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != sys.dim_summary() {
        return Err(Error::dims("cotangent", sys.dim_summary(), alpha.len()));
    }
    let beta = if sys.has_identity_summary() {
        alpha.to_vec()
    } else {
        sys.summary_tape(y_star)?.reverse_sweep(alpha)?
    };
    let tape = sys.constraint_tape(x, y_star)?;
    let c_y = sys.c_y(&tape)?;
    let lu = factor_c_y(&tape, &c_y)?;
    let gamma = lu_solve(&lu, &beta, true).map_err(|e| e.implicit("ift_reverse"))?;
    let cot = tape.reverse_sweep(&gamma)?;
    Ok(cot[..sys.dim_x].iter().map(|v| -v).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSolution {
    pub gradient: Vec<f64>,
    /// `λ = −C_y⁻ᵀα`.
    pub multipliers: Vec<f64>,
}

/// Adjoint-method gradient for an identity summary.
pub fn adjoint_reverse(
    sys: &ConstraintSystem,
    x: &[f64],
    y_star: &[f64],
    alpha: &[f64],
) -> Result<AdjointSolution> {
    if !sys.has_identity_summary() {
        return Err(Error::Contract(
            "adjoint_reverse is defined for the identity summary only".into(),
        ));
    }
    if alpha.len() != sys.dim_y {
        return Err(Error::dims("cotangent", sys.dim_y, alpha.len()));
    }
    let tape = sys.constraint_tape(x, y_star)?;
    let c_y = sys.c_y(&tape)?;
    let lu = factor_c_y(&tape, &c_y)?;
    let neg_alpha: Vec<f64> = alpha.iter().map(|a| -a).collect();
    let lambda = lu_solve(&lu, &neg_alpha, true).map_err(|e| e.implicit("adjoint_reverse"))?;
    let cot = tape.reverse_sweep(&lambda)?;
    Ok(AdjointSolution {
        gradient: cot[..sys.dim_x].to_vec(),
        multipliers: lambda,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub gradient: Vec<f64>,
    pub solution: ImplicitSolution,
    /// Nodes on the tape spanning all Newton updates.
    pub tape_len: usize,
}

/// Differentiates the Newton solver as it ran.
///
/// Every accepted update `y_{n+1} = y_n − s_n·C_y(x, y_n)⁻¹ c(x, y_n)` is
/// recorded on one tape. The solve `z = A⁻¹c` enters as implicit nodes with
/// partials `A⁻¹` with respect to `c` and `−A⁻¹ ∂(A z)/∂(x, y_n)` with
/// respect to `x` and `y_n`; the latter matrix comes from nested sweeps
/// through `c` along the tangent `z`. Damping factors are constants.
pub fn trace_reverse(
    sys: &ConstraintSystem,
    x: &[f64],
    y0: &[f64],
    cfg: &NewtonConfig,
    alpha: &[f64],
) -> Result<TraceResult> {
    if alpha.len() != sys.dim_summary() {
        return Err(Error::dims("cotangent", sys.dim_summary(), alpha.len()));
    }
    let solution = newton_solve(sys, x, y0, cfg, true)?;
    let (ni, nj) = (sys.dim_x, sys.dim_y);
    let iterates = solution.iterate_trace.as_deref().unwrap_or_default();
    let dampings = solution.dampings.as_deref().unwrap_or_default();

    let b = TapeBuilder::new();
    let xs = b.inputs(x);
    let mut ys: Vec<Var<'_>> = y0.iter().map(|&v| b.constant(v)).collect();
    for (n, &damping) in dampings.iter().enumerate() {
        let y_vals: Vec<f64> = ys.iter().map(Var::value).collect();
        debug_assert!(norm_inf(
            &y_vals.iter().zip(&iterates[n]).map(|(a, b)| a - b).collect::<Vec<_>>()
        ) <= 1e-12 * (1.0 + norm_inf(&y_vals)));
        let c = sys.apply_constraint(&xs, &ys);
        let c_vals: Vec<f64> = c.iter().map(Var::value).collect();
        let local = sys.constraint_tape(x, &y_vals)?;
        let c_y = sys.c_y(&local)?;
        let lu = lu_factor(&c_y)?;
        let z = lu_solve(&lu, &c_vals, false).map_err(|e| e.implicit("trace_reverse"))?;

        // rows of ∂(C_y z)/∂(x, y)
        let mut tangent = vec![0.0; ni];
        tangent.extend_from_slice(&z);
        let mut inputs = x.to_vec();
        inputs.extend_from_slice(&y_vals);
        let nested = crate::ad::record_nested(&inputs, &tangent, |v: &[Var<'_>]| {
            sys.apply_constraint(&v[..ni], &v[ni..])
        })?;
        let mut curvature = DenseMatrix::zeros(nj, ni + nj);
        let mut seed = vec![0.0; nj];
        for i in 0..nj {
            seed[i] = 1.0;
            let (_, row) = nested.reverse_sweep_nested(&seed)?;
            seed[i] = 0.0;
            curvature.set_row(i, &row);
        }
        // A⁻¹ (columns) and A⁻¹·curvature
        let mut inv = DenseMatrix::zeros(nj, nj);
        let mut unit = vec![0.0; nj];
        for j in 0..nj {
            unit[j] = 1.0;
            inv.set_column(j, &lu_solve(&lu, &unit, false)?);
            unit[j] = 0.0;
        }
        let inv_curv = inv.matmul(&curvature);

        let mut operands: Vec<Var<'_>> = c.clone();
        operands.extend_from_slice(&xs);
        operands.extend_from_slice(&ys);
        let z_vars: Vec<Var<'_>> = (0..nj)
            .map(|k| {
                let mut partials = inv.row(k).to_vec();
                partials.extend(inv_curv.row(k).iter().map(|v| -v));
                b.record_implicit(&operands, z[k], &partials)
            })
            .collect();
        ys = ys.iter().zip(&z_vars).map(|(&y, &zk)| y - zk * damping).collect();
    }
    let out = sys.apply_summary(&ys);
    let tape = b.finish(&out)?;
    // the final iterate must itself satisfy the IFT hypothesis
    let final_tape = sys.constraint_tape(x, &solution.y_star)?;
    factor_c_y(&final_tape, &sys.c_y(&final_tape)?)?;
    let cot = tape.reverse_sweep(alpha)?;
    Ok(TraceResult {
        gradient: cot,
        solution,
        tape_len: tape.len(),
    })
}
