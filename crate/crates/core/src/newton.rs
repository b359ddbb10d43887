//! Damped Newton iteration shared by the algebraic, optimization and DAE
//! solvers.

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, lu_solve, norm_inf, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    /// Stop once ‖c‖∞ falls to this level.
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    /// Scale of the first trial step; halved until the residual decreases.
    pub initial_damping: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-12,
            max_iterations: 100,
            initial_damping: 1.0,
            max_halvings: 30,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tolerance > 0.0) || self.max_iterations == 0 || !(self.initial_damping > 0.0) {
            return Err(Error::Contract(format!("invalid Newton configuration {self:?}")));
        }
        Ok(())
    }
}

/// One accepted update `y_{n+1} = y_n − damping·C_y⁻¹ c(y_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub from: Vec<f64>,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub root: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Final Jacobian, evaluated at `root`.
    pub jacobian: DenseMatrix,
    pub steps: Option<Vec<NewtonStep>>,
}

/// Solves `residual(y) = 0`. `eval` returns the residual and its Jacobian.
pub fn solve<F>(mut eval: F, y0: &[f64], cfg: &NewtonConfig, keep_steps: bool) -> Result<NewtonOutcome>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, DenseMatrix)>,
{
    cfg.validate()?;
    let mut y = y0.to_vec();
    let (mut c, mut jac) = eval(&y)?;
    if c.len() != y.len() {
        return Err(Error::dims("residual", y.len(), c.len()));
    }
    let mut norm = norm_inf(&c);
    let mut steps = keep_steps.then(Vec::new);
    let mut iterations = 0;
    while !(norm <= cfg.residual_tolerance) {
        if !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
            });
        }
        let delta = lu_solve(&lu_factor(&jac)?, &c, false)?;
        let mut damping = cfg.initial_damping;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, d)| a - damping * d).collect();
            let (tc, tj) = eval(&trial)?;
            let tn = norm_inf(&tc);
            if tn < norm || tn <= cfg.residual_tolerance {
                accepted = Some((trial, tc, tj, tn));
                break;
            }
            damping *= 0.5;
        }
        let Some((trial, tc, tj, tn)) = accepted else {
            return Err(Error::NonConvergence {
                iterations,
                residual: norm,
            });
        };
        if let Some(s) = steps.as_mut() {
            s.push(NewtonStep {
                from: y.clone(),
                damping,
            });
        }
        y = trial;
        c = tc;
        jac = tj;
        norm = tn;
        iterations += 1;
    }
    Ok(NewtonOutcome {
        root: y,
        residual_norm: norm,
        iterations,
        jacobian: jac,
        steps,
    })
}
