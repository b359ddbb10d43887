//! Tape-based automatic differentiation.
//!
//! Programs are ordinary Rust closures over [`Var`]s. Running a program
//! against a [`TapeBuilder`] records every elementary operation together with
//! its local partial derivatives; the frozen [`Tape`] then supports tangent
//! (forward) and cotangent (reverse) sweeps and Jacobian assembly.
//!
//! Recording order is already a topological order: a node can only reference
//! nodes that existed when it was created, so no sort pass is needed.
//!
//! Second derivatives use one level of forward-over-reverse nesting. A
//! [`TapeBuilder::nested`] recording seeds each input with a tangent and
//! stores, next to every local partial, its directional derivative along that
//! tangent. A nested reverse sweep then yields `Jᵀα` and `(∇(αᵀF))·v`
//! together, which is what [`hessian_vector`] reads.
//!
//! ```
//! use impdiff::ad::{record, Var};
//!
//! // f(x1, x2, x3) = (x1 + x2) / (x2 * x3)
//! let tape = record(&[1.0, 2.0, 3.0], |x: &[Var<'_>]| vec![(x[0] + x[1]) / (x[1] * x[2])]).unwrap();
//! let grad = tape.reverse_sweep(&[1.0]).unwrap();
//! assert!((grad[0] - 1.0 / 6.0).abs() < 1e-15);
//! ```

mod tape;
mod var;

pub use tape::{NodeId, NodeTangent, OpKind, SweepStrategy, Tape, TapeBuilder, TapeNode};
pub use var::{dot_const, sum, Var};

use crate::error::{Error, Result};

/// A differentiable program from a flat input vector to a flat output vector.
pub trait Program: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync {}

impl<F> Program for F where F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>> + Send + Sync {}

/// Pins a closure to the higher-ranked program signature. Closures bound to
/// a variable need this before they can be reused across recordings.
pub fn program<F>(f: F) -> F
where
    F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>>,
{
    f
}

/// Records `f` at `inputs`.
pub fn record<F>(inputs: &[f64], f: F) -> Result<Tape>
where
    F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>>,
{
    let builder = TapeBuilder::new();
    let vars = builder.inputs(inputs);
    let outputs = f(&vars);
    builder.finish(&outputs)
}

/// Records `f` at `inputs` with input tangents `tangents` (nested mode).
pub fn record_nested<F>(inputs: &[f64], tangents: &[f64], f: F) -> Result<Tape>
where
    F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>>,
{
    if inputs.len() != tangents.len() {
        return Err(Error::dims("input tangents", inputs.len(), tangents.len()));
    }
    let builder = TapeBuilder::nested();
    let vars = builder.inputs_with_tangents(inputs, tangents);
    let outputs = f(&vars);
    builder.finish(&outputs)
}

/// Evaluates `f` without recording.
pub fn evaluate<F>(inputs: &[f64], f: F) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>>,
{
    let builder = TapeBuilder::passive();
    let vars = builder.inputs(inputs);
    let outputs: Vec<f64> = f(&vars).iter().map(Var::value).collect();
    if let Some(msg) = builder.poisoned() {
        return Err(Error::Program(msg));
    }
    Ok(outputs)
}

/// Hessian-vector product `(∂²F/∂x²)·v` of a scalar program.
pub fn hessian_vector<F>(f: F, x: &[f64], v: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>>,
{
    let tape = record_nested(x, v, f)?;
    if tape.num_outputs() != 1 {
        return Err(Error::NotScalar {
            outputs: tape.num_outputs(),
        });
    }
    let (_, hv) = tape.reverse_sweep_nested(&[1.0])?;
    Ok(hv)
}

/// Gradient of a scalar program.
pub fn gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> Fn(&[Var<'t>]) -> Vec<Var<'t>>,
{
    let tape = record(x, f)?;
    if tape.num_outputs() != 1 {
        return Err(Error::NotScalar {
            outputs: tape.num_outputs(),
        });
    }
    tape.reverse_sweep(&[1.0])
}
