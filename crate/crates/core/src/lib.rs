//! Forward- and reverse-mode automatic differentiation of implicit functions.
//!
//! The crate differentiates maps that are only available through a solver:
//! roots of algebraic systems, trajectories of difference equations, optima
//! of objective functions, ODE solutions and semi-explicit index-1 DAE
//! solutions. Every route is built on the tape in [`ad`] and checked against
//! central finite differences in [`fd`].

pub mod ad;
pub mod algebraic;
pub mod dae;
pub mod difference;
pub mod error;
pub mod fd;
pub mod linalg;
pub mod methods;
pub mod newton;
pub mod ode;
pub mod optimize;
pub mod registry;

pub use ad::{Tape, TapeBuilder, Var};
pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use methods::{GradientRun, Method, Settings};
pub use newton::NewtonConfig;
pub use ode::IntegratorConfig;
pub use registry::{ProblemKind, ProblemSpec};
