//! Named test problems with default inputs and, where one exists, a closed
//! form for the gradient.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad::dot_const;
use crate::algebraic::ConstraintSystem;
use crate::dae::DaeSystem;
use crate::difference::DifferenceSystem;
use crate::error::{Error, Result};
use crate::ode::OdeSystem;
use crate::optimize::{ConstrainedProblem, ObjectiveProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemKind {
    Algebraic,
    Difference,
    Optimization,
    ConstrainedOptimization,
    Ode,
    Dae,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::Algebraic,
        ProblemKind::Difference,
        ProblemKind::Optimization,
        ProblemKind::ConstrainedOptimization,
        ProblemKind::Ode,
        ProblemKind::Dae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Algebraic => "algebraic",
            ProblemKind::Difference => "difference",
            ProblemKind::Optimization => "optimization",
            ProblemKind::ConstrainedOptimization => "constrained_optimization",
            ProblemKind::Ode => "ode",
            ProblemKind::Dae => "dae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s || k.name().replace('_', "-") == s)
    }

    /// Infinite-dimensional problems are checked against looser tolerances.
    pub fn is_dynamic(self) -> bool {
        matches!(self, ProblemKind::Ode | ProblemKind::Dae)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(I, J or N, K)`: inputs, outputs and constraint count (multipliers or
/// algebraic states, 0 when absent).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub output: usize,
    pub extra: usize,
}

#[derive(Clone)]
pub enum Model {
    Algebraic { system: ConstraintSystem, y0: Vec<f64> },
    Difference(DifferenceSystem),
    Optimization { problem: ObjectiveProblem, y0: Vec<f64> },
    ConstrainedOptimization { problem: ConstrainedProblem, y0: Vec<f64>, mu0: Vec<f64> },
    Ode(OdeSystem),
    Dae(DaeSystem),
}

/// `(x, α) ↦ (dg/dx)ᵀα`.
pub type AnalyticGradient = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub kind: ProblemKind,
    pub description: &'static str,
    pub dims: Dims,
    pub default_x: Vec<f64>,
    pub default_alpha: Vec<f64>,
    pub model: Model,
    pub analytic_gradient: Option<AnalyticGradient>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("dims", &self.dims)
            .field("default_x", &self.default_x)
            .finish()
    }
}

/// Dimension overrides for scaling studies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub state_dim: Option<usize>,
    pub input_dim: Option<usize>,
    pub steps: Option<usize>,
    /// Seed for randomly generated problem data.
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub name: &'static str,
    pub kind: ProblemKind,
    pub description: &'static str,
}

type Builder = fn(&Overrides) -> Result<ProblemSpec>;

struct Registration {
    name: &'static str,
    kind: ProblemKind,
    description: &'static str,
    accepts: &'static [&'static str],
    build: Builder,
}

// alphabetical by name
const PROBLEMS: &[Registration] = &[
    Registration {
        name: "algebraic-coupled",
        kind: ProblemKind::Algebraic,
        description: "two coupled nonlinear equations y1^3 + y2 = x1, y2 + x2 sin(y1) = x2^2",
        accepts: &[],
        build: algebraic_coupled,
    },
    Registration {
        name: "algebraic-linear",
        kind: ProblemKind::Algebraic,
        description: "linear system A y = B x with fixed 2x2 A and B",
        accepts: &[],
        build: algebraic_linear,
    },
    Registration {
        name: "algebraic-sqrt",
        kind: ProblemKind::Algebraic,
        description: "y^2 = x, positive root; singular at x = 0",
        accepts: &[],
        build: algebraic_sqrt,
    },
    Registration {
        name: "dae-conserved-sum",
        kind: ProblemKind::Dae,
        description: "y1' = -x y1 with y1 + y2 = 1, y1(0) = 0.5",
        accepts: &[],
        build: dae_conserved_sum,
    },
    Registration {
        name: "dae-cubic",
        kind: ProblemKind::Dae,
        description: "two differential states coupled to a cubic algebraic constraint",
        accepts: &[],
        build: dae_cubic,
    },
    Registration {
        name: "diffeq-constant",
        kind: ProblemKind::Difference,
        description: "y_{i+1} - y_i = x from y_0 = 0",
        accepts: &["steps"],
        build: diffeq_constant,
    },
    Registration {
        name: "diffeq-geometric",
        kind: ProblemKind::Difference,
        description: "y_{i+1} - y_i = x y_i from y_0 = 1",
        accepts: &["steps"],
        build: diffeq_geometric,
    },
    Registration {
        name: "diffeq-nonlinear",
        kind: ProblemKind::Difference,
        description: "explicit Euler steps of a damped pendulum over unit time",
        accepts: &["steps"],
        build: diffeq_nonlinear,
    },
    Registration {
        name: "ode-decay",
        kind: ProblemKind::Ode,
        description: "y' = -x1 y, y(0) = x2, tau = 1",
        accepts: &[],
        build: ode_decay,
    },
    Registration {
        name: "ode-harmonic",
        kind: ProblemKind::Ode,
        description: "y1' = y2, y2' = -x y1 from (1, 0), tau = 3",
        accepts: &[],
        build: ode_harmonic,
    },
    Registration {
        name: "ode-linear-nd",
        kind: ProblemKind::Ode,
        description: "random stable linear system y' = M y + B x, y(0) = y0 + C x",
        accepts: &["state_dim", "input_dim", "seed"],
        build: ode_linear_nd,
    },
    Registration {
        name: "opt-constrained-sum",
        kind: ProblemKind::ConstrainedOptimization,
        description: "maximize -(y1^2 + y2^2)/2 subject to y1 + y2 = x",
        accepts: &[],
        build: opt_constrained_sum,
    },
    Registration {
        name: "opt-exp",
        kind: ProblemKind::Optimization,
        description: "maximize x y - exp(y); y* = log x",
        accepts: &[],
        build: opt_exp,
    },
    Registration {
        name: "opt-quadratic",
        kind: ProblemKind::Optimization,
        description: "maximize -y'Qy/2 + y'Bx with fixed SPD Q",
        accepts: &[],
        build: opt_quadratic,
    },
    Registration {
        name: "opt-saddle",
        kind: ProblemKind::Optimization,
        description: "stationary point of (y1^2 - y2^2)/2 - x y1; indefinite Hessian",
        accepts: &[],
        build: opt_saddle,
    },
];

pub fn enumerate() -> Vec<Entry> {
    PROBLEMS
        .iter()
        .map(|r| Entry {
            name: r.name,
            kind: r.kind,
            description: r.description,
        })
        .collect()
}

pub fn names() -> Vec<&'static str> {
    PROBLEMS.iter().map(|r| r.name).collect()
}

pub fn lookup(name: &str) -> Result<ProblemSpec> {
    lookup_with(name, &Overrides::default())
}

pub fn lookup_with(name: &str, overrides: &Overrides) -> Result<ProblemSpec> {
    let reg = PROBLEMS
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::UnknownProblem {
            name: name.to_string(),
            available: names().iter().map(|s| s.to_string()).collect(),
        })?;
    let requested = [
        ("state_dim", overrides.state_dim.is_some()),
        ("input_dim", overrides.input_dim.is_some()),
        ("steps", overrides.steps.is_some()),
        ("seed", overrides.seed.is_some()),
    ];
    if let Some((key, _)) = requested.iter().find(|(k, set)| *set && !reg.accepts.contains(k)) {
        return Err(Error::Contract(format!("problem {name} does not accept the override {key}")));
    }
    let spec = (reg.build)(overrides)?;
    debug_assert_eq!(spec.kind, reg.kind);
    Ok(spec)
}

/// Override keys accepted by a problem.
pub fn accepted_overrides(name: &str) -> Option<&'static [&'static str]> {
    PROBLEMS.iter().find(|r| r.name == name).map(|r| r.accepts)
}

fn spec(
    name: &'static str,
    kind: ProblemKind,
    dims: Dims,
    default_x: Vec<f64>,
    default_alpha: Vec<f64>,
    model: Model,
    analytic: Option<AnalyticGradient>,
) -> Result<ProblemSpec> {
    let description = PROBLEMS
        .iter()
        .find(|r| r.name == name)
        .map(|r| r.description)
        .unwrap_or_default();
    Ok(ProblemSpec {
        name,
        kind,
        description,
        dims,
        default_x,
        default_alpha,
        model,
        analytic_gradient: analytic,
    })
}

fn dims(input: usize, output: usize, extra: usize) -> Dims {
    Dims { input, output, extra }
}

fn positive(what: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::Contract(format!("{what} must be positive")));
    }
    Ok(v)
}

fn algebraic_sqrt(_: &Overrides) -> Result<ProblemSpec> {
    let system = ConstraintSystem::new(1, 1, |x, y| vec![y[0] * y[0] - x[0]]);
    spec(
        "algebraic-sqrt",
        ProblemKind::Algebraic,
        dims(1, 1, 0),
        vec![4.0],
        vec![1.0],
        Model::Algebraic { system, y0: vec![1.0] },
        Some(Arc::new(|x, a| vec![a[0] / (2.0 * x[0].sqrt())])),
    )
}

fn algebraic_linear(_: &Overrides) -> Result<ProblemSpec> {
    // A = [[3, 1], [1, 2]], B = [[1, 0], [2, 1]], A⁻¹B = [[0, −0.2], [1, 0.6]]
    let system = ConstraintSystem::new(2, 2, |x, y| {
        vec![
            y[0] * 3.0 + y[1] - x[0],
            y[0] + y[1] * 2.0 - (x[0] * 2.0 + x[1]),
        ]
    });
    spec(
        "algebraic-linear",
        ProblemKind::Algebraic,
        dims(2, 2, 0),
        vec![1.0, -0.5],
        vec![1.0, 1.0],
        Model::Algebraic {
            system,
            y0: vec![0.0, 0.0],
        },
        Some(Arc::new(|_x, a| vec![a[1], -0.2 * a[0] + 0.6 * a[1]])),
    )
}

fn algebraic_coupled(_: &Overrides) -> Result<ProblemSpec> {
    let system = ConstraintSystem::new(2, 2, |x, y| {
        vec![
            y[0].powi(3) + y[1] - x[0],
            y[1] + x[1] * y[0].sin() - x[1] * x[1],
        ]
    });
    spec(
        "algebraic-coupled",
        ProblemKind::Algebraic,
        dims(2, 2, 0),
        vec![2.0, 0.7],
        vec![0.6, -0.4],
        Model::Algebraic {
            system,
            y0: vec![1.0, 0.0],
        },
        None,
    )
}

fn diffeq_constant(o: &Overrides) -> Result<ProblemSpec> {
    let steps = positive("steps", o.steps.unwrap_or(5))?;
    let system = DifferenceSystem::new(1, 1, steps, |_y, x, _i| vec![x[0] * 1.0], |x| vec![x[0] * 0.0])?;
    let n = steps as f64;
    spec(
        "diffeq-constant",
        ProblemKind::Difference,
        dims(1, 1, 0),
        vec![0.7],
        vec![1.0],
        Model::Difference(system),
        Some(Arc::new(move |_x, a| vec![n * a[0]])),
    )
}

fn diffeq_geometric(o: &Overrides) -> Result<ProblemSpec> {
    let steps = positive("steps", o.steps.unwrap_or(3))?;
    let system = DifferenceSystem::new(1, 1, steps, |y, x, _i| vec![x[0] * y[0]], |x| vec![x[0].lift(1.0)])?;
    let n = steps as i32;
    spec(
        "diffeq-geometric",
        ProblemKind::Difference,
        dims(1, 1, 0),
        vec![0.3],
        vec![1.0],
        Model::Difference(system),
        Some(Arc::new(move |x, a| vec![a[0] * n as f64 * (1.0 + x[0]).powi(n - 1)])),
    )
}

fn diffeq_nonlinear(o: &Overrides) -> Result<ProblemSpec> {
    let steps = positive("steps", o.steps.unwrap_or(100))?;
    let h = 1.0 / steps as f64;
    let system = DifferenceSystem::new(
        2,
        2,
        steps,
        move |y, x, _i| vec![y[1] * h, (x[0] * y[0].sin() + x[1] * y[1]) * -h],
        |x| vec![x[0] * 0.5, x[0] * 0.0],
    )?;
    spec(
        "diffeq-nonlinear",
        ProblemKind::Difference,
        dims(2, 2, 0),
        vec![2.0, 0.3],
        vec![1.0, 0.5],
        Model::Difference(system),
        None,
    )
}

fn opt_quadratic(_: &Overrides) -> Result<ProblemSpec> {
    // Q = [[2, 0.5], [0.5, 1]], B = [[1, 0], [0.5, −1]]
    let problem = ObjectiveProblem::new(2, 2, |x, y| {
        let quad = y[0] * y[0] * 2.0 + y[0] * y[1] + y[1] * y[1];
        let lin = y[0] * x[0] + y[1] * (x[0] * 0.5 - x[1]);
        quad * -0.5 + lin
    });
    let analytic = |_x: &[f64], a: &[f64]| {
        let det = 2.0 * 1.0 - 0.25;
        let qi = [[1.0 / det, -0.5 / det], [-0.5 / det, 2.0 / det]];
        let b = [[1.0, 0.0], [0.5, -1.0]];
        // (Q⁻¹B)ᵀα
        (0..2)
            .map(|j| {
                (0..2)
                    .map(|r| a[r] * (qi[r][0] * b[0][j] + qi[r][1] * b[1][j]))
                    .sum()
            })
            .collect()
    };
    spec(
        "opt-quadratic",
        ProblemKind::Optimization,
        dims(2, 2, 0),
        vec![1.0, 2.0],
        vec![1.0, -1.0],
        Model::Optimization {
            problem,
            y0: vec![0.0, 0.0],
        },
        Some(Arc::new(analytic)),
    )
}

fn opt_exp(_: &Overrides) -> Result<ProblemSpec> {
    let problem = ObjectiveProblem::new(1, 1, |x, y| x[0] * y[0] - y[0].exp()).with_start_hint(vec![0.0]);
    spec(
        "opt-exp",
        ProblemKind::Optimization,
        dims(1, 1, 0),
        vec![2.0],
        vec![1.0],
        Model::Optimization { problem, y0: vec![0.0] },
        Some(Arc::new(|x, a| vec![a[0] / x[0]])),
    )
}

fn opt_saddle(_: &Overrides) -> Result<ProblemSpec> {
    let problem = ObjectiveProblem::new(1, 2, |x, y| (y[0] * y[0] - y[1] * y[1]) * 0.5 - x[0] * y[0]);
    spec(
        "opt-saddle",
        ProblemKind::Optimization,
        dims(1, 2, 0),
        vec![1.0],
        vec![1.0, 0.0],
        Model::Optimization {
            problem,
            y0: vec![0.0, 0.5],
        },
        Some(Arc::new(|_x, a| vec![a[0]])),
    )
}

fn opt_constrained_sum(_: &Overrides) -> Result<ProblemSpec> {
    let f = ObjectiveProblem::new(1, 2, |_x, y| (y[0] * y[0] + y[1] * y[1]) * -0.5);
    let problem = ConstrainedProblem::new(f, 1, |x, y| vec![y[0] + y[1] - x[0]])?;
    spec(
        "opt-constrained-sum",
        ProblemKind::ConstrainedOptimization,
        dims(1, 2, 1),
        vec![1.4],
        vec![1.0, 0.0],
        Model::ConstrainedOptimization {
            problem,
            y0: vec![0.0, 0.0],
            mu0: vec![0.0],
        },
        Some(Arc::new(|_x, a| vec![0.5 * (a[0] + a[1])])),
    )
}

fn ode_decay(_: &Overrides) -> Result<ProblemSpec> {
    let tau = 1.0;
    let system = OdeSystem::new(2, 1, tau, |x, y, _t| vec![-(x[0] * y[0])], |x| vec![x[1] * 1.0])?;
    spec(
        "ode-decay",
        ProblemKind::Ode,
        dims(2, 1, 0),
        vec![0.5, 2.0],
        vec![1.0],
        Model::Ode(system),
        Some(Arc::new(move |x, a| {
            let e = (-x[0] * tau).exp();
            vec![-a[0] * tau * x[1] * e, a[0] * e]
        })),
    )
}

fn ode_harmonic(_: &Overrides) -> Result<ProblemSpec> {
    let tau = 3.0;
    let system = OdeSystem::new(1, 2, tau, |x, y, _t| vec![y[1] * 1.0, -(x[0] * y[0])], |x| {
        vec![x[0].lift(1.0), x[0].lift(0.0)]
    })?;
    // y1 = cos(ωt), y2 = −ω sin(ωt), ω = √x
    spec(
        "ode-harmonic",
        ProblemKind::Ode,
        dims(1, 2, 0),
        vec![2.0],
        vec![1.0, 0.5],
        Model::Ode(system),
        Some(Arc::new(move |x, a| {
            let w = x[0].sqrt();
            let (s, c) = (w * tau).sin_cos();
            let dy1 = -tau * s / (2.0 * w);
            let dy2 = -s / (2.0 * w) - tau * c / 2.0;
            vec![a[0] * dy1 + a[1] * dy2]
        })),
    )
}

/// Data of `ode-linear-nd`: `y' = My + Bx`, `y(0) = y0 + Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOdeData {
    pub m: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub y0: Vec<f64>,
    pub horizon: f64,
}

/// Random stable linear dynamics from a ChaCha8 stream.
pub fn linear_ode_data(state_dim: usize, input_dim: usize, seed: u64) -> LinearOdeData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize, scale: f64| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| scale * rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let n = state_dim as f64;
    let mut m = uniform(state_dim, state_dim, 0.5 / n.sqrt());
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    let b = uniform(state_dim, input_dim, 1.0 / (input_dim as f64).sqrt());
    let c = uniform(state_dim, input_dim, 1.0 / (input_dim as f64).sqrt());
    let y0 = uniform(1, state_dim, 1.0).remove(0);
    LinearOdeData {
        m,
        b,
        c,
        y0,
        horizon: 1.0,
    }
}

fn ode_linear_nd(o: &Overrides) -> Result<ProblemSpec> {
    let n = positive("state_dim", o.state_dim.unwrap_or(3))?;
    let i = positive("input_dim", o.input_dim.unwrap_or(2))?;
    let data = Arc::new(linear_ode_data(n, i, o.seed.unwrap_or(0)));
    let (d1, d2) = (Arc::clone(&data), Arc::clone(&data));
    let system = OdeSystem::new(
        i,
        n,
        data.horizon,
        move |x, y, _t| {
            (0..n)
                .map(|r| {
                    let my = dot_const(y, &d1.m[r]).unwrap_or_else(|| y[0] * 0.0);
                    let bx = dot_const(x, &d1.b[r]).unwrap_or_else(|| x[0] * 0.0);
                    my + bx
                })
                .collect()
        },
        move |x| {
            (0..n)
                .map(|r| dot_const(x, &d2.c[r]).unwrap_or_else(|| x[0] * 0.0) + d2.y0[r])
                .collect()
        },
    )?;
    let default_x = (0..i).map(|k| 0.5 - 0.1 * (k % 7) as f64).collect();
    let default_alpha = (0..n).map(|k| if k % 2 == 0 { 1.0 } else { -0.5 }).collect();
    spec(
        "ode-linear-nd",
        ProblemKind::Ode,
        dims(i, n, 0),
        default_x,
        default_alpha,
        Model::Ode(system),
        None,
    )
}

fn dae_conserved_sum(_: &Overrides) -> Result<ProblemSpec> {
    let tau = 1.0;
    let system = DaeSystem::new(
        1,
        1,
        1,
        tau,
        |x, y, _t| vec![-(x[0] * y[0])],
        |_x, y, _t| vec![y[0] + y[1] - 1.0],
        |x| vec![x[0].lift(0.5)],
    )?;
    spec(
        "dae-conserved-sum",
        ProblemKind::Dae,
        dims(1, 2, 1),
        vec![1.0],
        vec![0.0, 1.0],
        Model::Dae(system),
        // y2(τ) = 1 − y1(τ), y1(τ) = 0.5 e^{−xτ}
        Some(Arc::new(move |x, a| vec![0.5 * tau * (-x[0] * tau).exp() * (a[1] - a[0])])),
    )
}

fn dae_cubic(_: &Overrides) -> Result<ProblemSpec> {
    let system = DaeSystem::new(
        2,
        2,
        1,
        1.5,
        |x, y, t| vec![y[1] * x[0] - y[2] * 0.5, -(y[0] * x[1]) + y[2] * y[2] * 0.2 + t * 0.1],
        |x, y, _t| vec![y[2] * y[2] * y[2] + y[2] - y[0] * x[1] - y[1]],
        |x| vec![x[0] * 1.0, x[1] * 0.5],
    )?;
    spec(
        "dae-cubic",
        ProblemKind::Dae,
        dims(2, 3, 1),
        vec![0.3, 0.8],
        vec![0.4, -0.9, 1.3],
        Model::Dae(system),
        None,
    )
}
