//! Uniform entry points over registry problems: evaluate the implicit
//! function and compute `(dg/dx)ᵀα` with a chosen method.

use std::fmt;

use crate::algebraic;
use crate::dae;
use crate::difference;
use crate::error::{Error, Result};
use crate::fd;
use crate::newton::NewtonConfig;
use crate::ode::{self, IntegratorConfig};
use crate::optimize;
use crate::registry::{Model, ProblemKind, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Trace,
    IftForward,
    IftReverse,
    Adjoint,
    ForwardSens,
    Fd,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Trace,
        Method::IftForward,
        Method::IftReverse,
        Method::Adjoint,
        Method::ForwardSens,
        Method::Fd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Trace => "trace",
            Method::IftForward => "ift-forward",
            Method::IftReverse => "ift-reverse",
            Method::Adjoint => "adjoint",
            Method::ForwardSens => "forward-sens",
            Method::Fd => "fd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn available_methods(kind: ProblemKind) -> &'static [Method] {
    use Method::*;
    match kind {
        ProblemKind::Algebraic => &[Trace, IftForward, IftReverse, Adjoint, Fd],
        ProblemKind::Difference => &[Trace, IftReverse, Adjoint, Fd],
        ProblemKind::Optimization | ProblemKind::ConstrainedOptimization => &[IftReverse, Fd],
        ProblemKind::Ode => &[Trace, Adjoint, ForwardSens, Fd],
        ProblemKind::Dae => &[Adjoint, ForwardSens, Fd],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub newton: NewtonConfig,
    pub integrator: IntegratorConfig,
    /// RK4 step for the ODE trace route.
    pub trace_step: f64,
    /// Relative finite-difference step; `None` picks the per-kind default.
    pub fd_step: Option<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            integrator: IntegratorConfig::default(),
            trace_step: 1e-3,
            fd_step: None,
        }
    }
}

impl Settings {
    pub fn fd_step_for(&self, kind: ProblemKind) -> f64 {
        self.fd_step
            .unwrap_or(if kind.is_dynamic() { 1e-5 } else { fd::DEFAULT_STEP })
    }
}

/// Pass threshold on the relative deviation from finite differences.
pub fn gradcheck_tolerance(kind: ProblemKind) -> f64 {
    if kind.is_dynamic() {
        1e-4
    } else {
        1e-5
    }
}

/// Agreement threshold between two methods.
pub fn pair_tolerance(a: Method, b: Method) -> f64 {
    use Method::*;
    match (a.min(b), a.max(b)) {
        (x, y) if x == Fd || y == Fd => 1e-5,
        (Trace, _) => 1e-6,
        (_, ForwardSens) => 1e-6,
        _ => 1e-10,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: Vec<f64>,
    /// Newton iterations, simulation steps or accepted integrator steps.
    pub iterations: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRun {
    pub value: Vec<f64>,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub warning: Option<String>,
}

fn check_x(spec: &ProblemSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dims.input {
        return Err(Error::dims("problem input", spec.dims.input, x.len()));
    }
    Ok(())
}

/// Solves the problem at `x` and returns the summarized output.
pub fn evaluate(spec: &ProblemSpec, x: &[f64], settings: &Settings) -> Result<Evaluation> {
    check_x(spec, x)?;
    let ok = |value: Vec<f64>, iterations: usize| Evaluation {
        value,
        iterations,
        warning: None,
    };
    Ok(match &spec.model {
        Model::Algebraic { system, y0 } => {
            let s = algebraic::newton_solve(system, x, y0, &settings.newton, false)?;
            ok(system.summary_value(&s.y_star)?, s.iterations)
        }
        Model::Difference(sys) => {
            let t = difference::simulate(sys, x)?;
            ok(t.final_state().to_vec(), sys.steps())
        }
        Model::Optimization { problem, y0 } => {
            let s = optimize::maximize(problem, x, y0, &settings.newton)?;
            Evaluation {
                value: s.y_star,
                iterations: s.iterations,
                warning: s.warning,
            }
        }
        Model::ConstrainedOptimization { problem, y0, mu0 } => {
            let s = optimize::maximize_constrained(problem, x, y0, mu0, &settings.newton)?;
            ok(s.y_star, s.iterations)
        }
        Model::Ode(sys) => {
            let t = ode::integrate(sys, x, &settings.integrator)?;
            ok(t.final_state().to_vec(), t.steps())
        }
        Model::Dae(sys) => {
            let t = dae::dae_integrate(sys, x, &settings.integrator)?;
            ok(t.final_state(), t.differential.steps())
        }
    })
}

fn unsupported(spec: &ProblemSpec, method: Method) -> Error {
    Error::UnsupportedMethod {
        method: method.name().to_string(),
        kind: spec.kind.name().to_string(),
    }
}

/// `(dg/dx)ᵀα` at `x` with `method`.
pub fn gradient(spec: &ProblemSpec, method: Method, x: &[f64], alpha: &[f64], settings: &Settings) -> Result<GradientRun> {
    check_x(spec, x)?;
    if alpha.len() != spec.dims.output {
        return Err(Error::dims("cotangent", spec.dims.output, alpha.len()));
    }
    if !available_methods(spec.kind).contains(&method) {
        return Err(unsupported(spec, method));
    }
    if method == Method::Fd {
        let eval = evaluate(spec, x, settings)?;
        let h = settings.fd_step_for(spec.kind);
        let g = fd::gradient(|x: &[f64]| Ok(evaluate(spec, x, settings)?.value), x, alpha, h)?;
        return Ok(GradientRun {
            value: eval.value,
            gradient: g,
            iterations: eval.iterations,
            warning: eval.warning,
        });
    }
    let run = |value: Vec<f64>, gradient: Vec<f64>, iterations: usize| GradientRun {
        value,
        gradient,
        iterations,
        warning: None,
    };
    Ok(match &spec.model {
        Model::Algebraic { system, y0 } => {
            if method == Method::Trace {
                let t = algebraic::trace_reverse(system, x, y0, &settings.newton, alpha)?;
                let value = system.summary_value(&t.solution.y_star)?;
                return Ok(run(value, t.gradient, t.solution.iterations));
            }
            let s = algebraic::newton_solve(system, x, y0, &settings.newton, false)?;
            let value = system.summary_value(&s.y_star)?;
            let g = match method {
                Method::IftReverse => algebraic::ift_reverse(system, x, &s.y_star, alpha)?,
                Method::Adjoint => algebraic::adjoint_reverse(system, x, &s.y_star, alpha)?.gradient,
                Method::IftForward => {
                    let mut g = vec![0.0; x.len()];
                    let mut v = vec![0.0; x.len()];
                    for j in 0..x.len() {
                        v[j] = 1.0;
                        let col = algebraic::ift_forward(system, x, &s.y_star, &v)?;
                        v[j] = 0.0;
                        g[j] = col.iter().zip(alpha).map(|(a, b)| a * b).sum();
                    }
                    g
                }
                _ => return Err(unsupported(spec, method)),
            };
            run(value, g, s.iterations)
        }
        Model::Difference(sys) => {
            let traj = difference::simulate(sys, x)?;
            let value = traj.final_state().to_vec();
            let g = match method {
                Method::IftReverse => difference::reverse_ift(sys, x, &traj, alpha)?.gradient,
                Method::Adjoint => difference::reverse_adjoint(sys, x, &traj, alpha)?.gradient,
                Method::Trace => difference::trace_reverse(sys, x, alpha)?.0,
                _ => return Err(unsupported(spec, method)),
            };
            run(value, g, sys.steps())
        }
        Model::Optimization { problem, y0 } => {
            let s = optimize::maximize(problem, x, y0, &settings.newton)?;
            let g = optimize::reverse_unconstrained(problem, x, &s, alpha)?;
            GradientRun {
                value: s.y_star.clone(),
                gradient: g,
                iterations: s.iterations,
                warning: s.warning,
            }
        }
        Model::ConstrainedOptimization { problem, y0, mu0 } => {
            let s = optimize::maximize_constrained(problem, x, y0, mu0, &settings.newton)?;
            let g = optimize::reverse_constrained(problem, x, &s, alpha)?;
            run(s.y_star, g, s.iterations)
        }
        Model::Ode(sys) => match method {
            Method::Adjoint => {
                let t = ode::integrate(sys, x, &settings.integrator)?;
                let a = ode::adjoint_reverse(sys, x, &t, alpha, &settings.integrator)?;
                run(t.final_state().to_vec(), a.gradient, t.steps())
            }
            Method::ForwardSens => {
                let f = ode::forward_sensitivity(sys, x, &settings.integrator)?;
                let value = f.trajectory.final_state()[..sys.dim_y()].to_vec();
                run(value, f.sensitivity.matvec_transposed(alpha), f.trajectory.steps())
            }
            Method::Trace => {
                let cfg = IntegratorConfig {
                    max_steps: settings.integrator.max_steps,
                    ..IntegratorConfig::rk4(settings.trace_step)
                };
                let value = ode::integrate(sys, x, &cfg)?.final_state().to_vec();
                let t = ode::trace_reverse_ode(sys, x, &cfg, alpha)?;
                run(value, t.gradient, t.steps)
            }
            _ => return Err(unsupported(spec, method)),
        },
        Model::Dae(sys) => match method {
            Method::Adjoint => {
                let t = dae::dae_integrate(sys, x, &settings.integrator)?;
                let a = dae::dae_adjoint_reverse(sys, x, &t, alpha, &settings.integrator)?;
                run(t.final_state(), a.gradient, t.differential.steps())
            }
            Method::ForwardSens => {
                let t = dae::dae_integrate(sys, x, &settings.integrator)?;
                let s = dae::dae_forward_sensitivity(sys, x, &settings.integrator)?;
                run(t.final_state(), s.matvec_transposed(alpha), t.differential.steps())
            }
            _ => return Err(unsupported(spec, method)),
        },
    })
}

/// `max_i |γ_i − (α − λ_i)|` over the two backward recursions of a
/// difference problem.
pub fn difference_bridge(spec: &ProblemSpec, x: &[f64], alpha: &[f64]) -> Result<f64> {
    let Model::Difference(sys) = &spec.model else {
        return Err(Error::Contract(format!("{} is not a difference problem", spec.name)));
    };
    let traj = difference::simulate(sys, x)?;
    let ift = difference::reverse_ift(sys, x, &traj, alpha)?;
    let adj = difference::reverse_adjoint(sys, x, &traj, alpha)?;
    let mut worst: f64 = 0.0;
    for (g, l) in ift.backward_states.iter().zip(&adj.backward_states) {
        for ((gv, lv), a) in g.iter().zip(l).zip(alpha) {
            worst = worst.max((gv - (a - lv)).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub analytic: Vec<f64>,
    pub fd: Vec<f64>,
    pub max_rel_err: f64,
}

/// Analytic gradient against finite differences at the default input.
/// `None` when the problem has no closed form.
pub fn self_check(spec: &ProblemSpec, settings: &Settings) -> Result<Option<SelfCheck>> {
    let Some(analytic) = &spec.analytic_gradient else {
        return Ok(None);
    };
    let a = analytic(&spec.default_x, &spec.default_alpha);
    let g = gradient(spec, Method::Fd, &spec.default_x, &spec.default_alpha, settings)?.gradient;
    Ok(Some(SelfCheck {
        max_rel_err: fd::max_rel_err(&a, &g),
        analytic: a,
        fd: g,
    }))
}
