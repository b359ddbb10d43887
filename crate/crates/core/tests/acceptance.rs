//! End-to-end acceptance run. Every criterion prints one PASS/FAIL line and
//! the process exits non-zero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use impdiff::ad::{self, Var};
use impdiff::algebraic::{self, ConstraintSystem};
use impdiff::dae::{self, DaeSystem};
use impdiff::difference;
use impdiff::methods::{self, Method, Settings};
use impdiff::ode::{self, OdeSystem};
use impdiff::optimize::{self, ConstrainedProblem, Definiteness};
use impdiff::registry::{self, Model, Overrides, ProblemKind};
use impdiff::{fd, DenseMatrix, Error, NewtonConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dot, expm_with_integral, max_abs_diff};

// Pinned tolerances.
const DUALITY_TOL: f64 = 1e-12;
const DUALITY_BUDGET: Duration = Duration::from_secs(5);
const FIGURE_TOL: f64 = 1e-9;
const IFT_FD_TOL: f64 = 1e-5;
const IFT_DUALITY_TOL: f64 = 1e-10;
const ADJOINT_IFT_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-6;
const BRIDGE_TOL: f64 = 1e-12;
const DIFF_FD_TOL: f64 = 1e-5;
const OPT_TOL: f64 = 1e-6;
const ODE_DECAY_TOL: f64 = 1e-6;
const ODE_BUDGET: Duration = Duration::from_secs(2);
const FWD_ADJ_TOL: f64 = 1e-6;
const EXPM_TOL: f64 = 1e-8;
const DAE_RESIDUAL_TOL: f64 = 1e-10;
const DAE_ANALYTIC_TOL: f64 = 1e-5;
const DAE_REDUCTION_TOL: f64 = 1e-6;
const DAE_DEGENERATE_TOL: f64 = 1e-10;
const BENCH_REPS: usize = 3;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T>(r: impdiff::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// f(x) = (x1 + x2) / (x2 x3)
fn figure_program<'t>(x: &[Var<'t>]) -> Vec<Var<'t>> {
    vec![(x[0] + x[1]) / (x[1] * x[2])]
}

#[derive(Clone, Copy)]
enum Op {
    Add,
    Sub,
    Mul,
    Ratio,
    Sin,
    Cos,
    Bump,
    SoftAbs,
}

struct RandomProgram {
    inputs: usize,
    ops: Vec<(Op, usize, usize)>,
    outputs: usize,
}

impl RandomProgram {
    fn generate(rng: &mut ChaCha8Rng) -> Self {
        let inputs = rng.gen_range(2..=6);
        let depth = rng.gen_range(5..=50);
        let mut ops = Vec::with_capacity(depth);
        for k in 0..depth {
            let pool = inputs + k;
            let op = match rng.gen_range(0..8) {
                0 => Op::Add,
                1 => Op::Sub,
                2 => Op::Mul,
                3 => Op::Ratio,
                4 => Op::Sin,
                5 => Op::Cos,
                6 => Op::Bump,
                _ => Op::SoftAbs,
            };
            ops.push((op, rng.gen_range(0..pool), rng.gen_range(0..pool)));
        }
        let outputs = rng.gen_range(1..=3).min(depth);
        Self { inputs, ops, outputs }
    }

    fn run<'t>(&self, x: &[Var<'t>]) -> Vec<Var<'t>> {
        let mut pool: Vec<Var<'t>> = x.to_vec();
        for &(op, i, j) in &self.ops {
            let (a, b) = (pool[i], pool[j]);
            let v = match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b * 0.5,
                Op::Ratio => a / (b.square() + 1.0),
                Op::Sin => a.sin(),
                Op::Cos => b.cos(),
                Op::Bump => (-a.square()).exp(),
                Op::SoftAbs => (a.square() + 1.0).sqrt(),
            };
            pool.push(v);
        }
        pool[pool.len() - self.outputs..].to_vec()
    }
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let programs = 25;
    for _ in 0..programs {
        let p = RandomProgram::generate(&mut rng);
        let x: Vec<f64> = (0..p.inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..p.inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha: Vec<f64> = (0..p.outputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tape = ok(ad::record(&x, |xs: &[Var<'_>]| p.run(xs)))?;
        let jv = ok(tape.forward_sweep(&v))?;
        let jta = ok(tape.reverse_sweep(&alpha))?;
        let lhs = dot(&alpha, &jv);
        let rhs = dot(&jta, &v);
        let scale = 1.0
            + alpha.iter().zip(&jv).map(|(a, b)| (a * b).abs()).sum::<f64>()
            + jta.iter().zip(&v).map(|(a, b)| (a * b).abs()).sum::<f64>();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    let elapsed = start.elapsed();
    ensure(worst <= DUALITY_TOL, format!("duality gap {worst:e}"))?;
    ensure(elapsed < DUALITY_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("{programs} programs, max scaled gap {worst:.1e}, {elapsed:.2?}"))
}

fn criterion_2() -> Check {
    let x = [1.0, 2.0, 3.0];
    let tape = ok(ad::record(&x, figure_program))?;
    let g = ok(tape.reverse_sweep(&[1.0]))?;
    let oracle = ok(fd::gradient(|x| ad::evaluate(x, figure_program), &x, &[1.0], 1e-5))?;
    let closed = [1.0 / 6.0, -1.0 / 12.0, -1.0 / 6.0];
    let vs_fd = max_abs_diff(&g, &oracle);
    let vs_closed = max_abs_diff(&g, &closed);
    ensure(vs_fd <= FIGURE_TOL, format!("vs FD {vs_fd:e}"))?;
    ensure(vs_closed <= FIGURE_TOL, format!("vs closed form {vs_closed:e}"))?;
    Ok(format!("gradient {g:?}, FD gap {vs_fd:.1e}"))
}

/// `c_j = y_j + 0.3 y_j³ + s Σ_k a_jk y_k + 0.1 b_j y_j y_{j+1} + 0.1 x_0 y_j − Σ_i e_ji x_i`.
fn random_polynomial_system(rng: &mut ChaCha8Rng) -> (ConstraintSystem, Vec<f64>) {
    let nj = rng.gen_range(1..=6);
    let ni = rng.gen_range(1..=4);
    let s = 0.5 / nj as f64;
    let a: Vec<f64> = (0..nj * nj).map(|_| s * rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..nj).map(|_| 0.1 * rng.gen_range(-1.0..1.0)).collect();
    let e: Vec<f64> = (0..nj * ni).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..ni).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sys = ConstraintSystem::new(ni, nj, move |x, y| {
        (0..nj)
            .map(|j| {
                let mut c = y[j] + y[j].powi(3) * 0.3 + y[(j + 1) % nj] * y[j] * b[j] + x[0] * y[j] * 0.1;
                for k in 0..nj {
                    c = c + y[k] * a[j * nj + k];
                }
                for i in 0..ni {
                    c = c - x[i] * e[j * ni + i];
                }
                c
            })
            .collect()
    });
    (sys, x)
}

fn check_ift_pair(sys: &ConstraintSystem, x: &[f64], y0: &[f64], rng: &mut ChaCha8Rng) -> Result<(f64, f64), String> {
    let cfg = NewtonConfig::default();
    let y = ok(algebraic::newton_solve(sys, x, y0, &cfg, false))?.y_star;
    let oracle = ok(fd::jacobian(
        |x| Ok(algebraic::newton_solve(sys, x, &y, &cfg, false)?.y_star),
        x,
        1e-6,
    ))?;
    let ni = x.len();
    let nj = y.len();
    let mut fd_err: f64 = 0.0;
    for i in 0..ni {
        let mut v = vec![0.0; ni];
        v[i] = 1.0;
        let col = ok(algebraic::ift_forward(sys, x, &y, &v))?;
        fd_err = fd_err.max(fd::max_rel_err(&col, &oracle.column(i)));
    }
    for j in 0..nj {
        let mut a = vec![0.0; nj];
        a[j] = 1.0;
        let row = ok(algebraic::ift_reverse(sys, x, &y, &a))?;
        fd_err = fd_err.max(fd::max_rel_err(&row, oracle.row(j)));
    }
    let v: Vec<f64> = (0..ni).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let alpha: Vec<f64> = (0..nj).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let jv = ok(algebraic::ift_forward(sys, x, &y, &v))?;
    let jta = ok(algebraic::ift_reverse(sys, x, &y, &alpha))?;
    let gap = (dot(&alpha, &jv) - dot(&jta, &v)).abs() / (1.0 + dot(&alpha, &jv).abs());
    Ok((fd_err, gap))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_fd: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for name in ["algebraic-sqrt", "algebraic-linear"] {
        let spec = ok(registry::lookup(name))?;
        let Model::Algebraic { system, y0 } = &spec.model else {
            return Err(format!("{name} is not algebraic"));
        };
        let (e, g) = check_ift_pair(system, &spec.default_x, y0, &mut rng)?;
        worst_fd = worst_fd.max(e);
        worst_gap = worst_gap.max(g);
    }
    for _ in 0..10 {
        let (sys, x) = random_polynomial_system(&mut rng);
        let y0 = vec![0.0; sys.dim_y()];
        let (e, g) = check_ift_pair(&sys, &x, &y0, &mut rng)?;
        worst_fd = worst_fd.max(e);
        worst_gap = worst_gap.max(g);
    }
    ensure(worst_fd <= IFT_FD_TOL, format!("vs FD {worst_fd:e}"))?;
    ensure(worst_gap <= IFT_DUALITY_TOL, format!("duality {worst_gap:e}"))?;
    Ok(format!("12 systems, FD rel err {worst_fd:.1e}, duality {worst_gap:.1e}"))
}

fn algebraic_specs() -> Vec<impdiff::ProblemSpec> {
    registry::enumerate()
        .into_iter()
        .filter(|e| e.kind == ProblemKind::Algebraic)
        .map(|e| registry::lookup(e.name).unwrap())
        .collect()
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    let specs = algebraic_specs();
    for spec in &specs {
        let Model::Algebraic { system, y0 } = &spec.model else { unreachable!() };
        let y = ok(algebraic::newton_solve(system, &spec.default_x, y0, &NewtonConfig::default(), false))?.y_star;
        let ift = ok(algebraic::ift_reverse(system, &spec.default_x, &y, &spec.default_alpha))?;
        let adj = ok(algebraic::adjoint_reverse(system, &spec.default_x, &y, &spec.default_alpha))?.gradient;
        worst = worst.max(fd::max_rel_err(&adj, &ift));
    }
    ensure(worst <= ADJOINT_IFT_TOL, format!("deviation {worst:e}"))?;
    Ok(format!("{} problems, max deviation {worst:.1e}", specs.len()))
}

fn criterion_5() -> Check {
    let cfg = NewtonConfig::default();
    let mut worst: f64 = 0.0;
    for spec in &algebraic_specs() {
        let Model::Algebraic { system, y0 } = &spec.model else { unreachable!() };
        let x = &spec.default_x;
        let trace = ok(algebraic::trace_reverse(system, x, y0, &cfg, &spec.default_alpha))?;
        let y = trace.solution.y_star.clone();
        let ift = ok(algebraic::ift_reverse(system, x, &y, &spec.default_alpha))?;
        worst = worst.max(fd::max_rel_err(&trace.gradient, &ift));
    }
    ensure(worst <= TRACE_TOL, format!("trace vs IFT {worst:e}"))?;

    // tape length against iteration count from increasingly poor starts
    let spec = ok(registry::lookup("algebraic-coupled"))?;
    let Model::Algebraic { system, .. } = &spec.model else { unreachable!() };
    let mut points: Vec<(usize, usize)> = Vec::new();
    for s in [1.0, 1.5, 3.0, 8.0, 30.0, 200.0] {
        let y0 = vec![s, -0.5 * s];
        let t = ok(algebraic::trace_reverse(system, &spec.default_x, &y0, &cfg, &spec.default_alpha))?;
        if !points.iter().any(|p| p.0 == t.solution.iterations) {
            points.push((t.solution.iterations, t.tape_len));
        }
    }
    points.sort_unstable();
    ensure(points.len() >= 3, format!("only {} distinct iteration counts", points.len()))?;
    let (i0, l0) = points[0];
    let (i1, l1) = points[1];
    let per_iter = (l1 - l0) as f64 / (i1 - i0) as f64;
    for &(i, l) in &points[2..] {
        let predicted = l0 as f64 + per_iter * (i - i0) as f64;
        ensure(
            (predicted - l as f64).abs() < 0.5,
            format!("tape length {l} at {i} iterations off the line (predicted {predicted})"),
        )?;
    }
    Ok(format!("trace vs IFT {worst:.1e}; {per_iter} nodes per iteration over {points:?}"))
}

fn criterion_6() -> Check {
    let mut worst_bridge: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    let settings = Settings::default();
    for name in ["diffeq-constant", "diffeq-geometric", "diffeq-nonlinear"] {
        for steps in [None, Some(1000), Some(10_000)] {
            let spec = ok(registry::lookup_with(name, &Overrides { steps, ..Overrides::default() }))?;
            let Model::Difference(sys) = &spec.model else { unreachable!() };
            // keep (1 + x)^steps bounded on the geometric problem
            let x = match steps {
                Some(n) if name == "diffeq-geometric" => vec![1.0 / n as f64],
                _ => spec.default_x.clone(),
            };
            let alpha = &spec.default_alpha;
            let n = sys.steps();
            let traj = ok(difference::simulate(sys, &x))?;
            let ift = ok(difference::reverse_ift(sys, &x, &traj, alpha))?;
            let adj = ok(difference::reverse_adjoint(sys, &x, &traj, alpha))?;
            ensure(ift.sweeps <= n + 1, format!("{name}: {} IFT sweeps for {n} steps", ift.sweeps))?;
            ensure(adj.sweeps <= n + 1, format!("{name}: {} adjoint sweeps for {n} steps", adj.sweeps))?;
            let bridge = ok(methods::difference_bridge(&spec, &x, alpha))?;
            let scale = ift.backward_states.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            worst_bridge = worst_bridge.max(bridge / scale);
            // (1 + x)^n has third derivative ~n³, so the central difference needs a finer step
            let fd_settings = if name == "diffeq-geometric" && steps.is_some() {
                Settings { fd_step: Some(1e-8), ..settings.clone() }
            } else {
                settings.clone()
            };
            let oracle = ok(methods::gradient(&spec, Method::Fd, &x, alpha, &fd_settings))?.gradient;
            worst_fd = worst_fd
                .max(fd::max_rel_err(&ift.gradient, &oracle))
                .max(fd::max_rel_err(&adj.gradient, &oracle));
        }
    }
    ensure(worst_bridge <= BRIDGE_TOL, format!("bridge {worst_bridge:e}"))?;
    ensure(worst_fd <= DIFF_FD_TOL, format!("vs FD {worst_fd:e}"))?;
    Ok(format!("steps up to 10^4, bridge {worst_bridge:.1e}, FD rel err {worst_fd:.1e}, sweeps = steps + 1"))
}

fn criterion_7() -> Check {
    let settings = Settings::default();
    let spec = ok(registry::lookup("opt-exp"))?;
    let mut worst: f64 = 0.0;
    for x in [0.5, 2.0, 7.0] {
        let g = ok(methods::gradient(&spec, Method::IftReverse, &[x], &[1.0], &settings))?.gradient;
        worst = worst.max((g[0] - 1.0 / x).abs());
    }
    ensure(worst <= OPT_TOL, format!("opt-exp {worst:e}"))?;

    let spec = ok(registry::lookup("opt-constrained-sum"))?;
    let mut worst_c: f64 = 0.0;
    for alpha in [[1.0, 0.0], [0.0, 1.0]] {
        let g = ok(methods::gradient(&spec, Method::IftReverse, &spec.default_x, &alpha, &settings))?.gradient;
        worst_c = worst_c.max((g[0] - 0.5).abs());
    }
    ensure(worst_c <= OPT_TOL, format!("opt-constrained-sum {worst_c:e}"))?;

    let spec = ok(registry::lookup("opt-quadratic"))?;
    let Model::Optimization { problem, y0 } = &spec.model else { unreachable!() };
    let x = &spec.default_x;
    let alpha = &spec.default_alpha;
    let cfg = NewtonConfig::default();
    let plain = ok(optimize::maximize(problem, x, y0, &cfg))?;
    let g_plain = ok(optimize::reverse_unconstrained(problem, x, &plain, alpha))?;
    let wrapped = ok(ConstrainedProblem::new(problem.clone(), 0, |_x, _y| Vec::new()))?;
    let sol = ok(optimize::maximize_constrained(&wrapped, x, y0, &[], &cfg))?;
    let g_wrapped = ok(optimize::reverse_constrained(&wrapped, x, &sol, alpha))?;
    ensure(g_plain == g_wrapped && plain.y_star == sol.y_star, "K_c = 0 path differs")?;
    let analytic = (spec.analytic_gradient.as_ref().unwrap())(x, alpha);
    let vs_closed = fd::max_rel_err(&g_plain, &analytic);
    ensure(vs_closed <= OPT_TOL, format!("opt-quadratic vs closed form {vs_closed:e}"))?;
    Ok(format!("opt-exp {worst:.1e}, constrained {worst_c:.1e}, K_c = 0 bitwise equal"))
}

fn criterion_8() -> Check {
    let spec = ok(registry::lookup("ode-decay"))?;
    let settings = Settings::default();
    ensure(settings.integrator.rel_tol <= 1e-10, "integrator tolerance looser than 1e-10")?;
    let tau = 1.0;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for x in [[0.5, 2.0], [1.0, 1.0], [3.0, -0.7]] {
        let g = ok(methods::gradient(&spec, Method::Adjoint, &x, &[1.0], &settings))?.gradient;
        let e = (-x[0] * tau).exp();
        let closed = [-tau * x[1] * e, e];
        for (a, b) in g.iter().zip(&closed) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= ODE_DECAY_TOL, format!("relative error {worst:e}"))?;
    ensure(elapsed < ODE_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("relative error {worst:.1e}, {elapsed:.2?}"))
}

fn criterion_9() -> Check {
    let settings = Settings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_dual: f64 = 0.0;
    let mut worst_expm: f64 = 0.0;
    for (n, i) in [(3, 2), (5, 1), (10, 10)] {
        let overrides = Overrides { state_dim: Some(n), input_dim: Some(i), seed: Some(0), ..Overrides::default() };
        let spec = ok(registry::lookup_with("ode-linear-nd", &overrides))?;
        let Model::Ode(sys) = &spec.model else { unreachable!() };
        let x = &spec.default_x;
        let fwd = ok(ode::forward_sensitivity(sys, x, &settings.integrator))?;
        let s = &fwd.sensitivity;
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..i).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = ok(methods::gradient(&spec, Method::Adjoint, x, &alpha, &settings))?.gradient;
        let lhs = dot(&alpha, &s.matvec(&v));
        let rhs = dot(&g, &v);
        worst_dual = worst_dual.max((lhs - rhs).abs() / lhs.abs().max(1.0));

        let data = registry::linear_ode_data(n, i, 0);
        let m = DenseMatrix::from_rows(&data.m);
        let b = DenseMatrix::from_rows(&data.b);
        let c = DenseMatrix::from_rows(&data.c);
        let (phi, psi) = expm_with_integral(&m, data.horizon);
        let oracle = phi.matmul(&c);
        let forced = psi.matmul(&b);
        for r in 0..n {
            for col in 0..i {
                let want = oracle[(r, col)] + forced[(r, col)];
                worst_expm = worst_expm.max((s[(r, col)] - want).abs());
            }
        }
    }
    ensure(worst_dual <= FWD_ADJ_TOL, format!("forward vs adjoint {worst_dual:e}"))?;
    ensure(worst_expm <= EXPM_TOL, format!("S vs matrix exponential {worst_expm:e}"))?;
    Ok(format!("forward vs adjoint {worst_dual:.1e}, S vs expm {worst_expm:.1e}"))
}

fn decay_rhs<'t>(x: &[Var<'t>], y: &[Var<'t>], _t: Var<'t>) -> Vec<Var<'t>> {
    vec![-(x[0] * y[0])]
}

fn decay_dae() -> impdiff::Result<(DaeSystem, OdeSystem)> {
    let dae = DaeSystem::new(2, 1, 0, 1.3, decay_rhs, |_x, _y, _t| Vec::new(), |x| vec![x[1] * 1.0])?;
    let ode = OdeSystem::new(2, 1, 1.3, decay_rhs, |x| vec![x[1] * 1.0])?;
    Ok((dae, ode))
}

fn criterion_10() -> Check {
    let settings = Settings::default();
    let cfg = &settings.integrator;
    let spec = ok(registry::lookup("dae-conserved-sum"))?;
    let Model::Dae(sys) = &spec.model else { unreachable!() };
    let x = [1.0];
    let alpha = [0.0, 1.0];
    let traj = ok(dae::dae_integrate(sys, &x, cfg))?;
    let residual = ok(traj.max_constraint_residual(sys, &x))?;
    ensure(residual <= DAE_RESIDUAL_TOL, format!("constraint residual {residual:e}"))?;
    let adj = ok(dae::dae_adjoint_reverse(sys, &x, &traj, &alpha, cfg))?.gradient;
    let closed = 0.5 * (-1.0f64).exp();
    let vs_closed = (adj[0] - closed).abs();
    ensure(vs_closed <= DAE_ANALYTIC_TOL, format!("vs 0.5/e {vs_closed:e}"))?;
    let reduced = ok(dae::reduced_gradient(sys, &x, &alpha, cfg))?;
    let vs_reduced = max_abs_diff(&adj, &reduced);
    ensure(vs_reduced <= DAE_REDUCTION_TOL, format!("vs reduction {vs_reduced:e}"))?;

    let (dae_sys, ode_sys) = ok(decay_dae())?;
    let xd = [0.8, 1.7];
    let dt = ok(dae::dae_integrate(&dae_sys, &xd, cfg))?;
    let ga = ok(dae::dae_adjoint_reverse(&dae_sys, &xd, &dt, &[1.0], cfg))?.gradient;
    let ot = ok(ode::integrate(&ode_sys, &xd, cfg))?;
    let go = ok(ode::adjoint_reverse(&ode_sys, &xd, &ot, &[1.0], cfg))?.gradient;
    let degenerate = max_abs_diff(&ga, &go);
    ensure(degenerate <= DAE_DEGENERATE_TOL, format!("A = 0 vs ODE {degenerate:e}"))?;
    Ok(format!(
        "residual {residual:.1e}, vs 0.5/e {vs_closed:.1e}, vs reduction {vs_reduced:.1e}, A = 0 gap {degenerate:.1e}"
    ))
}

fn median_ns(spec: &impdiff::ProblemSpec, method: Method, settings: &Settings) -> Result<f64, String> {
    let mut times = Vec::with_capacity(BENCH_REPS);
    for _ in 0..BENCH_REPS {
        let start = Instant::now();
        ok(methods::gradient(spec, method, &spec.default_x, &spec.default_alpha, settings))?;
        times.push(start.elapsed().as_nanos() as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[BENCH_REPS / 2])
}

fn criterion_11() -> Check {
    let settings = Settings::default();
    let mut ratios = Vec::new();
    for method in [Method::Adjoint, Method::ForwardSens] {
        let mut medians = Vec::new();
        for i in [1, 10, 100] {
            let overrides = Overrides { state_dim: Some(10), input_dim: Some(i), seed: Some(0), ..Overrides::default() };
            let spec = ok(registry::lookup_with("ode-linear-nd", &overrides))?;
            medians.push(median_ns(&spec, method, &settings)?);
        }
        ratios.push(medians[2] / medians[0]);
    }
    ensure(ratios[0] < ratios[1], format!("adjoint growth {:.2} not below forward {:.2}", ratios[0], ratios[1]))?;
    Ok(format!("growth adjoint {:.2}, forward-sens {:.2}", ratios[0], ratios[1]))
}

fn criterion_12() -> Check {
    let settings = Settings::default();
    let spec = ok(registry::lookup("algebraic-sqrt"))?;
    for method in [Method::Trace, Method::IftForward, Method::IftReverse, Method::Adjoint] {
        match methods::gradient(&spec, method, &[0.0], &[1.0], &settings) {
            Err(Error::ImplicitUndefined { .. }) => {}
            Err(e) => return Err(format!("{method} at x = 0: unexpected error {e}")),
            Ok(r) => return Err(format!("{method} at x = 0 returned {:?}", r.gradient)),
        }
    }
    let spec = ok(registry::lookup("opt-saddle"))?;
    let run = ok(methods::gradient(&spec, Method::IftReverse, &spec.default_x, &spec.default_alpha, &settings))?;
    ensure(run.warning.is_some(), "saddle produced no warning")?;
    let Model::Optimization { problem, y0 } = &spec.model else { unreachable!() };
    let sol = ok(optimize::maximize(problem, &spec.default_x, y0, &NewtonConfig::default()))?;
    ensure(sol.hessian_definiteness == Definiteness::Indefinite, "saddle not flagged indefinite")?;
    Ok("singular C_y -> ImplicitUndefined for 4 methods; saddle -> Indefinite with warning".into())
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("tape duality on random programs", criterion_1),
        ("(x1 + x2)/(x2 x3) gradient", criterion_2),
        ("IFT forward/reverse vs FD and each other", criterion_3),
        ("algebraic adjoint equals IFT", criterion_4),
        ("trace equals IFT, linear tape growth", criterion_5),
        ("difference equation bridge", criterion_6),
        ("optimization sensitivities", criterion_7),
        ("ODE adjoint on decay", criterion_8),
        ("forward sensitivity vs adjoint and expm", criterion_9),
        ("DAE adjoint", criterion_10),
        ("adjoint vs forward scaling", criterion_11),
        ("failure contracts", criterion_12),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
