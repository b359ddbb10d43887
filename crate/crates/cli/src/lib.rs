//! Command-line front end: problem listing, gradient checks, method
//! comparison and scaling runs over the problem registry.

pub mod report;

use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use impdiff::methods::{self, Method, Settings};
use impdiff::registry::{self, Overrides, ProblemKind};
use impdiff::{fd, Error, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use report::{BenchRow, BridgeCheck, CompareReport, Deviation, ListEntry, RunReport, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

const BRIDGE_TOL: f64 = 1e-10;

#[derive(Parser, Debug)]
#[command(name = "impdiff", version, about = "Gradients of implicitly defined functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// List registered problems.
    List {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare one method against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run several methods on one problem and report pairwise deviations.
    Compare(CompareArgs),
    /// Time methods over a range of input dimensions.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long)]
    pub problem: String,
    /// Comma-separated input point; defaults to the problem's own.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Comma-separated output weights, or `random`.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative finite-difference step.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub state_dim: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    /// Comma-separated methods; defaults to all available for the problem.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Overrides every pairwise tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long, default_value = "ode-linear-nd")]
    pub problem: String,
    #[arg(long, value_delimiter = ',', default_value = "adjoint,forward-sens")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub state_dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    pub input_dim: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

/// Captured result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn usage(msg: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

fn error_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        EXIT_SOLVER
    } else {
        EXIT_USAGE
    }
}

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::List { kind, format } => list(kind.as_deref(), format),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Compare(a) => compare(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn list(kind: Option<&str>, format: Format) -> Outcome {
    let filter = match kind {
        None => None,
        Some(k) => match ProblemKind::parse(k) {
            Some(k) => Some(k),
            None => {
                let kinds: Vec<&str> = ProblemKind::ALL.iter().map(|k| k.name()).collect();
                return Outcome::usage(format!("unknown kind {k}; expected one of {}", kinds.join(", ")));
            }
        },
    };
    let entries: Vec<ListEntry> = registry::enumerate()
        .into_iter()
        .filter(|e| filter.is_none_or(|k| e.kind == k))
        .map(|e| ListEntry {
            name: e.name.to_string(),
            kind: e.kind.name().to_string(),
            description: e.description.to_string(),
        })
        .collect();
    let stdout = match format {
        Format::Json => serde_json::to_string_pretty(&entries).unwrap() + "\n",
        Format::Csv => {
            let mut s = String::from("name,kind,description\n");
            for e in &entries {
                s += &format!("{},{},\"{}\"\n", e.name, e.kind, e.description.replace('"', "\"\""));
            }
            s
        }
        Format::Table => {
            let w = entries.iter().map(|e| e.name.len()).max().unwrap_or(0) + 2;
            let mut s = String::new();
            for e in &entries {
                s += &format!("{:<w$}{:<26}{}\n", e.name, e.kind, e.description);
            }
            s
        }
    };
    Outcome { code: EXIT_OK, stdout, stderr: String::new() }
}

/// Resolved problem, input point and weights.
struct Setup {
    spec: ProblemSpec,
    x: Vec<f64>,
    alpha: Vec<f64>,
    settings: Settings,
}

fn setup(a: &ProblemArgs) -> Result<Setup, Outcome> {
    let accepts = registry::accepted_overrides(&a.problem).unwrap_or(&[]);
    let overrides = Overrides {
        state_dim: a.state_dim,
        input_dim: a.input_dim,
        steps: a.steps,
        seed: accepts.contains(&"seed").then_some(a.seed),
    };
    let spec = registry::lookup_with(&a.problem, &overrides).map_err(|e| Outcome::usage(&e))?;
    let x = a.x.clone().unwrap_or_else(|| spec.default_x.clone());
    if x.len() != spec.dims.input {
        return Err(Outcome::usage(format!(
            "--x has {} entries, {} expects {}",
            x.len(),
            spec.name,
            spec.dims.input
        )));
    }
    let alpha = match a.alpha.as_deref() {
        None => spec.default_alpha.clone(),
        Some("random") => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..spec.default_alpha.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
        Some(s) => {
            let parsed: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == spec.default_alpha.len() => v,
                Ok(v) => {
                    return Err(Outcome::usage(format!(
                        "--alpha has {} entries, {} expects {}",
                        v.len(),
                        spec.name,
                        spec.default_alpha.len()
                    )))
                }
                Err(_) => return Err(Outcome::usage(format!("cannot parse --alpha {s}"))),
            }
        }
    };
    if let Some(h) = a.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Outcome::usage("--h must be positive"));
        }
    }
    let settings = Settings { fd_step: a.h, ..Settings::default() };
    Ok(Setup { spec, x, alpha, settings })
}

fn parse_method(s: &str, kind: ProblemKind) -> Result<Method, String> {
    let m = Method::parse(s).ok_or_else(|| format!("unknown method {s}"))?;
    let avail = methods::available_methods(kind);
    if !avail.contains(&m) {
        let names: Vec<&str> = avail.iter().map(|m| m.name()).collect();
        return Err(format!("method {s} is not available for {kind} problems; use one of {}", names.join(", ")));
    }
    Ok(m)
}

fn default_method(kind: ProblemKind) -> Method {
    if kind.is_dynamic() {
        Method::Adjoint
    } else {
        Method::IftReverse
    }
}

fn timed_run(s: &Setup, method: Method) -> (Result<methods::GradientRun, Error>, u64) {
    let start = Instant::now();
    let r = methods::gradient(&s.spec, method, &s.x, &s.alpha, &s.settings);
    (r, start.elapsed().as_nanos() as u64)
}

fn render_run(r: &RunReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(r).unwrap() + "\n",
        Format::Csv => format!("{}\n{}\n", report::RUN_CSV_HEADER, report::run_csv_row(r)),
        Format::Table => report::run_table(r),
    }
}

fn gradcheck(a: &GradcheckArgs) -> Outcome {
    let s = match setup(&a.common) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let kind = s.spec.kind;
    let method = match a.method.as_deref() {
        None => default_method(kind),
        Some(m) => match parse_method(m, kind) {
            Ok(m) => m,
            Err(e) => return Outcome::usage(e),
        },
    };
    let tol = a.tol.unwrap_or_else(|| methods::gradcheck_tolerance(kind));
    let format = a.common.format;
    let (run, ns) = timed_run(&s, method);
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            let r = RunReport::failed(s.spec.name, method.name(), &s.x, e.to_string());
            return Outcome { code: error_code(&e), stdout: render_run(&r, format), stderr: format!("error: {e}\n") };
        }
    };
    let reference = match method {
        Method::Fd => Ok(s.spec.analytic_gradient.as_ref().map(|g| g(&s.x, &s.alpha))),
        _ => methods::gradient(&s.spec, Method::Fd, &s.x, &s.alpha, &s.settings).map(|r| Some(r.gradient)),
    };
    let reference = match reference {
        Ok(r) => r,
        Err(e) => {
            let mut r = RunReport::failed(s.spec.name, method.name(), &s.x, format!("finite differences failed: {e}"));
            r.gradient = run.gradient;
            r.value = run.value;
            return Outcome { code: error_code(&e), stdout: render_run(&r, format), stderr: format!("error: {e}\n") };
        }
    };
    let err = reference.as_ref().map(|g| fd::max_rel_err(&run.gradient, g));
    let failed = err.is_some_and(|e| !(e <= tol));
    let (status, message) = if failed {
        (Status::Error, Some(format!("max_rel_err {:e} exceeds tolerance {tol:e}", err.unwrap())))
    } else if let Some(w) = run.warning.clone() {
        (Status::Warning, Some(w))
    } else {
        (Status::Ok, None)
    };
    let r = RunReport {
        problem: s.spec.name.to_string(),
        method: method.name().to_string(),
        x: s.x.clone(),
        value: run.value,
        gradient: run.gradient,
        fd_gradient: reference,
        max_rel_err: err,
        solver_iterations: run.iterations,
        wall_time_ns: ns,
        status,
        message,
    };
    Outcome {
        code: if failed { EXIT_NUMERIC } else { EXIT_OK },
        stdout: render_run(&r, format),
        stderr: String::new(),
    }
}

fn compare(a: &CompareArgs) -> Outcome {
    let s = match setup(&a.common) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let kind = s.spec.kind;
    let list: Vec<Method> = match &a.methods {
        None => methods::available_methods(kind).to_vec(),
        Some(names) => {
            let mut v = Vec::new();
            for n in names {
                match parse_method(n, kind) {
                    Ok(m) if !v.contains(&m) => v.push(m),
                    Ok(_) => {}
                    Err(e) => return Outcome::usage(e),
                }
            }
            v
        }
    };
    if list.len() < 2 {
        return Outcome::usage("compare needs at least two methods");
    }

    let mut reports = Vec::new();
    let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
    let mut solver_failed = false;
    for &m in &list {
        let (run, ns) = timed_run(&s, m);
        match run {
            Ok(run) => {
                grads.push(Some(run.gradient.clone()));
                reports.push(RunReport {
                    problem: s.spec.name.to_string(),
                    method: m.name().to_string(),
                    x: s.x.clone(),
                    value: run.value,
                    gradient: run.gradient,
                    fd_gradient: None,
                    max_rel_err: None,
                    solver_iterations: run.iterations,
                    wall_time_ns: ns,
                    status: if run.warning.is_some() { Status::Warning } else { Status::Ok },
                    message: run.warning,
                });
            }
            Err(e) => {
                solver_failed = true;
                grads.push(None);
                reports.push(RunReport::failed(s.spec.name, m.name(), &s.x, e.to_string()));
            }
        }
    }

    let mut deviations = Vec::new();
    for i in 0..list.len() {
        for j in i + 1..list.len() {
            let (Some(gi), Some(gj)) = (&grads[i], &grads[j]) else { continue };
            let dev = fd::max_rel_err(gi, gj);
            let tol = a.tol.unwrap_or_else(|| methods::pair_tolerance(list[i], list[j]));
            deviations.push(Deviation {
                a: list[i].name().to_string(),
                b: list[j].name().to_string(),
                deviation: dev,
                tolerance: tol,
                pass: dev <= tol,
            });
        }
    }

    let bridge = if kind == ProblemKind::Difference {
        match methods::difference_bridge(&s.spec, &s.x, &s.alpha) {
            Ok(d) => Some(BridgeCheck { max_deviation: d, tolerance: BRIDGE_TOL, pass: d <= BRIDGE_TOL }),
            Err(_) => {
                solver_failed = true;
                None
            }
        }
    } else {
        None
    };

    let pass = !solver_failed && deviations.iter().all(|d| d.pass) && bridge.as_ref().is_none_or(|b| b.pass);
    let out = CompareReport { problem: s.spec.name.to_string(), reports, deviations, bridge, pass };
    let code = if solver_failed {
        EXIT_SOLVER
    } else if !pass {
        EXIT_NUMERIC
    } else {
        EXIT_OK
    };
    Outcome { code, stdout: render_compare(&out, a.common.format), stderr: String::new() }
}

fn render_compare(c: &CompareReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(c).unwrap() + "\n",
        Format::Csv => {
            let mut s = String::from("a,b,deviation,tolerance,pass\n");
            for d in &c.deviations {
                s += &format!("{},{},{:e},{:e},{}\n", d.a, d.b, d.deviation, d.tolerance, d.pass);
            }
            if let Some(b) = &c.bridge {
                s += &format!("ift-reverse,adjoint-bridge,{:e},{:e},{}\n", b.max_deviation, b.tolerance, b.pass);
            }
            s
        }
        Format::Table => {
            let mut s = format!("problem {}\n\n", c.problem);
            s += &format!("{:<13}{:<8}{:<14}{}\n", "method", "status", "time_ns", "gradient");
            for r in &c.reports {
                let g = if r.status == Status::Error {
                    r.message.clone().unwrap_or_default()
                } else {
                    report::fmt_vec(&r.gradient)
                };
                s += &format!("{:<13}{:<8}{:<14}{}\n", r.method, r.status.as_str(), r.wall_time_ns, g);
            }
            s += "\n";
            s += &format!("{:<13}{:<13}{:<12}{:<12}{}\n", "a", "b", "deviation", "tolerance", "pass");
            for d in &c.deviations {
                s += &format!(
                    "{:<13}{:<13}{:<12.3e}{:<12.0e}{}\n",
                    d.a, d.b, d.deviation, d.tolerance, d.pass
                );
            }
            if let Some(b) = &c.bridge {
                s += &format!(
                    "\nbridge max|γ − (α − λ)| = {:.3e} (tolerance {:.0e}) {}\n",
                    b.max_deviation,
                    b.tolerance,
                    if b.pass { "pass" } else { "FAIL" }
                );
            }
            s += &format!("\n{}\n", if c.pass { "PASS" } else { "FAIL" });
            s
        }
    }
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn bench(a: &BenchArgs) -> Outcome {
    let Some(accepts) = registry::accepted_overrides(&a.problem) else {
        return Outcome::usage(format!("unknown problem {}", a.problem));
    };
    if !accepts.contains(&"input_dim") {
        return Outcome::usage(format!("problem {} does not accept dimension overrides", a.problem));
    }
    if a.reps == 0 || a.input_dim.is_empty() || a.input_dim.contains(&0) {
        return Outcome::usage("--reps and every --input-dim must be positive");
    }
    let mut dims = a.input_dim.clone();
    dims.sort_unstable();
    dims.dedup();

    let mut rows = Vec::new();
    for name in &a.methods {
        let mut medians = Vec::new();
        for &d in &dims {
            let overrides = Overrides {
                state_dim: accepts.contains(&"state_dim").then_some(a.state_dim),
                input_dim: Some(d),
                steps: None,
                seed: accepts.contains(&"seed").then_some(a.seed),
            };
            let spec = match registry::lookup_with(&a.problem, &overrides) {
                Ok(s) => s,
                Err(e) => return Outcome::usage(e),
            };
            let method = match parse_method(name, spec.kind) {
                Ok(m) => m,
                Err(e) => return Outcome::usage(e),
            };
            let s = Setup {
                x: spec.default_x.clone(),
                alpha: spec.default_alpha.clone(),
                spec,
                settings: Settings::default(),
            };
            let mut times = Vec::with_capacity(a.reps);
            for _ in 0..a.reps {
                let (r, ns) = timed_run(&s, method);
                if let Err(e) = r {
                    return Outcome {
                        code: error_code(&e),
                        stdout: String::new(),
                        stderr: format!("error: {name} at input_dim {d}: {e}\n"),
                    };
                }
                times.push(ns);
            }
            medians.push((d, method, median(times)));
        }
        let first = medians[0].2.max(1) as f64;
        let last = medians[medians.len() - 1].2 as f64;
        for (d, m, ns) in medians {
            rows.push(BenchRow { method: m.name().to_string(), input_dim: d, median_ns: ns, growth_ratio: last / first });
        }
    }

    let stdout = match a.format {
        Format::Json => serde_json::to_string_pretty(&rows).unwrap() + "\n",
        Format::Csv => {
            let mut s = format!("{}\n", report::BENCH_CSV_HEADER);
            for r in &rows {
                s += &format!("{},{},{},{:.4}\n", r.method, r.input_dim, r.median_ns, r.growth_ratio);
            }
            s
        }
        Format::Table => {
            let mut s = format!("{:<14}{:<11}{:<14}{}\n", "method", "input_dim", "median_ns", "growth_ratio");
            for r in &rows {
                s += &format!("{:<14}{:<11}{:<14}{:.2}\n", r.method, r.input_dim, r.median_ns, r.growth_ratio);
            }
            s
        }
    };
    Outcome { code: EXIT_OK, stdout, stderr: String::new() }
}
