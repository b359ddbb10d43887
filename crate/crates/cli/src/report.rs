use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Warning,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Warning => "warning",
            Status::Error => "error",
        }
    }
}

/// One method run on one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub method: String,
    pub x: Vec<f64>,
    pub value: Vec<f64>,
    pub gradient: Vec<f64>,
    pub fd_gradient: Option<Vec<f64>>,
    pub max_rel_err: Option<f64>,
    pub solver_iterations: usize,
    pub wall_time_ns: u64,
    pub status: Status,
    pub message: Option<String>,
}

impl RunReport {
    pub fn failed(problem: &str, method: &str, x: &[f64], message: String) -> Self {
        Self {
            problem: problem.to_string(),
            method: method.to_string(),
            x: x.to_vec(),
            value: Vec::new(),
            gradient: Vec::new(),
            fd_gradient: None,
            max_rel_err: None,
            solver_iterations: 0,
            wall_time_ns: 0,
            status: Status::Error,
            message: Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub a: String,
    pub b: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeCheck {
    /// max |γ_i − (α − λ_i)| over all steps.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub problem: String,
    pub reports: Vec<RunReport>,
    pub deviations: Vec<Deviation>,
    pub bridge: Option<BridgeCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub input_dim: usize,
    pub median_ns: u64,
    /// median_ns at the largest input dimension over median_ns at the smallest.
    pub growth_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListEntry {
    pub name: String,
    pub kind: String,
    pub description: String,
}

pub const BENCH_CSV_HEADER: &str = "method,input_dim,median_ns,growth_ratio";

pub fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

fn csv_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    parts.join(";")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const RUN_CSV_HEADER: &str =
    "problem,method,x,value,gradient,fd_gradient,max_rel_err,solver_iterations,wall_time_ns,status,message";

pub fn run_csv_row(r: &RunReport) -> String {
    [
        csv_field(&r.problem),
        csv_field(&r.method),
        csv_vec(&r.x),
        csv_vec(&r.value),
        csv_vec(&r.gradient),
        r.fd_gradient.as_deref().map(csv_vec).unwrap_or_default(),
        r.max_rel_err.map(|e| format!("{e:e}")).unwrap_or_default(),
        r.solver_iterations.to_string(),
        r.wall_time_ns.to_string(),
        r.status.as_str().to_string(),
        csv_field(r.message.as_deref().unwrap_or_default()),
    ]
    .join(",")
}

pub fn run_table(r: &RunReport) -> String {
    let mut rows = vec![
        ("problem", r.problem.clone()),
        ("method", r.method.clone()),
        ("x", fmt_vec(&r.x)),
        ("value", fmt_vec(&r.value)),
        ("gradient", fmt_vec(&r.gradient)),
    ];
    if let Some(fd) = &r.fd_gradient {
        rows.push(("fd_gradient", fmt_vec(fd)));
    }
    if let Some(e) = r.max_rel_err {
        rows.push(("max_rel_err", format!("{e:e}")));
    }
    rows.push(("iterations", r.solver_iterations.to_string()));
    rows.push(("wall_time_ns", r.wall_time_ns.to_string()));
    rows.push(("status", r.status.as_str().to_string()));
    if let Some(m) = &r.message {
        rows.push(("message", m.clone()));
    }
    rows.iter().map(|(k, v)| format!("{k:<13}{v}\n")).collect()
}
