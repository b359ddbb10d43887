//! Central finite differences, used as the independent oracle for every
//! derivative route.

use crate::error::Result;
use crate::linalg::DenseMatrix;

/// Default relative step for finite-dimensional problems.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Step for component `i`: `h·max(1, |x_i|)`.
pub fn step_for(x: f64, h: f64) -> f64 {
    h * x.abs().max(1.0)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn jacobian<F>(f: F, x: &[f64], h: f64) -> Result<DenseMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut columns = Vec::with_capacity(x.len());
    let mut rows = 0;
    for i in 0..x.len() {
        let step = step_for(x[i], h);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += step;
        xm[i] -= step;
        // the realized step, not the nominal one
        let width = xp[i] - xm[i];
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        rows = fp.len();
        columns.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / width).collect::<Vec<f64>>());
    }
    let mut jac = DenseMatrix::zeros(rows, x.len());
    for (c, col) in columns.iter().enumerate() {
        jac.set_column(c, col);
    }
    Ok(jac)
}

/// Central-difference approximation of `Jᵀα`.
pub fn gradient<F>(f: F, x: &[f64], alpha: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    Ok(jacobian(f, x, h)?.matvec_transposed(alpha))
}

/// `max_i |g_i − r_i| / max(1, |r_i|)`.
pub fn max_rel_err(g: &[f64], reference: &[f64]) -> f64 {
    g.iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}
