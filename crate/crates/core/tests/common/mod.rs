#![allow(dead_code)]

use impdiff::DenseMatrix;

/// Matrix exponential by scaling and squaring with a degree-20 Taylor core.
pub fn expm(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let norm = (0..n)
        .map(|r| a.row(r).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = 0.5f64.powi(squarings as i32);
    let mut scaled = a.clone();
    for r in 0..n {
        for c in 0..n {
            scaled[(r, c)] *= scale;
        }
    }
    let mut result = DenseMatrix::identity(n);
    let mut term = DenseMatrix::identity(n);
    for k in 1..=20 {
        term = term.matmul(&scaled);
        for r in 0..n {
            for c in 0..n {
                term[(r, c)] /= k as f64;
                result[(r, c)] += term[(r, c)];
            }
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}

/// `(e^{Mτ}, ∫₀^τ e^{Ms} ds)` from the exponential of `[[M, I], [0, 0]]τ`.
pub fn expm_with_integral(m: &DenseMatrix, tau: f64) -> (DenseMatrix, DenseMatrix) {
    let n = m.rows();
    let mut big = DenseMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            big[(r, c)] = m[(r, c)] * tau;
        }
        big[(r, n + r)] = tau;
    }
    let e = expm(&big);
    let mut phi = DenseMatrix::zeros(n, n);
    let mut psi = DenseMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            phi[(r, c)] = e[(r, c)];
            psi[(r, c)] = e[(r, n + c)];
        }
    }
    (phi, psi)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
