//! Dense linear algebra for the implicit solvers: LU with partial pivoting,
//! plain and transposed solves, and the block-bidiagonal back-substitution
//! that difference equations produce.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is reported singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-14;

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix entries", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, &v) in values.iter().enumerate() {
            self[(r, c)] = v;
        }
    }

    pub fn set_row(&mut self, r: usize, values: &[f64]) {
        self.data[r * self.cols..(r + 1) * self.cols].copy_from_slice(values);
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec dimension");
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest |A − Aᵀ| entry.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in 0..r {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Packed `PA = LU` factors. L has a unit diagonal and is stored below it.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    /// Row `i` of `PA` is row `perm[i]` of `A`.
    perm: Vec<usize>,
    singular_at: Option<usize>,
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_singular(&self) -> bool {
        self.singular_at.is_some()
    }

    /// Smallest pivot magnitude; zero for an empty factorization.
    pub fn min_pivot_abs(&self) -> f64 {
        (0..self.n)
            .map(|k| self.lu[k * self.n + k].abs())
            .reduce(f64::min)
            .unwrap_or(0.0)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn lower(&self) -> DenseMatrix {
        let mut l = DenseMatrix::identity(self.n);
        for r in 0..self.n {
            for c in 0..r {
                l[(r, c)] = self.lu[r * self.n + c];
            }
        }
        l
    }

    pub fn upper(&self) -> DenseMatrix {
        let mut u = DenseMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for c in r..self.n {
                u[(r, c)] = self.lu[r * self.n + c];
            }
        }
        u
    }

    /// Rebuilds `A = Pᵀ L U`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let pa = self.lower().matmul(&self.upper());
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for (i, &p) in self.perm.iter().enumerate() {
            for c in 0..self.n {
                a[(p, c)] = pa[(i, c)];
            }
        }
        a
    }
}

pub fn lu_factor(m: &DenseMatrix) -> Result<LuFactors> {
    if !m.is_square() {
        return Err(Error::Structural(format!(
            "LU factorization needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut lu = m.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let threshold = SINGULAR_PIVOT_RTOL * m.max_abs();
    let mut singular_at = None;
    for k in 0..n {
        let (pivot_row, pivot_abs) = (k..n)
            .map(|r| (r, lu[r * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold || pivot_abs == 0.0 || !pivot_abs.is_finite() {
            singular_at.get_or_insert(k);
            continue;
        }
        if pivot_row != k {
            for c in 0..n {
                lu.swap(k * n + c, pivot_row * n + c);
            }
            perm.swap(k, pivot_row);
        }
        let pivot = lu[k * n + k];
        for r in k + 1..n {
            let factor = lu[r * n + k] / pivot;
            lu[r * n + k] = factor;
            if factor != 0.0 {
                for c in k + 1..n {
                    lu[r * n + c] -= factor * lu[k * n + c];
                }
            }
        }
    }
    Ok(LuFactors {
        n,
        lu,
        perm,
        singular_at,
    })
}

/// Solves `A x = b`, or `Aᵀ x = b` when `transposed`.
pub fn lu_solve(f: &LuFactors, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
    if let Some(column) = f.singular_at {
        return Err(Error::Singular { column });
    }
    let n = f.n;
    if b.len() != n {
        return Err(Error::dims("right-hand side", n, b.len()));
    }
    let lu = &f.lu;
    if !transposed {
        // L y = P b, then U x = y
        let mut x: Vec<f64> = f.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| lu[r * n + c] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| lu[r * n + c] * x[c]).sum();
            x[r] = (x[r] - s) / lu[r * n + r];
        }
        Ok(x)
    } else {
        // Aᵀ = Uᵀ Lᵀ P: Uᵀ z = b, Lᵀ w = z, x = Pᵀ w
        let mut z = b.to_vec();
        for r in 0..n {
            let s: f64 = (0..r).map(|c| lu[c * n + r] * z[c]).sum();
            z[r] = (z[r] - s) / lu[r * n + r];
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| lu[c * n + r] * z[c]).sum();
            z[r] -= s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in f.perm.iter().enumerate() {
            x[p] = z[i];
        }
        Ok(x)
    }
}

/// Factor-and-solve convenience.
pub fn solve(a: &DenseMatrix, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
    lu_solve(&lu_factor(a)?, b, transposed)
}

/// Solves the upper block-bidiagonal system
///
/// ```text
/// D_1 γ_1 + O_1 γ_2           = r_1
///           D_2 γ_2 + O_2 γ_3 = r_2
///                         ...
///                     D_m γ_m = r_m
/// ```
///
/// by backward recursion. `diag` holds the m blocks `D_i` (N×N), `off` the
/// m − 1 blocks `O_i`, `rhs` the stacked right-hand side of length m·N.
/// Identity diagonal blocks skip the block solve.
pub fn block_bidiagonal_solve(
    diag: &[DenseMatrix],
    off: &[DenseMatrix],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let m = diag.len();
    if m == 0 {
        return Err(Error::Structural("block system needs at least one block".into()));
    }
    let n = diag[0].rows();
    if off.len() + 1 != m {
        return Err(Error::dims("off-diagonal blocks", m - 1, off.len()));
    }
    if rhs.len() != m * n {
        return Err(Error::dims("block right-hand side", m * n, rhs.len()));
    }
    for block in diag.iter().chain(off) {
        if block.rows() != n || block.cols() != n {
            return Err(Error::dims("block size", n, block.rows().max(block.cols())));
        }
    }
    let identity = DenseMatrix::identity(n);
    let mut out = vec![0.0; m * n];
    for i in (0..m).rev() {
        let mut r = rhs[i * n..(i + 1) * n].to_vec();
        if i + 1 < m {
            let next = off[i].matvec(&out[(i + 1) * n..(i + 2) * n]);
            for (ri, ni) in r.iter_mut().zip(next) {
                *ri -= ni;
            }
        }
        let gamma = if diag[i] == identity {
            r
        } else {
            solve(&diag[i], &r, false)?
        };
        out[i * n..(i + 1) * n].copy_from_slice(&gamma);
    }
    Ok(out)
}

/// True when `−a` admits a Cholesky factorization, i.e. `a` is negative definite.
pub fn is_negative_definite(a: &DenseMatrix) -> bool {
    if !a.is_square() || !a.is_finite() {
        return false;
    }
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = -a[(j, j)];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = -0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    true
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
