//! Lower-triangular array kernels and their pseudo-convolution algebra.
//!
//! A kernel `A = (a_{n-j}^n)` is stored row by row. Row `n` (1-based) holds
//! `n` coefficients in column order `j = 1..=n`, i.e. `a_{n-1}^n, ..., a_0^n`,
//! so the last entry of every row is the diagonal. With this layout the
//! pseudo-convolution `A ⋆ B` is exactly the product of the two
//! lower-triangular matrices.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Diagonal entries with magnitude below this are treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-300;

/// Ragged lower-triangular array kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TriKernel {
    n_rows: usize,
    data: Vec<f64>,
}

#[inline]
fn row_offset(n: usize) -> usize {
    n * (n - 1) / 2
}

impl TriKernel {
    /// All-zero kernel with `n_rows` rows.
    pub fn zeros(n_rows: usize) -> Self {
        Self {
            n_rows,
            data: vec![0.0; n_rows * (n_rows + 1) / 2],
        }
    }

    /// Builds a kernel from rows given in column order (`a_{n-1}^n, ..., a_0^n`).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut data = Vec::with_capacity(n_rows * (n_rows + 1) / 2);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::Parse(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    i + 1
                )));
            }
            data.extend(row);
        }
        Ok(Self { n_rows, data })
    }

    /// Builds a kernel entrywise from `f(n, j)`, the coefficient multiplying `x_j` in row `n`.
    pub fn from_fn(n_rows: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let mut k = Self::zeros(n_rows);
        k.rows_mut_par().for_each(|(n, row)| {
            for (jm1, v) in row.iter_mut().enumerate() {
                *v = f(n, jm1 + 1);
            }
        });
        k
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Row `n` (1-based) in column order.
    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        assert!(
            (1..=self.n_rows).contains(&n),
            "row {n} outside kernel with {} rows",
            self.n_rows
        );
        let o = row_offset(n);
        &self.data[o..o + n]
    }

    #[inline]
    fn row_mut(&mut self, n: usize) -> &mut [f64] {
        let o = row_offset(n);
        &mut self.data[o..o + n]
    }

    fn rows_mut_par(&mut self) -> impl ParallelIterator<Item = (usize, &mut [f64])> {
        // Split the flat buffer into rows of increasing length.
        let mut rest: &mut [f64] = &mut self.data;
        let mut rows = Vec::with_capacity(self.n_rows);
        for n in 1..=self.n_rows {
            let (head, tail) = rest.split_at_mut(n);
            rows.push((n, head));
            rest = tail;
        }
        rows.into_par_iter()
    }

    /// `a_k^n`: the entry at distance `k` from the diagonal in row `n`.
    ///
    /// Panics when `(n, k)` lies outside the triangle.
    #[inline]
    pub fn entry(&self, n: usize, k: usize) -> f64 {
        assert!(k < n, "entry (n={n}, k={k}) lies outside the triangle");
        self.row(n)[n - 1 - k]
    }

    /// Coefficient multiplying `x_j` in row `n`, i.e. `a_{n-j}^n`.
    #[inline]
    pub fn at(&self, n: usize, j: usize) -> f64 {
        assert!(j >= 1 && j <= n, "column {j} outside row {n}");
        self.row(n)[j - 1]
    }

    /// Diagonal entry `a_0^n`.
    #[inline]
    pub fn diag(&self, n: usize) -> f64 {
        self.row(n)[n - 1]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row sums `sum_j a_{n-j}^n`.
    pub fn row_sums(&self) -> Vec<f64> {
        (1..=self.n_rows).map(|n| self.row(n).iter().sum()).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n_rows: self.n_rows,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_size(self, other)?;
        Ok(Self {
            n_rows: self.n_rows,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        same_size(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Kernel-vector action `y_n = sum_{j<=n} a_{n-j}^n x_j`; `x[0]` is `x_1`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::SizeMismatch {
                left: self.n_rows,
                right: x.len(),
            });
        }
        Ok((1..=self.n_rows)
            .map(|n| dot(self.row(n), &x[..n]))
            .collect())
    }

    /// Serializes as CSV, one row per `n`, columns `a_{n-1}^n ... a_0^n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for n in 1..=self.n_rows {
            let row = self.row(n);
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_size(a: &TriKernel, b: &TriKernel) -> Result<()> {
    if a.n_rows != b.n_rows {
        return Err(Error::SizeMismatch {
            left: a.n_rows,
            right: b.n_rows,
        });
    }
    Ok(())
}

/// `I`: ones on the diagonal.
pub fn identity_kernel(n: usize) -> TriKernel {
    TriKernel::from_fn(n, |row, j| if row == j { 1.0 } else { 0.0 })
}

/// `L`: all ones (the discrete Heaviside function).
pub fn heaviside_kernel(n: usize) -> TriKernel {
    TriKernel::from_fn(n, |_, _| 1.0)
}

/// `L^(-1)`: the backward difference, 1 on the diagonal and -1 just below it.
pub fn heaviside_inverse(n: usize) -> TriKernel {
    TriKernel::from_fn(n, |row, j| {
        if row == j {
            1.0
        } else if row == j + 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Pseudo-convolution `C = A ⋆ B`, `c_{n-k}^n = sum_{j=k}^n a_{n-j}^n b_{j-k}^j`.
pub fn pseudo_convolve(a: &TriKernel, b: &TriKernel) -> Result<TriKernel> {
    same_size(a, b)?;
    let mut c = TriKernel::zeros(a.n_rows);
    c.rows_mut_par().for_each(|(n, out)| {
        let arow = a.row(n);
        for j in 1..=n {
            let aj = arow[j - 1];
            if aj == 0.0 {
                continue;
            }
            for (o, bv) in out[..j].iter_mut().zip(b.row(j)) {
                *o += aj * bv;
            }
        }
    });
    Ok(c)
}

/// Inverse kernel `B` with `A ⋆ B = I`, by forward substitution row by row.
pub fn invert(a: &TriKernel) -> Result<TriKernel> {
    let n_rows = a.n_rows;
    for n in 1..=n_rows {
        let d = a.diag(n);
        if !(d.abs() >= SINGULAR_THRESHOLD) {
            return Err(Error::SingularKernel { row: n, value: d });
        }
    }
    let mut b = TriKernel::zeros(n_rows);
    for n in 1..=n_rows {
        let arow = a.row(n).to_vec();
        let inv_d = 1.0 / arow[n - 1];
        let mut acc = vec![0.0; n];
        // sum_{j=k}^{n-1} a_{n-j}^n b_{j-k}^j, accumulated over the earlier rows of B.
        for j in 1..n {
            let aj = arow[j - 1];
            if aj == 0.0 {
                continue;
            }
            for (s, bv) in acc[..j].iter_mut().zip(b.row(j)) {
                *s += aj * bv;
            }
        }
        let out = b.row_mut(n);
        for k in 0..n - 1 {
            out[k] = -acc[k] * inv_d;
        }
        out[n - 1] = inv_d;
    }
    Ok(b)
}

/// Right complementary kernel `C_R = A^(-1) ⋆ L`, so that `A ⋆ C_R = L`.
pub fn right_complementary(a: &TriKernel) -> Result<TriKernel> {
    let inv = invert(a)?;
    pseudo_convolve(&inv, &heaviside_kernel(a.n_rows))
}

/// Left complementary kernel `C_L = L ⋆ A^(-1)`, so that `C_L ⋆ A = L`.
pub fn left_complementary(a: &TriKernel) -> Result<TriKernel> {
    let inv = invert(a)?;
    pseudo_convolve(&heaviside_kernel(a.n_rows), &inv)
}

/// Discrete resolvent `R_λ` solving `R_λ + λ R_λ ⋆ A = λ A`.
///
/// Each row of `R_λ (I + λA) = λA` is an independent triangular solve, done
/// from the diagonal outwards without forming `(I + λA)^(-1)`.
pub fn resolvent(a: &TriKernel, lambda: f64) -> Result<TriKernel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    for n in 1..=a.n_rows {
        let d = a.diag(n);
        if !(d > 0.0) {
            return Err(invalid(
                "kernel",
                format!("resolvent needs a positive diagonal; row {n} has {d:e}"),
            ));
        }
    }
    let mut r = TriKernel::zeros(a.n_rows);
    r.rows_mut_par().for_each(|(n, out)| {
        let arow = a.row(n);
        // Column k from the diagonal down to 1:
        // r_k (1 + λ a_kk) = λ a_nk - sum_{j=k+1}^n r_j λ a_jk
        for k in (1..=n).rev() {
            let mut s = lambda * arow[k - 1];
            for j in k + 1..=n {
                s -= out[j - 1] * lambda * a.at(j, k);
            }
            out[k - 1] = s / (1.0 + lambda * a.diag(k));
        }
    });
    Ok(r)
}
