use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

/// Dense square integer matrix, row-major.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    dim: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(dim: usize) -> Self {
        IntMatrix { dim, data: vec![0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1;
        }
        m
    }

    /// Identity plus `k` at `(row, col)`.
    pub fn elementary(dim: usize, row: usize, col: usize, k: i64) -> Self {
        let mut m = Self::identity(dim);
        m.data[row * dim + col] += k;
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "matrix must be square");
            data.extend_from_slice(r);
        }
        IntMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: i64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn add_at(&mut self, row: usize, col: usize, v: i64) {
        self.data[row * self.dim + col] += v;
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0)
    }

    pub fn column_sum(&self, col: usize) -> i64 {
        (0..self.dim).map(|r| self.get(r, col)).sum()
    }

    pub fn max_entry(&self) -> i64 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Determinant by fraction-free Gaussian elimination (Bareiss).
    pub fn determinant(&self) -> i128 {
        let n = self.dim;
        if n == 0 {
            return 1;
        }
        let mut a: Vec<i128> = self.data.iter().map(|&v| v as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n - 1 {
            if a[k * n + k] == 0 {
                let Some(swap) = (k + 1..n).find(|&r| a[r * n + k] != 0) else {
                    return 0;
                };
                for c in 0..n {
                    a.swap(k * n + c, swap * n + c);
                }
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    a[i * n + j] = (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
                }
            }
            prev = a[k * n + k];
        }
        sign * a[n * n - 1]
    }

    /// Rank over the rationals.
    pub fn rank(&self) -> usize {
        let n = self.dim;
        let mut a: Vec<i128> = self.data.iter().map(|&v| v as i128).collect();
        let mut rank = 0;
        for col in 0..n {
            let Some(pivot) = (rank..n).find(|&r| a[r * n + col] != 0) else {
                continue;
            };
            for c in 0..n {
                a.swap(rank * n + c, pivot * n + c);
            }
            for r in 0..n {
                if r != rank && a[r * n + col] != 0 {
                    let (p, q) = (a[rank * n + col], a[r * n + col]);
                    for c in 0..n {
                        a[r * n + c] = a[r * n + c] * p - a[rank * n + c] * q;
                    }
                    let g = (0..n).fold(0i128, |g, c| gcd(g, a[r * n + c]));
                    if g > 1 {
                        for c in 0..n {
                            a[r * n + c] /= g;
                        }
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// `self^T * v` in floating point.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n).map(|j| (0..n).map(|i| self.data[i * n + j] as f64 * v[i]).sum()).collect()
    }

    /// `self * v` in floating point.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n).map(|i| (0..n).map(|j| self.data[i * n + j] as f64 * v[j]).sum()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Mul for &IntMatrix {
    type Output = IntMatrix;

    fn mul(self, rhs: &IntMatrix) -> IntMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = IntMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.dim)).finish()
    }
}
