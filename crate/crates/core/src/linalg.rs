//! Dense complex matrices and an LU solver with partial pivoting.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest tolerated ratio between extreme LU pivot magnitudes.
pub const MAX_CONDITION: f64 = 1e12;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Aᴴ y`, counting one multiply-accumulate per product.
    pub fn adjoint_mul_vec(&self, y: &[Complex64], macs: &mut u64) -> Vec<Complex64> {
        assert_eq!(y.len(), self.rows, "dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * yr;
            }
        }
        *macs += (self.rows * self.cols) as u64;
        out
    }

    /// Gram matrix `AᴴA`, counting multiply-accumulates.
    pub fn gram(&self, macs: &mut u64) -> CMatrix {
        let n = self.cols;
        let mut g = CMatrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for (i, a) in row.iter().enumerate() {
                let ai = a.conj();
                for (dst, b) in g.data[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *dst += ai * b;
                }
            }
        }
        *macs += (self.rows * n * n) as u64;
        g
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// In-place LU factorization `P A = L U` of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    /// Ratio of the largest to the smallest pivot magnitude.
    pub condition_estimate: f64,
}

impl Lu {
    pub fn factor(mut a: CMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::Contract("LU needs a square matrix".into()));
        }
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let (mut pmax, mut pmin) = (0.0_f64, f64::INFINITY);
        for k in 0..n {
            let (piv, mag) = (k..n)
                .map(|i| (i, a[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(mag > 0.0) || !mag.is_finite() {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                });
            }
            if piv != k {
                for c in 0..n {
                    a.data.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            pmax = pmax.max(mag);
            pmin = pmin.min(mag);
            let d = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / d;
                a[(i, k)] = f;
                for j in k + 1..n {
                    let u = a[(k, j)];
                    a[(i, j)] -= f * u;
                }
            }
        }
        let condition_estimate = if n == 0 { 1.0 } else { pmax / pmin };
        if condition_estimate > MAX_CONDITION {
            return Err(Error::IllConditioned {
                condition: condition_estimate,
            });
        }
        Ok(Self {
            lu: a,
            perm,
            condition_estimate,
        })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n, "dimension mismatch");
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}
