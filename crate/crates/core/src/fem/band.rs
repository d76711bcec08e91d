//! Symmetric banded matrices with a direct Cholesky solve and a Jacobi
//! preconditioned conjugate-gradient fallback.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: `get(i, j)` for `i - bw ≤ j ≤ i`.
#[derive(Debug, Clone)]
pub struct SymmetricBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymmetricBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    /// Entry `(i, j)` in either triangle; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to `(i, j)` and, implicitly, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw - (i - lo);
            let mut acc = 0.0;
            for (k, j) in (lo..i).enumerate() {
                let a = row[off + k];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            acc += row[self.bw] * x[i];
            y[i] += acc;
        }
    }

    /// In-place Cholesky factor `L` with `A = L Lᵀ`; fails if `A` is not
    /// numerically positive definite.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let mut l = self.clone();
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(self.bw));
                let mut sum = l.data[i * w + self.bw - (i - j)];
                for k in klo..j {
                    sum -= l.data[i * w + self.bw - (i - k)] * l.data[j * w + self.bw - (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::Numeric(format!(
                            "matrix is not positive definite (pivot {i}: {sum:e})"
                        )));
                    }
                    l.data[i * w + self.bw] = sum.sqrt();
                } else {
                    l.data[i * w + self.bw - (i - j)] = sum / l.data[j * w + self.bw];
                }
            }
        }
        Ok(BandCholesky { l })
    }

    /// Jacobi-preconditioned conjugate gradients from the initial guess `x`.
    pub fn conjugate_gradient(&self, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<usize> {
        let n = self.n;
        let b_norm = norm(b);
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / self.get(i, i)).collect();
        let mut ax = vec![0.0; n];
        self.mul_vec(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for it in 0..max_iter {
            if norm(&r) <= rel_tol * b_norm {
                return Ok(it);
            }
            self.mul_vec(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if norm(&r) <= rel_tol * b_norm {
            Ok(max_iter)
        } else {
            Err(Error::Numeric(format!(
                "conjugate gradients did not reach {rel_tol:e} in {max_iter} iterations"
            )))
        }
    }

    /// `‖A x − b‖ / ‖b‖`, or `‖A x‖` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.mul_vec(x, &mut ax);
        let r: Vec<f64> = ax.iter().zip(b).map(|(a, b)| a - b).collect();
        let bn = norm(b);
        if bn > 0.0 {
            norm(&r) / bn
        } else {
            norm(&r)
        }
    }
}

pub struct BandCholesky {
    l: SymmetricBand,
}

impl BandCholesky {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.l;
        let (n, bw, w) = (l.n, l.bw, l.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= l.data[i * w + bw - (i - k)] * x[k];
            }
            x[i] = s / l.data[i * w + bw];
        }
        for i in (0..n).rev() {
            x[i] /= l.data[i * w + bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                x[k] -= l.data[i * w + bw - (i - k)] * xi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
