//! Closed-form ridge regression probe on standardized features.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::ActivationTensor;

pub const DEFAULT_RIDGE: f64 = 1e-6;

const GRAM_CHUNK_ROWS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

/// In-place Cholesky factorization of a dense symmetric matrix (lower
/// triangle). Fails if a pivot is not strictly positive.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::SingularProbe);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let (ri, rj) = (i * n, j * n);
            let mut s = a[ri + j];
            for k in 0..j {
                s -= a[ri + k] * a[rj + k];
            }
            a[ri + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` given the factor from `cholesky`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

impl LinearProbe {
    /// Fits `w` minimizing `|Z w - t|^2 + lambda |w|^2`, where `Z` is the
    /// column-standardized `x` with an appended intercept column.
    pub fn fit(x: &ActivationTensor, targets: &[f64], lambda: f64) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if targets.len() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: targets.len() });
        }
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|&s| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();

        let p = d + 1;
        let standardize = |r: usize, z: &mut [f64]| {
            for (j, zj) in z[..d].iter_mut().enumerate() {
                *zj = (x.get(r, j) - mean[j]) * inv_std[j];
            }
            z[d] = 1.0;
        };
        let starts: Vec<usize> = (0..n).step_by(GRAM_CHUNK_ROWS).collect();
        let partials = par::map_slice(&starts, |&start| {
            let end = (start + GRAM_CHUNK_ROWS).min(n);
            let mut g = vec![0.0f64; p * p];
            let mut rhs = vec![0.0f64; p];
            let mut z = vec![0.0f64; p];
            for (r, &t) in targets.iter().enumerate().take(end).skip(start) {
                standardize(r, &mut z);
                for i in 0..p {
                    let zi = z[i];
                    rhs[i] += zi * t;
                    let row = &mut g[i * p..i * p + p];
                    for (gij, &zj) in row[i..].iter_mut().zip(&z[i..]) {
                        *gij += zi * zj;
                    }
                }
            }
            (g, rhs)
        });
        let mut gram = vec![0.0f64; p * p];
        let mut rhs = vec![0.0f64; p];
        for (g, b) in partials {
            gram.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
            rhs.iter_mut().zip(&b).for_each(|(a, v)| *a += v);
        }
        // Mirror the upper triangle into the lower one used by `cholesky`.
        for i in 0..p {
            gram[i * p + i] += lambda;
            for j in i + 1..p {
                gram[j * p + i] = gram[i * p + j];
            }
        }
        cholesky(&mut gram, p)?;
        let mut w = cholesky_solve(&gram, p, &rhs);
        let bias = w.pop().unwrap_or(0.0);
        Ok(Self { mean, inv_std, weights: w, bias })
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .zip(&self.weights)
            .map(|(((&v, m), s), w)| (v - m) * s * w)
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &ActivationTensor) -> Vec<bool> {
        (0..x.rows()).map(|r| self.score_row(x.row(r)) > 0.0).collect()
    }

    /// Fraction of rows whose predicted class matches `labels`.
    pub fn accuracy(&self, x: &ActivationTensor, labels: &[bool]) -> f64 {
        let pred = self.predict(x);
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        hits as f64 / labels.len().max(1) as f64
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}
