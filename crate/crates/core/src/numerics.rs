//! Shared numerical kernels: covariance, symmetric eigendecomposition,
//! Pearson correlation and seeded Gaussian sampling.
//!
//! Matrices are `ndarray::Array2<f64>` with signals along rows and time
//! along columns. Variances use the population (divide-by-`T`) convention
//! everywhere.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic random source.
///
/// Backed by ChaCha8 (a counter-based stream cipher), so a given seed yields
/// the same stream on every platform. Normals come from the Box–Muller
/// transform: each pair of uniforms `(u1, u2)` produces `z0` then `z1`, and
/// `z1` is kept for the next call. Draws are therefore a single stream and
/// splitting one request of `2n` into two of `n` gives identical values.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.int_range(0, i);
            items.swap(i, j);
        }
    }

    /// Derive an independent generator for a sub-task.
    pub fn fork(&mut self) -> SeededRng {
        SeededRng::new(self.inner.random::<u64>())
    }
}

/// I.i.d. standard-normal matrix filled in row-major order.
pub fn randn(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

/// Subtract each row's mean. Returns the centered matrix and the means.
pub fn center_rows(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let means = x
        .mean_axis(Axis(1))
        .unwrap_or_else(|| Array1::zeros(x.nrows()));
    let centered = &x - &means.view().insert_axis(Axis(1));
    (centered, means)
}

/// Population covariance `E{X̂ X̂ᵀ}` of the rows of `x` (`n × T`).
///
/// The result is exactly symmetric: the lower triangle is copied from the
/// upper one.
pub fn covariance(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let t = x.ncols();
    if t < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: t });
    }
    let (centered, _) = center_rows(x);
    let mut c = centered.dot(&centered.t()) / t as f64;
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            c[[j, i]] = c[[i, j]];
        }
    }
    Ok(c)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(V, d)` with `C = V diag(d) Vᵀ`, `V` orthogonal and `d` sorted
/// descending (eigenvector columns permuted to match).
pub fn sym_eig(c: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = c.nrows();
    if n != c.ncols() {
        return Err(Error::Dimension(format!(
            "sym_eig needs a square matrix, got {}x{}",
            n,
            c.ncols()
        )));
    }
    let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (c[[i, j]] - c[[j, i]]).abs();
            if diff > 1e-9 * scale.max(1.0) {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }

    let mut a = c.to_owned();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    // Absolute 1e-12 on unit-scale input; scaled up for large-magnitude
    // matrices where rounding alone exceeds it.
    let tol = 1e-12 * scale.max(1.0);

    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[[p, q]].abs());
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                rotate(&mut a, &mut v, p, q, cs, sn);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let d = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vs.column_mut(dst).assign(&v.column(src));
    }
    Ok((vs, d))
}

/// Apply the Jacobi rotation zeroing `a[p,q]`: `A ← JᵀAJ`, `V ← VJ`.
fn rotate(a: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = c * akp - s * akq;
        a[[k, q]] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = c * apk - s * aqk;
        a[[q, k]] = s * apk + c * aqk;
    }
    a[[p, q]] = 0.0;
    a[[q, p]] = 0.0;
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}

/// Pearson correlation coefficient.
pub fn corrcoef(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::ZeroVariance);
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Population mean and standard deviation.
pub fn mean_std(x: ArrayView1<f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Inverse of a small dense square matrix by Gauss–Jordan elimination with
/// partial pivoting. Returns `None` when a pivot collapses below `1e-12`
/// relative to the largest entry.
pub(crate) fn invert(m: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut a = m.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[pivot, col]].abs() < 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let p = a[[col, col]];
        for k in 0..n {
            a[[col, k]] /= p;
            inv[[col, k]] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[[r, col]];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[[r, k]] -= f * a[[col, k]];
                inv[[r, k]] -= f * inv[[col, k]];
            }
        }
    }
    Some(inv)
}
