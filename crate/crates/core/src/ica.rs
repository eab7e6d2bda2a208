//! Whitening and deflation FastICA.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{center_rows, covariance, randn, sym_eig, SeededRng};

/// Eigenvalue ratio below which the covariance is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Affine map `x ↦ P (x − mean)` with `P = D^{-1/2} Vᵀ` from the
/// eigendecomposition `V D Vᵀ` of the input covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub p: Array2<f64>,
    pub mean: Array1<f64>,
    /// Eigenvectors (columns), sorted by descending eigenvalue.
    pub v: Array2<f64>,
    /// Eigenvalues, descending.
    pub d: Array1<f64>,
}

impl WhiteningTransform {
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "whitening expects {} rows, got {}",
                self.mean.len(),
                x.nrows()
            )));
        }
        let centered = &x - &self.mean.view().insert_axis(Axis(1));
        Ok(self.p.dot(&centered))
    }

    /// `P⁻¹ = V D^{1/2}`.
    pub fn dewhitening_matrix(&self) -> Array2<f64> {
        let sqrt_d = self.d.mapv(f64::sqrt);
        &self.v * &sqrt_d.view().insert_axis(Axis(0))
    }

    /// `P⁻¹ z + mean`.
    pub fn invert(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.nrows() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "de-whitening expects {} rows, got {}",
                self.mean.len(),
                z.nrows()
            )));
        }
        Ok(self.dewhitening_matrix().dot(&z) + &self.mean.view().insert_axis(Axis(1)))
    }
}

/// Centers and whitens the rows of `x` (`n × T`). Returns `(X̃, transform)`
/// with `cov(X̃) = I`.
pub fn center_whiten(x: ArrayView2<f64>) -> Result<(Array2<f64>, WhiteningTransform)> {
    let cov = covariance(x)?;
    let (v, d) = sym_eig(cov.view())?;
    let d_max = d.iter().cloned().fold(0.0_f64, f64::max);
    let d_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if d_max > 0.0 { d_min / d_max } else { 0.0 };
    if !(ratio > SINGULAR_RATIO) {
        return Err(Error::SingularCovariance { ratio });
    }
    let inv_sqrt = d.mapv(|e| 1.0 / e.sqrt());
    let p = &v.t() * &inv_sqrt.view().insert_axis(Axis(1));
    let (centered, mean) = center_rows(x);
    let white = p.dot(&centered);
    Ok((white, WhiteningTransform { p, mean, v, d }))
}

/// Contrast nonlinearity `g(u) = u e^{−u²/2}` and its derivative
/// `g'(u) = (1 − u²) e^{−u²/2}`.
pub fn contrast(u: f64) -> (f64, f64) {
    let e = (-0.5 * u * u).exp();
    (u * e, (1.0 - u * u) * e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// Unmixing matrix, one row per component: `S = W X̃`.
    pub w: Array2<f64>,
    /// Estimated sources, `N_s × T`.
    pub sources: Array2<f64>,
    /// Fixed-point iterations used per component.
    pub iterations: Vec<usize>,
    /// Whether each component met the tolerance within the iteration cap.
    pub converged: Vec<bool>,
}

impl IcaResult {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Removes from `w` its projection on the first `k` rows of `basis`.
fn orthogonalize(w: &mut Array1<f64>, basis: &Array2<f64>, k: usize) {
    for j in 0..k {
        let bj = basis.row(j);
        let proj = w.dot(&bj);
        w.scaled_add(-proj, &bj);
    }
}

fn normalize(w: &mut Array1<f64>) -> Result<()> {
    let norm = w.dot(w).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter(
            "FastICA weight vector collapsed to zero".into(),
        ));
    }
    *w /= norm;
    Ok(())
}

/// One fixed-point update `E{X̃ g(wᵀX̃)} − E{g'(wᵀX̃)} w`.
fn fixed_point(w: ArrayView1<f64>, x: ArrayView2<f64>) -> Array1<f64> {
    let t = x.ncols() as f64;
    let u = w.dot(&x);
    let mut g = Array1::zeros(u.len());
    let mut mean_dg = 0.0;
    for (gi, &ui) in g.iter_mut().zip(u.iter()) {
        let (gv, dg) = contrast(ui);
        *gi = gv;
        mean_dg += dg;
    }
    mean_dg /= t;
    let mut next = x.dot(&g) / t;
    next.scaled_add(-mean_dg, &w);
    next
}

/// Deflation FastICA on whitened data `x` (`n × T`), extracting `n_sources`
/// components with Gram–Schmidt decorrelation after every update.
/// Initial weight vectors are standard normal draws from `rng`.
pub fn fast_ica(
    x: ArrayView2<f64>,
    n_sources: usize,
    rng: &mut SeededRng,
    opts: &IcaOptions,
) -> Result<IcaResult> {
    let n = x.nrows();
    if n_sources == 0 || n_sources > n {
        return Err(Error::InvalidParameter(format!(
            "cannot extract {n_sources} sources from {n} whitened rows"
        )));
    }
    if x.ncols() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.ncols(),
        });
    }
    let init = randn(n_sources, n, rng);
    let mut w_all = Array2::<f64>::zeros((n_sources, n));
    let mut iterations = Vec::with_capacity(n_sources);
    let mut converged = Vec::with_capacity(n_sources);

    for p in 0..n_sources {
        let mut w = init.row(p).to_owned();
        orthogonalize(&mut w, &w_all, p);
        normalize(&mut w)?;
        let mut done = false;
        let mut iters = 0;
        while iters < opts.max_iter {
            iters += 1;
            let mut next = fixed_point(w.view(), x);
            orthogonalize(&mut next, &w_all, p);
            // second pass keeps the basis orthonormal to rounding level
            orthogonalize(&mut next, &w_all, p);
            normalize(&mut next)?;
            let overlap = next.dot(&w).abs();
            w = next;
            if overlap > 1.0 - opts.tol {
                done = true;
                break;
            }
        }
        w_all.row_mut(p).assign(&w);
        iterations.push(iters);
        converged.push(done);
    }
    let sources = w_all.dot(&x);
    Ok(IcaResult {
        w: w_all,
        sources,
        iterations,
        converged,
    })
}
