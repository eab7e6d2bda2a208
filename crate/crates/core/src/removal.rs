//! EOG removal by ICA on EEG stacked with estimated EOG, plus error metrics.
//!
//! Given normalized EEG `X_N` (`N_c × T`) and the LSTM estimate `Ŷ`
//! (`N_E × T`), the stack `Z = [X_N; Ŷ]` is whitened and unmixed into
//! `N_c + N_E` sources. Any source whose absolute Pearson correlation with
//! some row of `Ŷ` reaches the threshold has its mixing column zeroed; the
//! remaining sources are mixed back, de-whitened, and the first `N_c` rows
//! are returned in physical units.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::ica::{center_whiten, fast_ica, IcaOptions};
use crate::numerics::{corrcoef, invert, mean_std, SeededRng};
use crate::preprocess::{denormalize, NormalizationParams};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Tolerance on `‖W Wᵀ − I‖_max` under which `Wᵀ` is used as `W⁻¹`.
const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemovalConfig {
    pub threshold: f64,
    pub ica: IcaOptions,
    /// Seed of the FastICA initial weights.
    pub seed: u64,
}

impl Default for RemovalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            ica: IcaOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemovalOutcome {
    /// Cleaned EEG in physical units, `N_c × T`.
    pub cleaned: Array2<f64>,
    /// Cleaned EEG before de-normalization.
    pub cleaned_normalized: Array2<f64>,
    /// Indices of the zeroed sources, ascending.
    pub removed_source_ids: Vec<usize>,
    /// `|corr(Ŷ_e, S_i)|`, shape `N_E × (N_c + N_E)`.
    pub correlations: Array2<f64>,
    /// Per source, the largest absolute correlation over EOG rows.
    pub max_correlations: Array1<f64>,
    pub ica_converged: Vec<bool>,
}

/// Removes EOG components from normalized EEG `x_n` using the estimate
/// `y_hat`, then de-normalizes with the EEG part of `params`.
pub fn remove_eog(
    x_n: ArrayView2<f64>,
    y_hat: ArrayView2<f64>,
    params: &NormalizationParams,
    config: &RemovalConfig,
) -> Result<RemovalOutcome> {
    let n_c = x_n.nrows();
    let n_e = y_hat.nrows();
    if x_n.ncols() != y_hat.ncols() {
        return Err(Error::LengthMismatch {
            left: x_n.ncols(),
            right: y_hat.ncols(),
        });
    }
    if n_c == 0 || n_e == 0 {
        return Err(Error::Dimension(format!(
            "need at least one EEG and one EOG row, got {n_c} and {n_e}"
        )));
    }
    if params.n_eeg != n_c {
        return Err(Error::Dimension(format!(
            "normalization covers {} EEG channels, data has {n_c}",
            params.n_eeg
        )));
    }
    if !(config.threshold.is_finite() && config.threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {}",
            config.threshold
        )));
    }
    for (e, row) in y_hat.axis_iter(Axis(0)).enumerate() {
        let (_, sd) = mean_std(row);
        if !(sd > 0.0) {
            return Err(Error::ConstantEstimate(e));
        }
    }

    let z = ndarray::concatenate![Axis(0), x_n, y_hat];
    let n = z.nrows();
    let (z_white, whitening) = center_whiten(z.view())?;
    let mut rng = SeededRng::new(config.seed);
    let ica = fast_ica(z_white.view(), n, &mut rng, &config.ica)?;

    let mut correlations = Array2::zeros((n_e, n));
    for e in 0..n_e {
        for i in 0..n {
            correlations[[e, i]] = corrcoef(y_hat.row(e), ica.sources.row(i))?.abs();
        }
    }
    let max_correlations = correlations.fold_axis(Axis(0), 0.0, |&m, &v| f64::max(m, v));
    let removed_source_ids: Vec<usize> = (0..n)
        .filter(|&i| max_correlations[i] >= config.threshold)
        .collect();

    let mut mixing = unmixing_inverse(ica.w.view())?;
    for &i in &removed_source_ids {
        mixing.column_mut(i).fill(0.0);
    }
    let z_clean = whitening.invert(mixing.dot(&ica.sources).view())?;
    let cleaned_normalized = z_clean.slice(ndarray::s![..n_c, ..]).to_owned();
    let cleaned = denormalize(
        cleaned_normalized.view(),
        params.eeg_means(),
        params.eeg_stds(),
    )?;
    Ok(RemovalOutcome {
        cleaned,
        cleaned_normalized,
        removed_source_ids,
        correlations,
        max_correlations,
        ica_converged: ica.converged,
    })
}

/// `W⁻¹`: the transpose when `W` is orthonormal to within tolerance,
/// otherwise an explicit inverse.
fn unmixing_inverse(w: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = w.nrows();
    let gram = w.dot(&w.t());
    let drift = (&gram - &Array2::<f64>::eye(n))
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if drift <= ORTHONORMAL_TOL {
        return Ok(w.t().to_owned());
    }
    invert(w).ok_or_else(|| Error::InvalidParameter("unmixing matrix is singular".into()))
}

/// Error of an estimate against a reference signal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelMetrics {
    pub mse: f64,
    pub mae: f64,
    /// Mean signed error `mean(y − ŷ)`.
    pub me: f64,
}

pub fn compute_metrics(y: ArrayView1<f64>, y_hat: ArrayView1<f64>) -> Result<ChannelMetrics> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::NoData("empty signal".into()));
    }
    let n = y.len() as f64;
    let (mut se, mut ae, mut e) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(y_hat.iter()) {
        let d = a - b;
        se += d * d;
        ae += d.abs();
        e += d;
    }
    Ok(ChannelMetrics {
        mse: se / n,
        mae: ae / n,
        me: e / n,
    })
}

/// Per-channel metrics with their across-channel mean and (population)
/// standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub per_channel: Vec<ChannelMetrics>,
    pub mean: ChannelMetrics,
    pub std: ChannelMetrics,
}

pub fn evaluate_channels(
    reference: ArrayView2<f64>,
    estimate: ArrayView2<f64>,
    labels: &[String],
) -> Result<MetricsReport> {
    if reference.dim() != estimate.dim() {
        return Err(Error::Dimension(format!(
            "reference is {:?}, estimate is {:?}",
            reference.dim(),
            estimate.dim()
        )));
    }
    if labels.len() != reference.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} channels",
            labels.len(),
            reference.nrows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::NoData("no channels".into()));
    }
    let per_channel = reference
        .axis_iter(Axis(0))
        .zip(estimate.axis_iter(Axis(0)))
        .map(|(r, e)| compute_metrics(r, e))
        .collect::<Result<Vec<_>>>()?;
    let column = |f: fn(&ChannelMetrics) -> f64| {
        let v: Array1<f64> = per_channel.iter().map(f).collect();
        mean_std(v.view())
    };
    let (mse_m, mse_s) = column(|m| m.mse);
    let (mae_m, mae_s) = column(|m| m.mae);
    let (me_m, me_s) = column(|m| m.me);
    Ok(MetricsReport {
        labels: labels.to_vec(),
        per_channel,
        mean: ChannelMetrics {
            mse: mse_m,
            mae: mae_m,
            me: me_m,
        },
        std: ChannelMetrics {
            mse: mse_s,
            mae: mae_s,
            me: me_s,
        },
    })
}

/// Per-row MSE between true and estimated EOG, and their average.
pub fn estimate_eog_error(y: ArrayView2<f64>, y_hat: ArrayView2<f64>) -> Result<(Vec<f64>, f64)> {
    if y.dim() != y_hat.dim() {
        return Err(Error::Dimension(format!(
            "EOG is {:?}, estimate is {:?}",
            y.dim(),
            y_hat.dim()
        )));
    }
    if y.nrows() == 0 {
        return Err(Error::NoData("no EOG rows".into()));
    }
    let per_row = y
        .axis_iter(Axis(0))
        .zip(y_hat.axis_iter(Axis(0)))
        .map(|(a, b)| compute_metrics(a, b).map(|m| m.mse))
        .collect::<Result<Vec<_>>>()?;
    let avg = per_row.iter().sum::<f64>() / per_row.len() as f64;
    Ok((per_row, avg))
}
