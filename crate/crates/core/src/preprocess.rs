//! Channel-wise zero-mean unit-variance normalization and its inverse.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::mean_std;

/// Per-channel statistics: all EEG channels first, then all EOG channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams {
    pub means: Array1<f64>,
    pub stds: Array1<f64>,
    /// Number of leading entries that belong to EEG channels.
    pub n_eeg: usize,
}

impl NormalizationParams {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn eeg_means(&self) -> ArrayView1<'_, f64> {
        self.means.slice(ndarray::s![..self.n_eeg])
    }

    pub fn eeg_stds(&self) -> ArrayView1<'_, f64> {
        self.stds.slice(ndarray::s![..self.n_eeg])
    }

    pub fn eog_means(&self) -> ArrayView1<'_, f64> {
        self.means.slice(ndarray::s![self.n_eeg..])
    }

    pub fn eog_stds(&self) -> ArrayView1<'_, f64> {
        self.stds.slice(ndarray::s![self.n_eeg..])
    }
}

/// Standardize each row; `offset` shifts the channel index reported in
/// errors.
fn standardize(x: ArrayView2<f64>, offset: usize) -> Result<(Array2<f64>, Vec<f64>, Vec<f64>)> {
    let t = x.ncols();
    if t < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: t });
    }
    let mut out = Array2::zeros(x.raw_dim());
    let mut means = Vec::with_capacity(x.nrows());
    let mut stds = Vec::with_capacity(x.nrows());
    for (i, (row, mut dst)) in x
        .axis_iter(Axis(0))
        .zip(out.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let (mu, sigma) = mean_std(row);
        if !(sigma > 0.0) {
            return Err(Error::ZeroVarianceChannel(offset + i));
        }
        dst.assign(&row.mapv(|v| (v - mu) / sigma));
        means.push(mu);
        stds.push(sigma);
    }
    Ok((out, means, stds))
}

/// Normalize EEG `x` (`N_c × T`) and EOG `y` (`N_E × T`) channel by channel.
pub fn normalize_channels(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>, NormalizationParams)> {
    if x.ncols() != y.ncols() {
        return Err(Error::LengthMismatch {
            left: x.ncols(),
            right: y.ncols(),
        });
    }
    let (xn, mut means, mut stds) = standardize(x, 0)?;
    let (yn, ym, ys) = standardize(y, x.nrows())?;
    means.extend(ym);
    stds.extend(ys);
    Ok((
        xn,
        yn,
        NormalizationParams {
            means: Array1::from(means),
            stds: Array1::from(stds),
            n_eeg: x.nrows(),
        },
    ))
}

/// Normalize EEG alone (inference time, when no EOG reference exists).
pub fn normalize_eeg(x: ArrayView2<f64>) -> Result<(Array2<f64>, NormalizationParams)> {
    let (xn, means, stds) = standardize(x, 0)?;
    Ok((
        xn,
        NormalizationParams {
            means: Array1::from(means),
            stds: Array1::from(stds),
            n_eeg: x.nrows(),
        },
    ))
}

/// Apply stored statistics: `(x - mean) / std` per row.
pub fn apply_normalization(
    x: ArrayView2<f64>,
    means: ArrayView1<f64>,
    stds: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    check_params(x.nrows(), means, stds)?;
    let mut out = x.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (m, s) = (means[i], stds[i]);
        row.mapv_inplace(|v| (v - m) / s);
    }
    Ok(out)
}

/// Row `i` becomes `x_n[i] * stds[i] + means[i]`.
pub fn denormalize(
    x_n: ArrayView2<f64>,
    means: ArrayView1<f64>,
    stds: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    check_params(x_n.nrows(), means, stds)?;
    let mut out = x_n.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (m, s) = (means[i], stds[i]);
        row.mapv_inplace(|v| v * s + m);
    }
    Ok(out)
}

fn check_params(k: usize, means: ArrayView1<f64>, stds: ArrayView1<f64>) -> Result<()> {
    if means.len() != k || stds.len() != k {
        return Err(Error::Dimension(format!(
            "{k} rows but {} means and {} stds",
            means.len(),
            stds.len()
        )));
    }
    if let Some((index, &value)) = stds.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::InvalidStd { index, value });
    }
    Ok(())
}
