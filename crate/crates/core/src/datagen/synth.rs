//! Synthetic pure EEG and EOG reference signals.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};

use super::filter::bandpass;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const EEG_BAND: (f64, f64) = (0.5, 40.0);
pub const EOG_BAND: (f64, f64) = (0.5, 5.0);

/// Standard deviation each pure EEG channel is scaled to, in μV.
pub const EEG_CHANNEL_STD_UV: f64 = 15.0;

/// Signals are synthesized with this many seconds of extra signal on each
/// side, filtered, then cropped, so filter start-up transients fall outside
/// the returned window.
const MARGIN_S: f64 = 2.0;

fn margin(fs: f64) -> usize {
    (MARGIN_S * fs).round() as usize
}

fn crop(x: &Array1<f64>, m: usize, n: usize) -> Array1<f64> {
    x.slice(ndarray::s![m..m + n]).to_owned()
}

/// A single blink in the raw (pre-filter) VEOG trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlinkEvent {
    pub onset: usize,
    /// Duration in samples.
    pub width: usize,
    /// Peak amplitude in μV before band-pass filtering.
    pub amplitude: f64,
}

/// A single gaze shift in the raw HEOG trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaccadeEvent {
    pub onset: usize,
    pub duration: usize,
    /// Signed step in μV.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EogSignals {
    pub veog: Array1<f64>,
    pub heog: Array1<f64>,
    pub blinks: Vec<BlinkEvent>,
    pub saccades: Vec<SaccadeEvent>,
}

/// Parameters of the EOG generator.
#[derive(Debug, Clone, PartialEq)]
pub struct EogParams {
    pub blink_width: (usize, usize),
    pub blink_amplitude_uv: (f64, f64),
    /// Seconds between consecutive blinks.
    pub blink_gap_s: (f64, f64),
    pub fixation_s: (f64, f64),
    /// Fixation targets are drawn uniformly from `±max_gaze_uv`.
    pub max_gaze_uv: f64,
    pub min_saccade_uv: f64,
    pub saccade_duration: (usize, usize),
    /// Time constant of the amplifier coupling applied to the gaze signal;
    /// 0 keeps the steps flat.
    pub coupling_tau_s: f64,
    pub drift_uv: f64,
}

impl Default for EogParams {
    fn default() -> Self {
        Self {
            blink_width: (40, 80),
            blink_amplitude_uv: (150.0, 800.0),
            blink_gap_s: (0.8, 3.5),
            fixation_s: (1.0, 3.0),
            max_gaze_uv: 400.0,
            min_saccade_uv: 120.0,
            saccade_duration: (6, 12),
            coupling_tau_s: 0.3,
            drift_uv: 30.0,
        }
    }
}

fn check_shape(n_samples: usize, fs: f64) -> Result<()> {
    if n_samples < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: n_samples,
        });
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::InvalidParameter(format!("sampling rate {fs}")));
    }
    Ok(())
}

/// Adds `amp · sin(2π f t + φ)` to `out` using a rotation recurrence.
fn add_sinusoid(out: &mut Array1<f64>, freq: f64, phase: f64, amp: f64, fs: f64) {
    let w = 2.0 * PI * freq / fs;
    let (sw, cw) = w.sin_cos();
    let (mut s, mut c) = phase.sin_cos();
    for (i, v) in out.iter_mut().enumerate() {
        *v += amp * s;
        let ns = s * cw + c * sw;
        c = c * cw - s * sw;
        s = ns;
        // re-anchor occasionally so rounding does not accumulate
        if i % 1024 == 1023 {
            let t = (i + 1) as f64;
            (s, c) = (w * t + phase).sin_cos();
        }
    }
}

/// One cortical source: amplitude-modulated alpha rhythm over a 1/f
/// background, all lines strictly inside the EEG band.
fn cortical_source(n: usize, fs: f64, rng: &mut SeededRng) -> Array1<f64> {
    let mut alpha = Array1::zeros(n);
    for _ in 0..3 {
        let f = rng.uniform_range(8.0, 13.0);
        add_sinusoid(&mut alpha, f, rng.uniform_range(0.0, 2.0 * PI), 1.0, fs);
    }
    let mut env = Array1::from_elem(n, 1.0);
    add_sinusoid(
        &mut env,
        rng.uniform_range(0.1, 0.4),
        rng.uniform_range(0.0, 2.0 * PI),
        0.5,
        fs,
    );
    let alpha_gain = rng.uniform_range(0.5, 1.5);
    let mut src = alpha * env * alpha_gain;

    let mut f: f64 = 1.0;
    while f <= 38.0 {
        let amp = 0.35 * rng.normal().abs() / f.sqrt();
        add_sinusoid(&mut src, f, rng.uniform_range(0.0, 2.0 * PI), amp, fs);
        f += 0.5;
    }
    src
}

/// Pure EEG of shape `n_channels × n_samples` in μV.
///
/// Channels are a random spatial mixture of `n_channels + 5` shared cortical
/// sources plus a small independent sensor component per channel (so the
/// channel covariance is full rank), band-passed to 0.5–40 Hz and scaled to
/// [`EEG_CHANNEL_STD_UV`].
pub fn synth_pure_eeg(
    n_channels: usize,
    n_samples: usize,
    fs: f64,
    rng: &mut SeededRng,
) -> Result<Array2<f64>> {
    check_shape(n_samples, fs)?;
    if n_channels == 0 {
        return Err(Error::InvalidParameter("n_channels must be positive".into()));
    }
    let m = margin(fs);
    let n_ext = n_samples + 2 * m;
    let n_src = n_channels + 5;
    let mut sources = Array2::zeros((n_src, n_ext));
    for mut row in sources.axis_iter_mut(Axis(0)) {
        row.assign(&cortical_source(n_ext, fs, rng));
    }
    let mixing = crate::numerics::randn(n_channels, n_src, rng);
    let mut x = mixing.dot(&sources);
    let mut out = Array2::zeros((n_channels, n_samples));
    for (c, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let (_, sd) = crate::numerics::mean_std(row.view());
        for v in row.iter_mut() {
            *v += 0.15 * sd * rng.normal();
        }
        let mut y = crop(&bandpass(row.view(), EEG_BAND.0, EEG_BAND.1, fs)?, m, n_samples);
        let (m, sd) = crate::numerics::mean_std(y.view());
        y.mapv_inplace(|v| (v - m) / sd * EEG_CHANNEL_STD_UV);
        out.row_mut(c).assign(&y);
    }
    Ok(out)
}

fn slow_drift(n: usize, fs: f64, amp: f64, rng: &mut SeededRng) -> Array1<f64> {
    let mut d = Array1::zeros(n);
    for _ in 0..3 {
        let f = rng.uniform_range(0.02, 0.3);
        add_sinusoid(&mut d, f, rng.uniform_range(0.0, 2.0 * PI), amp / 3.0, fs);
    }
    d
}

/// Blink waveform: half-cosine rise over 40% of the width, slower
/// half-cosine decay over the rest.
fn blink_shape(width: usize) -> Vec<f64> {
    let rise = ((width as f64) * 0.4).round().max(1.0) as usize;
    let fall = width - rise;
    (0..width)
        .map(|i| {
            if i < rise {
                0.5 * (1.0 - (PI * i as f64 / rise as f64).cos())
            } else {
                0.5 * (1.0 + (PI * (i - rise) as f64 / fall as f64).cos())
            }
        })
        .collect()
}

/// VEOG (blinks plus drift) and HEOG (gaze steps plus drift), both
/// band-passed to 0.5–5 Hz.
pub fn synth_eog(n_samples: usize, fs: f64, params: &EogParams, rng: &mut SeededRng) -> Result<EogSignals> {
    check_shape(n_samples, fs)?;
    let (wlo, whi) = params.blink_width;
    if wlo < 2 || wlo > whi {
        return Err(Error::InvalidParameter(format!("blink width range {wlo}..{whi}")));
    }

    let m = margin(fs);
    let n_ext = n_samples + 2 * m;
    let mut veog = slow_drift(n_ext, fs, params.drift_uv, rng);
    let mut blinks = Vec::new();
    let mut t = (rng.uniform_range(0.2, 1.5) * fs) as usize;
    while t + whi < n_ext {
        let width = rng.int_range(wlo, whi);
        let amplitude = rng.uniform_range(params.blink_amplitude_uv.0, params.blink_amplitude_uv.1);
        for (k, s) in blink_shape(width).into_iter().enumerate() {
            veog[t + k] += amplitude * s;
        }
        blinks.push(BlinkEvent {
            onset: t,
            width,
            amplitude,
        });
        t += width + (rng.uniform_range(params.blink_gap_s.0, params.blink_gap_s.1) * fs) as usize;
    }

    let mut gaze = Array1::zeros(n_ext);
    let mut saccades = Vec::new();
    let mut pos = 0.0f64;
    let mut t = 0usize;
    loop {
        let fix = (rng.uniform_range(params.fixation_s.0, params.fixation_s.1) * fs) as usize;
        let dur = rng.int_range(params.saccade_duration.0, params.saccade_duration.1);
        let end = (t + fix).min(n_ext);
        gaze.slice_mut(ndarray::s![t..end]).fill(pos);
        t = end;
        if t + dur >= n_ext {
            gaze.slice_mut(ndarray::s![t..]).fill(pos);
            break;
        }
        let mut target = rng.uniform_range(-params.max_gaze_uv, params.max_gaze_uv);
        while (target - pos).abs() < params.min_saccade_uv {
            target = rng.uniform_range(-params.max_gaze_uv, params.max_gaze_uv);
        }
        for k in 0..dur {
            let frac = 0.5 * (1.0 - (PI * (k + 1) as f64 / dur as f64).cos());
            gaze[t + k] = pos + (target - pos) * frac;
        }
        saccades.push(SaccadeEvent {
            onset: t,
            duration: dur,
            step: target - pos,
        });
        pos = target;
        t += dur;
    }
    if params.coupling_tau_s > 0.0 {
        let alpha = params.coupling_tau_s / (params.coupling_tau_s + 1.0 / fs);
        let (mut prev_in, mut prev_out) = (gaze[0], 0.0);
        for g in gaze.iter_mut() {
            let out = alpha * (prev_out + *g - prev_in);
            prev_in = *g;
            prev_out = out;
            *g = out;
        }
    }
    let heog = gaze + slow_drift(n_ext, fs, params.drift_uv, rng);

    veog = crop(&bandpass(veog.view(), EOG_BAND.0, EOG_BAND.1, fs)?, m, n_samples);
    let heog = crop(&bandpass(heog.view(), EOG_BAND.0, EOG_BAND.1, fs)?, m, n_samples);
    let inside = |onset: usize, len: usize| onset >= m && onset + len <= m + n_samples;
    let blinks = blinks
        .into_iter()
        .filter(|b| inside(b.onset, b.width))
        .map(|b| BlinkEvent { onset: b.onset - m, ..b })
        .collect();
    let saccades = saccades
        .into_iter()
        .filter(|e| inside(e.onset, e.duration))
        .map(|e| SaccadeEvent { onset: e.onset - m, ..e })
        .collect();
    Ok(EogSignals {
        veog,
        heog,
        blinks,
        saccades,
    })
}
