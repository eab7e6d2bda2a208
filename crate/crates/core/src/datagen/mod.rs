//! Semi-simulated recordings: pure EEG contaminated by scaled EOG.
//!
//! Each subject gets its own pure EEG, VEOG and HEOG traces and its own
//! contamination coefficients `(a, b)`:
//!
//! ```text
//! contaminated = pure + a · veog + b · heog
//! ```
//!
//! with the same `a, b` on every channel. The generator is deterministic for
//! a given master seed; subject `i` uses seed `master + i`.

mod filter;
mod synth;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::recording::{ChannelRole, Recording};

pub use filter::bandpass;
pub use synth::{
    synth_eog, synth_pure_eeg, BlinkEvent, EogParams, EogSignals, SaccadeEvent, EEG_BAND,
    EEG_CHANNEL_STD_UV, EOG_BAND,
};

/// 10–20 montage labels of the 19 simulated channels.
pub const CHANNEL_LABELS: [&str; 19] = [
    "FP1", "FP2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T3", "T4", "T5",
    "T6", "Fz", "Cz", "Pz",
];
pub const VEOG_LABEL: &str = "VEOG";
pub const HEOG_LABEL: &str = "HEOG";
pub const DEFAULT_FS: f64 = 200.0;
pub const DEFAULT_SAMPLES: usize = 6000;

/// `pure + a · veog + b · heog`, broadcast over channels.
pub fn contaminate(
    pure: ArrayView2<f64>,
    veog: ArrayView1<f64>,
    heog: ArrayView1<f64>,
    a: f64,
    b: f64,
) -> Result<Array2<f64>> {
    let t = pure.ncols();
    for len in [veog.len(), heog.len()] {
        if len != t {
            return Err(Error::LengthMismatch { left: t, right: len });
        }
    }
    let artifact = &veog * a + &heog * b;
    Ok(&pure + &artifact.insert_axis(Axis(0)))
}

/// Least-squares `(a, b)` such that `contaminated − pure ≈ a·veog + b·heog`,
/// pooled over all channels.
pub fn fit_mixing_coeffs(
    contaminated: ArrayView2<f64>,
    pure: ArrayView2<f64>,
    veog: ArrayView1<f64>,
    heog: ArrayView1<f64>,
) -> Result<(f64, f64)> {
    if contaminated.dim() != pure.dim() {
        return Err(Error::Dimension(format!(
            "contaminated is {:?}, pure is {:?}",
            contaminated.dim(),
            pure.dim()
        )));
    }
    let t = pure.ncols();
    for len in [veog.len(), heog.len()] {
        if len != t {
            return Err(Error::LengthMismatch { left: t, right: len });
        }
    }
    let resid = &contaminated - &pure;
    let n_rows = resid.nrows() as f64;
    let vv = veog.dot(&veog) * n_rows;
    let hh = heog.dot(&heog) * n_rows;
    let vh = veog.dot(&heog) * n_rows;
    let (mut vr, mut hr) = (0.0, 0.0);
    for row in resid.axis_iter(Axis(0)) {
        vr += veog.dot(&row);
        hr += heog.dot(&row);
    }
    let det = vv * hh - vh * vh;
    if !(det > 1e-12 * vv * hh) {
        return Err(Error::RankDeficient);
    }
    Ok(((vr * hh - hr * vh) / det, (hr * vv - vr * vh) / det))
}

/// Generator settings shared by all subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs: f64,
    /// Range of `a`.
    pub a_range: (f64, f64),
    /// Range of `b`.
    pub b_range: (f64, f64),
    pub eog: EogParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_channels: CHANNEL_LABELS.len(),
            n_samples: DEFAULT_SAMPLES,
            fs: DEFAULT_FS,
            a_range: (0.2, 1.0),
            b_range: (0.1, 0.6),
            eog: EogParams::default(),
        }
    }
}

impl SimConfig {
    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.n_samples = (seconds * self.fs).round() as usize;
        self
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.n_channels)
            .map(|i| match CHANNEL_LABELS.get(i) {
                Some(l) => (*l).to_string(),
                None => format!("CH{}", i + 1),
            })
            .collect()
    }
}

/// One simulated subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSimDataset {
    pub subject: String,
    pub seed: u64,
    pub labels: Vec<String>,
    pub fs: f64,
    pub pure: Array2<f64>,
    pub veog: Array1<f64>,
    pub heog: Array1<f64>,
    pub a: f64,
    pub b: f64,
    pub contaminated: Array2<f64>,
    pub blinks: Vec<BlinkEvent>,
    pub saccades: Vec<SaccadeEvent>,
}

impl SemiSimDataset {
    /// Ground-truth EOG as a `2 × T` matrix (VEOG, HEOG).
    pub fn eog(&self) -> Array2<f64> {
        ndarray::stack![Axis(0), self.veog, self.heog]
    }

    /// Contaminated EEG with the two EOG reference rows appended.
    pub fn to_recording(&self) -> Result<Recording> {
        let data = ndarray::concatenate![Axis(0), self.contaminated, self.eog()];
        let mut labels = self.labels.clone();
        labels.push(VEOG_LABEL.into());
        labels.push(HEOG_LABEL.into());
        let mut roles = vec![ChannelRole::Eeg; self.labels.len()];
        roles.extend([ChannelRole::Veog, ChannelRole::Heog]);
        Ok(Recording::with_roles(data, labels, roles, self.fs)?.with_subject(&self.subject))
    }

    pub fn pure_recording(&self) -> Result<Recording> {
        Ok(Recording::new(self.pure.clone(), self.labels.clone(), self.fs)?.with_subject(&self.subject))
    }
}

pub fn subject_name(index: usize) -> String {
    format!("S{:02}", index + 1)
}

/// Simulates subject `index` with seed `master_seed + index`.
pub fn generate_subject(index: usize, master_seed: u64, config: &SimConfig) -> Result<SemiSimDataset> {
    let seed = master_seed.wrapping_add(index as u64);
    let mut rng = SeededRng::new(seed);
    let a = rng.uniform_range(config.a_range.0, config.a_range.1);
    let b = rng.uniform_range(config.b_range.0, config.b_range.1);
    let pure = synth_pure_eeg(config.n_channels, config.n_samples, config.fs, &mut rng)?;
    let eog = synth_eog(config.n_samples, config.fs, &config.eog, &mut rng)?;
    let contaminated = contaminate(pure.view(), eog.veog.view(), eog.heog.view(), a, b)?;
    Ok(SemiSimDataset {
        subject: subject_name(index),
        seed,
        labels: config.labels(),
        fs: config.fs,
        pure,
        veog: eog.veog,
        heog: eog.heog,
        a,
        b,
        contaminated,
        blinks: eog.blinks,
        saccades: eog.saccades,
    })
}

/// Random-offset, random-length segmentation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpec {
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SegmentSpec {
    fn default() -> Self {
        Self {
            count: 250,
            min_len: 200,
            max_len: 2000,
            seed: 0,
        }
    }
}

/// Draws `spec.count` segments with lengths uniform in
/// `[min_len, min(max_len, T)]` and uniform offsets.
pub fn segment(rec: &Recording, spec: &SegmentSpec) -> Result<Vec<Recording>> {
    let n = rec.n_samples();
    if spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::InvalidParameter(format!(
            "segment length range {}..{}",
            spec.min_len, spec.max_len
        )));
    }
    if spec.min_len > n {
        return Err(Error::SegmentTooLong {
            max_len: spec.min_len,
            len: n,
        });
    }
    let hi = spec.max_len.min(n);
    let mut rng = SeededRng::new(spec.seed);
    Ok((0..spec.count)
        .map(|_| {
            let len = rng.int_range(spec.min_len, hi);
            let start = rng.int_range(0, n - len);
            rec.slice(start, len)
        })
        .collect())
}
