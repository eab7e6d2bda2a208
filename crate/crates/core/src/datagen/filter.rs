//! Zero-phase Butterworth band-pass filtering.
//!
//! The band filter is a cascade of a 4th-order Butterworth high-pass at
//! `lo_hz` and a 4th-order Butterworth low-pass at `hi_hz` (eight poles in
//! total), each realized as two biquads designed by the bilinear transform
//! with frequency prewarping. It is run forward then backward (zero phase,
//! squared magnitude response). Edges are extended by odd reflection of
//! `3 × 8 = 24` samples and every section starts from its steady state for
//! the first sample, so a constant input maps to zero.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Q factors of the two second-order sections of a 4th-order Butterworth.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_7];
const FILTER_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    /// `a1, a2` with `a0` normalized to 1.
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * fc / fs;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / (2.0 * q);
        let a0 = 1.0 + alpha;
        let k = (1.0 - cs) / 2.0;
        Self {
            b: [k / a0, (1.0 - cs) / a0, k / a0],
            a: [-2.0 * cs / a0, (1.0 - alpha) / a0],
        }
    }

    fn highpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * fc / fs;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / (2.0 * q);
        let a0 = 1.0 + alpha;
        let k = (1.0 + cs) / 2.0;
        Self {
            b: [k / a0, -(1.0 + cs) / a0, k / a0],
            a: [-2.0 * cs / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II, starting in the steady state for a
    /// constant input equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let y0 = self.dc_gain() * x0;
        let mut z2 = b2 * x0 - a2 * y0;
        let mut z1 = y0 - b0 * x0;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

fn sections(lo_hz: f64, hi_hz: f64, fs: f64) -> [Biquad; 4] {
    [
        Biquad::highpass(lo_hz, fs, BUTTER4_Q[0]),
        Biquad::highpass(lo_hz, fs, BUTTER4_Q[1]),
        Biquad::lowpass(hi_hz, fs, BUTTER4_Q[0]),
        Biquad::lowpass(hi_hz, fs, BUTTER4_Q[1]),
    ]
}

/// Zero-phase band-pass of `x` between `lo_hz` and `hi_hz`.
pub fn bandpass(x: ArrayView1<f64>, lo_hz: f64, hi_hz: f64, fs: f64) -> Result<Array1<f64>> {
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs / 2.0) {
        return Err(Error::BadBand {
            lo: lo_hz,
            hi: hi_hz,
            fs,
        });
    }
    let n = x.len();
    if n == 0 {
        return Ok(Array1::zeros(0));
    }
    let x: Vec<f64> = x.to_vec();
    let pad = (3 * FILTER_ORDER).min(n - 1);

    // odd reflection about the end points
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(&x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let secs = sections(lo_hz, hi_hz, fs);
    for s in &secs {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in &secs {
        s.run(&mut ext);
    }
    ext.reverse();
    Ok(Array1::from(ext[pad..pad + n].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn sine(freq: f64, fs: f64, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
    }

    /// Least-squares amplitude of a known-frequency sinusoid over the middle
    /// third of the signal.
    fn fitted_amplitude(y: &Array1<f64>, freq: f64, fs: f64) -> f64 {
        let n = y.len();
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in n / 3..2 * n / 3 {
            let w = 2.0 * std::f64::consts::PI * freq * i as f64 / fs;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += y[i] * s;
            yc += y[i] * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        (a * a + b * b).sqrt()
    }

    #[test]
    fn dc_is_removed() {
        let x = Array1::from_elem(2000, 3.5);
        let y = bandpass(x.view(), 0.5, 40.0, 200.0).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-3 * 3.5));
    }

    #[test]
    fn passband_sine_within_one_db() {
        let y = bandpass(sine(10.0, 200.0, 4000).view(), 0.5, 40.0, 200.0).unwrap();
        let amp = fitted_amplitude(&y, 10.0, 200.0);
        assert!((20.0 * amp.log10()).abs() < 1.0, "amp {amp}");
    }

    #[test]
    fn stopband_sine_attenuated() {
        let y = bandpass(sine(80.0, 200.0, 4000).view(), 0.5, 40.0, 200.0).unwrap();
        let amp = fitted_amplitude(&y, 80.0, 200.0);
        assert!(20.0 * amp.log10() < -20.0, "amp {amp}");
    }

    #[test]
    fn bad_band_edges() {
        let x = Array1::zeros(10);
        for (lo, hi) in [(0.0, 10.0), (5.0, 5.0), (10.0, 5.0), (1.0, 100.0)] {
            assert!(matches!(
                bandpass(x.view(), lo, hi, 200.0),
                Err(Error::BadBand { .. })
            ));
        }
    }

    #[test]
    fn short_inputs() {
        let y = bandpass(Array1::from(vec![1.0, -1.0, 2.0]).view(), 0.5, 5.0, 200.0).unwrap();
        assert_eq!(y.len(), 3);
        assert_eq!(bandpass(Array1::zeros(0).view(), 0.5, 5.0, 200.0).unwrap().len(), 0);
    }

    #[test]
    fn filter_is_linear() {
        let mut rng = crate::numerics::SeededRng::new(17);
        let x = crate::numerics::randn(1, 1500, &mut rng).row(0).to_owned();
        let y = crate::numerics::randn(1, 1500, &mut rng).row(0).to_owned();
        let (alpha, beta) = (2.5, -0.75);
        let combo = &x * alpha + &y * beta;
        let lhs = bandpass(combo.view(), 0.5, 40.0, 200.0).unwrap();
        let rhs = bandpass(x.view(), 0.5, 40.0, 200.0).unwrap() * alpha
            + bandpass(y.view(), 0.5, 40.0, 200.0).unwrap() * beta;
        assert!((&lhs - &rhs).iter().all(|d| d.abs() < 1e-9));
    }
}
