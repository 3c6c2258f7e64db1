use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::Segment;

pub const CWT_SCALES: usize = 128;
pub const WAVELET_LEN: usize = 1024;
pub const MORSE_BETA: f64 = 3.0;
pub const MORSE_GAMMA: f64 = 3.0;
pub const MIN_FREQ_HZ: f64 = 0.1;
pub const MAX_FREQ_FRACTION: f64 = 0.4;
const MIN_INPUT: usize = 64;
// frequency grid used to sample the wavelet before truncation
const DESIGN_LEN: usize = 16384;

#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    /// `n_scales × n_samples` magnitudes, row-major, highest frequency first.
    pub matrix: Vec<Vec<f64>>,
    pub scales_hz: Vec<f64>,
}

impl Scalogram {
    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn cols(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }
}

/// Generalized Morse frequency response, normalized to peak value 2.
fn morse(omega: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let (b, g) = (MORSE_BETA, MORSE_GAMMA);
    let norm = 2.0 * (std::f64::consts::E * g / b).powf(b / g);
    norm * omega.powf(b) * (-omega.powf(g)).exp()
}

/// Peak angular frequency (rad/sample) at scale 1.
fn morse_peak() -> f64 {
    (MORSE_BETA / MORSE_GAMMA).powf(1.0 / MORSE_GAMMA)
}

/// Precomputed wavelet spectra for one sampling rate and input length.
pub struct CwtPlan {
    pub fs: f64,
    pub n: usize,
    pub scales_hz: Vec<f64>,
    nfft: usize,
    spectra: Vec<Vec<Complex64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CwtPlan {
    pub fn new(fs: f64, n: usize) -> Result<Self> {
        if n < MIN_INPUT {
            return Err(Error::InvalidInput(format!(
                "scalogram input needs at least {MIN_INPUT} samples, got {n}"
            )));
        }
        if !(fs > 0.0) || MAX_FREQ_FRACTION * fs <= MIN_FREQ_HZ {
            return Err(Error::InvalidInput(format!("unsupported sampling rate {fs}")));
        }
        let f_hi = MAX_FREQ_FRACTION * fs;
        let ratio = MIN_FREQ_HZ / f_hi;
        let scales_hz: Vec<f64> = (0..CWT_SCALES)
            .map(|k| f_hi * ratio.powf(k as f64 / (CWT_SCALES - 1) as f64))
            .collect();

        let nfft = (n + WAVELET_LEN - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let design_inv = planner.plan_fft_inverse(DESIGN_LEN);

        let half = WAVELET_LEN / 2;
        let spectra = scales_hz
            .iter()
            .map(|&f| {
                let scale = morse_peak() * fs / (2.0 * PI * f);
                // sample the analytic response, then go to time domain
                let mut buf: Vec<Complex64> = (0..DESIGN_LEN)
                    .map(|k| {
                        let w = 2.0 * PI * k as f64 / DESIGN_LEN as f64;
                        let v = if k < DESIGN_LEN / 2 { morse(scale * w) } else { 0.0 };
                        Complex64::new(v / DESIGN_LEN as f64, 0.0)
                    })
                    .collect();
                design_inv.process(&mut buf);
                // taps for lags -half..half, placed so output index t aligns with input t
                let mut kernel = vec![Complex64::new(0.0, 0.0); nfft];
                for (j, slot) in kernel.iter_mut().take(WAVELET_LEN).enumerate() {
                    let lag = j as isize - half as isize;
                    *slot = buf[lag.rem_euclid(DESIGN_LEN as isize) as usize];
                }
                fwd.process(&mut kernel);
                kernel
            })
            .collect();
        Ok(Self { fs, n, scales_hz, nfft, spectra, fwd, inv })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Scalogram> {
        if x.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "plan built for {} samples, got {}",
                self.n,
                x.len()
            )));
        }
        let mut xf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        xf.resize(self.nfft, Complex64::new(0.0, 0.0));
        self.fwd.process(&mut xf);
        let half = WAVELET_LEN / 2;
        let scale = 1.0 / self.nfft as f64;
        let matrix = self
            .spectra
            .iter()
            .map(|k| {
                let mut y: Vec<Complex64> = xf.iter().zip(k).map(|(a, b)| a * b).collect();
                self.inv.process(&mut y);
                y[half..half + self.n].iter().map(|c| c.norm() * scale).collect()
            })
            .collect();
        Ok(Scalogram { matrix, scales_hz: self.scales_hz.clone() })
    }
}

pub fn cwt_scalogram(seg: &Segment) -> Result<Scalogram> {
    CwtPlan::new(seg.fs, seg.len())?.transform(&seg.samples)
}

/// Mean magnitude of each scale row.
pub fn cwt_features(s: &Scalogram) -> Vec<f64> {
    s.matrix
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len().max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, fs: f64, f: f64, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn response_peak_is_two_at_unit_frequency() {
        assert!((morse_peak() - 1.0).abs() < 1e-15);
        assert!((morse(1.0) - 2.0).abs() < 1e-12);
        assert!(morse(0.9) < 2.0 && morse(1.1) < 2.0);
    }

    #[test]
    fn scale_grid() {
        let plan = CwtPlan::new(125.0, 1250).unwrap();
        assert_eq!(plan.scales_hz.len(), 128);
        assert!((plan.scales_hz[0] - 50.0).abs() < 1e-9);
        assert!((plan.scales_hz[127] - 0.1).abs() < 1e-9);
        let step = plan.scales_hz[1] / plan.scales_hz[0];
        for w in plan.scales_hz.windows(2) {
            assert!((w[1] / w[0] - step).abs() < 1e-9);
        }
    }

    #[test]
    fn tone_peaks_at_its_frequency() {
        let fs = 125.0;
        let plan = CwtPlan::new(fs, 1250).unwrap();
        let step = plan.scales_hz[0] / plan.scales_hz[1];
        for f0 in [0.5, 1.3, 2.0, 7.5, 20.0] {
            let s = plan.transform(&tone(1250, fs, f0, 1.0)).unwrap();
            let means = cwt_features(&s);
            let best = (0..means.len()).max_by(|&a, &b| means[a].total_cmp(&means[b])).unwrap();
            let ratio = s.scales_hz[best] / f0;
            assert!(ratio <= step * 1.0001 && ratio >= 1.0 / step / 1.0001, "f0 {f0}: row {}", s.scales_hz[best]);
        }
    }

    #[test]
    fn matched_tone_magnitude_near_amplitude() {
        let fs = 125.0;
        let plan = CwtPlan::new(fs, 2048).unwrap();
        let f0 = plan.scales_hz[40];
        let s = plan.transform(&tone(2048, fs, f0, 3.0)).unwrap();
        assert!((s.matrix[40][1024] - 3.0).abs() < 0.01, "{}", s.matrix[40][1024]);
    }

    #[test]
    fn zero_and_scaling() {
        let plan = CwtPlan::new(32.0, 800).unwrap();
        let z = plan.transform(&[0.0; 800]).unwrap();
        assert!(z.matrix.iter().flatten().all(|v| *v == 0.0));
        assert_eq!((z.rows(), z.cols()), (128, 800));
        let x = tone(800, 32.0, 1.2, 1.0);
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let (sx, sy) = (plan.transform(&x).unwrap(), plan.transform(&y).unwrap());
        for (a, b) in sx.matrix.iter().flatten().zip(sy.matrix.iter().flatten()) {
            assert!((b - 2.5 * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn shift_covariance_in_interior() {
        let fs = 64.0;
        let n = 4096;
        let shift = 37;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 1.1 * t).sin() + 0.3 * (2.0 * PI * 4.7 * t * (1.0 + 0.01 * t)).cos()
            })
            .collect();
        let mut y = vec![0.0; n];
        y[shift..].copy_from_slice(&x[..n - shift]);
        let plan = CwtPlan::new(fs, n).unwrap();
        let (sx, sy) = (plan.transform(&x).unwrap(), plan.transform(&y).unwrap());
        for r in 0..128 {
            for t in WAVELET_LEN..n - WAVELET_LEN {
                assert!((sy.matrix[r][t + shift] - sx.matrix[r][t]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn short_input_rejected() {
        assert!(CwtPlan::new(125.0, 63).is_err());
    }
}
