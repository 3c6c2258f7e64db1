//! Raw PPG segments and the preprocessing filters every representation
//! builds on.
//!
//! Butterworth filters are designed in zero-pole-gain form from the analog
//! prototype (pre-warped bilinear transform) and realized as cascaded
//! second-order sections. Zero-phase application runs the cascade forward
//! and backward over an odd-reflected extension of the signal.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference labels attached to a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    Bp { sbp: f64, dbp: f64 },
    Af { af: bool },
}

/// One fixed-length PPG recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub subject_id: String,
    pub labels: Option<Labels>,
}

impl Segment {
    /// Builds a validated segment: `fs > 0`, at least two seconds of samples,
    /// all samples finite.
    pub fn new(samples: Vec<f64>, fs: f64, subject_id: impl Into<String>) -> Result<Self> {
        let seg = Segment {
            samples,
            fs,
            subject_id: subject_id.into(),
            labels: None,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::InvalidInput(format!("sampling rate {} must be > 0", self.fs)));
        }
        if (self.samples.len() as f64) < 2.0 * self.fs {
            return Err(Error::InvalidInput(format!(
                "{} samples at {} Hz is shorter than two seconds",
                self.samples.len(),
                self.fs
            )));
        }
        check_finite(&self.samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same metadata, new samples.
    pub fn map_samples(&self, samples: Vec<f64>) -> Segment {
        Segment {
            samples,
            fs: self.fs,
            subject_id: self.subject_id.clone(),
            labels: self.labels,
        }
    }
}

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Bandpass,
    Lowpass,
    Highpass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoffs_hz: Vec<f64>,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn bandpass(order: usize, low_hz: f64, high_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass,
            order,
            cutoffs_hz: vec![low_hz, high_hz],
            zero_phase: true,
        }
    }

    pub fn lowpass(order: usize, cutoff_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Lowpass,
            order,
            cutoffs_hz: vec![cutoff_hz],
            zero_phase: true,
        }
    }

    pub fn highpass(order: usize, cutoff_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Highpass,
            order,
            cutoffs_hz: vec![cutoff_hz],
            zero_phase: true,
        }
    }

    pub fn causal(mut self) -> Self {
        self.zero_phase = false;
        self
    }

    /// Reflection padding length used by zero-phase application.
    pub fn pad_len(&self) -> usize {
        3 * (self.order + 1)
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(1..=8).contains(&self.order) {
            return Err(Error::InvalidSpec(format!("filter order {} outside [1, 8]", self.order)));
        }
        let expected = match self.kind {
            FilterKind::Bandpass => 2,
            _ => 1,
        };
        if self.cutoffs_hz.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "{:?} filter needs {expected} cutoff(s), got {}",
                self.kind,
                self.cutoffs_hz.len()
            )));
        }
        let nyquist = fs / 2.0;
        for &c in &self.cutoffs_hz {
            if !(c.is_finite() && c > 0.0 && c < nyquist) {
                return Err(Error::InvalidSpec(format!(
                    "cutoff {c} Hz not inside (0, {nyquist}) Hz"
                )));
            }
        }
        if self.kind == FilterKind::Bandpass && self.cutoffs_hz[0] >= self.cutoffs_hz[1] {
            return Err(Error::InvalidSpec(format!(
                "bandpass requires low < high, got {:?}",
                self.cutoffs_hz
            )));
        }
        Ok(())
    }
}

/// One biquad in direct form II transposed; `a[0]` is implicitly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Sos {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = self.a[0] + self.a[1] * zi + self.a[2] * zi * zi;
        num / den
    }

    /// Steady-state output for a unit step.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// Butterworth design as second-order sections.
pub fn design_butterworth(spec: &FilterSpec, fs: f64) -> Result<Vec<Sos>> {
    spec.validate(fs)?;
    let n = spec.order;
    let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
    let prototype: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    let (analog_poles, reference_omega): (Vec<Complex64>, f64) = match spec.kind {
        FilterKind::Lowpass => {
            let wc = warp(spec.cutoffs_hz[0]);
            (prototype.iter().map(|p| p * wc).collect(), 0.0)
        }
        FilterKind::Highpass => {
            let wc = warp(spec.cutoffs_hz[0]);
            (prototype.iter().map(|p| wc / p).collect(), std::f64::consts::PI)
        }
        FilterKind::Bandpass => {
            let wl = warp(spec.cutoffs_hz[0]);
            let wh = warp(spec.cutoffs_hz[1]);
            let bw = wh - wl;
            let w0 = (wl * wh).sqrt();
            let mut poles = Vec::with_capacity(2 * n);
            for p in &prototype {
                let half = p * (bw / 2.0);
                let disc = (half * half - w0 * w0).sqrt();
                poles.push(half + disc);
                poles.push(half - disc);
            }
            (poles, 2.0 * (w0 / (2.0 * fs)).atan())
        }
    };

    let fs2 = 2.0 * fs;
    let digital: Vec<Complex64> = analog_poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();

    let tol = 1e-10;
    let mut complex_upper: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > tol).collect();
    complex_upper.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    let mut real: Vec<f64> = digital.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);

    let (b2, b1) = match spec.kind {
        FilterKind::Lowpass => ([1.0, 2.0, 1.0], [1.0, 1.0, 0.0]),
        FilterKind::Highpass => ([1.0, -2.0, 1.0], [1.0, -1.0, 0.0]),
        FilterKind::Bandpass => ([1.0, 0.0, -1.0], [1.0, 0.0, -1.0]),
    };

    let mut sections = Vec::new();
    for pair in real.chunks(2) {
        if pair.len() == 2 {
            sections.push(Sos {
                b: b2,
                a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]],
            });
        } else {
            sections.push(Sos {
                b: b1,
                a: [1.0, -pair[0], 0.0],
            });
        }
    }
    for p in complex_upper {
        sections.push(Sos {
            b: b2,
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        });
    }

    let z0 = Complex64::from_polar(1.0, reference_omega);
    for s in &mut sections {
        let g = s.response(z0).norm();
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "section gain {g} at reference frequency"
            )));
        }
        for c in &mut s.b {
            *c /= g;
        }
    }
    Ok(sections)
}

/// Complex frequency response of a section cascade at `freq_hz`.
pub fn frequency_response(sections: &[Sos], freq_hz: f64, fs: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * freq_hz / fs);
    sections.iter().map(|s| s.response(z)).product()
}

fn sosfilt(sections: &[Sos], x: &[f64], init: Option<f64>) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut carried = init.unwrap_or(0.0);
    for s in sections {
        // state that makes the section look settled on a constant input `carried`
        let ss = s.dc_gain() * carried;
        let (mut z1, mut z2) = if init.is_some() {
            (ss - s.b[0] * carried, s.b[2] * carried - s.a[2] * ss)
        } else {
            (0.0, 0.0)
        };
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b[0] * xin + z1;
            z1 = s.b[1] * xin - s.a[1] * out + z2;
            z2 = s.b[2] * xin - s.a[2] * out;
            *v = out;
        }
        carried = ss;
    }
    y
}

fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    out
}

fn forward_backward(sections: &[Sos], x: &[f64], pad: usize) -> Vec<f64> {
    let ext = odd_extend(x, pad);
    let mut y = sosfilt(sections, &ext, Some(ext[0]));
    y.reverse();
    let mut y = sosfilt(sections, &y, Some(y[0]));
    y.reverse();
    y[pad..pad + x.len()].to_vec()
}

/// Zero-phase filtering of a raw sample slice.
///
/// The forward-backward pass is averaged with its mirror image (backward
/// first) so that filtering a reversed signal returns exactly the reversed
/// output.
pub fn filtfilt(sections: &[Sos], x: &[f64], pad: usize) -> Result<Vec<f64>> {
    if x.len() <= pad {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples too short for padding {pad}",
            x.len()
        )));
    }
    let fwd = forward_backward(sections, x, pad);
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    let mut bwd = forward_backward(sections, &rev, pad);
    bwd.reverse();
    Ok(fwd.iter().zip(&bwd).map(|(a, b)| 0.5 * (a + b)).collect())
}

/// Applies a Butterworth filter to a slice sampled at `fs`.
pub fn apply_filter(x: &[f64], fs: f64, spec: &FilterSpec) -> Result<Vec<f64>> {
    check_finite(x)?;
    let sections = design_butterworth(spec, fs)?;
    if spec.zero_phase {
        filtfilt(&sections, x, spec.pad_len())
    } else {
        Ok(sosfilt(&sections, x, x.first().copied()))
    }
}

pub fn butterworth_filter(seg: &Segment, spec: &FilterSpec) -> Result<Segment> {
    let y = apply_filter(&seg.samples, seg.fs, spec)?;
    Ok(seg.map_samples(y))
}

pub const NLMS_EPSILON: f64 = 1e-8;
pub const NLMS_DEFAULT_ORDER: usize = 5;
pub const NLMS_DEFAULT_MU: f64 = 0.01;

/// Normalized LMS canceller with a constant-one reference tap vector.
/// Returns the error signal `e(n) = x(n) - w·u(n)`.
pub fn nlms_filter(x: &[f64], order: usize, mu: f64) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(Error::InvalidSpec("NLMS order must be >= 1".into()));
    }
    if !(mu > 0.0 && mu < 2.0) {
        return Err(Error::InvalidSpec(format!("NLMS step size {mu} outside (0, 2)")));
    }
    if order >= x.len() {
        return Err(Error::InvalidSpec(format!(
            "NLMS order {order} >= signal length {}",
            x.len()
        )));
    }
    check_finite(x)?;
    let u = vec![1.0; order];
    let norm = NLMS_EPSILON + u.iter().map(|v| v * v).sum::<f64>();
    let mut w = vec![0.0; order];
    let mut out = Vec::with_capacity(x.len());
    for &xn in x {
        let est: f64 = w.iter().zip(&u).map(|(wi, ui)| wi * ui).sum();
        let e = xn - est;
        for (wi, ui) in w.iter_mut().zip(&u) {
            *wi += mu * e * ui / norm;
        }
        out.push(e);
    }
    Ok(out)
}

pub fn nlms_adaptive_filter(seg: &Segment, order: usize, mu: f64) -> Result<Segment> {
    Ok(seg.map_samples(nlms_filter(&seg.samples, order, mu)?))
}

/// Finite-difference derivative of order 1 or 2, scaled to per-second units.
/// Central differences inside, second-order one-sided stencils at the ends.
pub fn derivative_slice(x: &[f64], fs: f64, n: u8) -> Result<Vec<f64>> {
    let len = x.len();
    if len < 5 {
        return Err(Error::InvalidInput(format!("derivative needs >= 5 samples, got {len}")));
    }
    let mut d = vec![0.0; len];
    match n {
        1 => {
            for i in 1..len - 1 {
                d[i] = (x[i + 1] - x[i - 1]) * 0.5 * fs;
            }
            d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) * 0.5 * fs;
            d[len - 1] = (3.0 * x[len - 1] - 4.0 * x[len - 2] + x[len - 3]) * 0.5 * fs;
        }
        2 => {
            let fs2 = fs * fs;
            for i in 1..len - 1 {
                d[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) * fs2;
            }
            d[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) * fs2;
            d[len - 1] = (2.0 * x[len - 1] - 5.0 * x[len - 2] + 4.0 * x[len - 3] - x[len - 4]) * fs2;
        }
        _ => return Err(Error::InvalidSpec(format!("derivative order {n} not in {{1, 2}}"))),
    }
    Ok(d)
}

pub fn derivative(seg: &Segment, n: u8) -> Result<Segment> {
    Ok(seg.map_samples(derivative_slice(&seg.samples, seg.fs, n)?))
}

/// Prediction task; fixes the preprocessing chain and nominal sampling rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Bp,
    Af,
}

impl Task {
    /// Sampling rate of the datasets this task was defined on.
    pub fn nominal_fs(self) -> f64 {
        match self {
            Task::Bp => 125.0,
            Task::Af => 32.0,
        }
    }

    /// Segment duration in seconds.
    pub fn nominal_duration(self) -> f64 {
        match self {
            Task::Bp => 10.0,
            Task::Af => 25.0,
        }
    }
}

pub fn preprocess_slice(x: &[f64], fs: f64, task: Task) -> Result<Vec<f64>> {
    check_finite(x)?;
    match task {
        Task::Bp => apply_filter(x, fs, &FilterSpec::bandpass(4, 0.4, 7.0)),
        Task::Af => {
            let y = apply_filter(x, fs, &FilterSpec::lowpass(4, 6.0))?;
            let y = apply_filter(&y, fs, &FilterSpec::highpass(4, 0.5))?;
            nlms_filter(&y, NLMS_DEFAULT_ORDER, NLMS_DEFAULT_MU)
        }
    }
}

pub fn preprocess_for_task(seg: &Segment, task: Task) -> Result<Segment> {
    Ok(seg.map_samples(preprocess_slice(&seg.samples, seg.fs, task)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn rejects_cutoff_at_nyquist() {
        let spec = FilterSpec::lowpass(4, 62.5);
        assert!(matches!(design_butterworth(&spec, 125.0), Err(Error::InvalidSpec(_))));
        let spec = FilterSpec::bandpass(4, 7.0, 0.4);
        assert!(matches!(spec.validate(125.0), Err(Error::InvalidSpec(_))));
        assert!(FilterSpec::bandpass(9, 0.4, 7.0).validate(125.0).is_err());
    }

    #[test]
    fn non_finite_samples_rejected() {
        let mut x = tone(2.0, 125.0, 4.0);
        x[10] = f64::NAN;
        let spec = FilterSpec::bandpass(4, 0.4, 7.0);
        assert!(matches!(apply_filter(&x, 125.0, &spec), Err(Error::InvalidInput(_))));
        assert!(Segment::new(x, 125.0, "s").is_err());
    }

    #[test]
    fn section_cascade_matches_butterworth_magnitude() {
        // |H|^2 = 1 / (1 + (w/wc)^(2N)) in the pre-warped analog domain
        let fs = 125.0;
        let spec = FilterSpec::lowpass(5, 6.0);
        let sos = design_butterworth(&spec, fs).unwrap();
        assert_eq!(sos.len(), 3);
        let warp = |f: f64| (PI * f / fs).tan();
        for f in [0.5, 3.0, 6.0, 10.0, 30.0] {
            let ratio = warp(f) / warp(6.0);
            let expected = 1.0 / (1.0 + ratio.powi(10)).sqrt();
            let got = frequency_response(&sos, f, fs).norm();
            assert!((got - expected).abs() < 1e-9, "f={f} got={got} expected={expected}");
        }
    }

    #[test]
    fn bandpass_magnitude_matches_prototype() {
        let fs = 125.0;
        let sos = design_butterworth(&FilterSpec::bandpass(4, 0.4, 7.0), fs).unwrap();
        assert_eq!(sos.len(), 4);
        let warp = |f: f64| (PI * f / fs).tan();
        let (wl, wh) = (warp(0.4), warp(7.0));
        for f in [0.05, 0.4, 2.0, 7.0, 20.0] {
            let w = warp(f);
            let x = (w * w - wl * wh) / (w * (wh - wl));
            let expected = 1.0 / (1.0 + x.powi(8)).sqrt();
            let got = frequency_response(&sos, f, fs).norm();
            assert!((got - expected).abs() < 1e-9, "f={f} got={got} expected={expected}");
        }
    }

    /// Amplitude of the DFT bin at `f` (60 s records put every test tone on a bin).
    fn tone_amplitude(x: &[f64], f: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / fs;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        (re * re + im * im).sqrt() * 2.0 / x.len() as f64
    }

    fn gain_db(f: f64) -> f64 {
        let fs = 125.0;
        let x = tone(f, fs, 60.0);
        let y = apply_filter(&x, fs, &FilterSpec::bandpass(4, 0.4, 7.0)).unwrap();
        20.0 * (tone_amplitude(&y, f, fs) / tone_amplitude(&x, f, fs)).log10()
    }

    #[test]
    fn bandpass_passes_two_hz_within_one_db() {
        let db = gain_db(2.0);
        assert!(db.abs() < 1.0, "gain {db} dB");
    }

    #[test]
    fn bandpass_kills_dc() {
        let x = vec![3.7; 1250];
        let y = apply_filter(&x, 125.0, &FilterSpec::bandpass(4, 0.4, 7.0)).unwrap();
        let max = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-3 * 3.7, "max {max}");
    }

    #[test]
    fn bandpass_attenuates_out_of_band_tones() {
        for f in [0.05, 20.0] {
            let db = gain_db(f);
            assert!(db < -40.0, "{f} Hz attenuation {db} dB");
        }
    }

    #[test]
    fn causal_filter_has_unit_dc_gain_lowpass() {
        let x = vec![2.0; 500];
        let y = apply_filter(&x, 125.0, &FilterSpec::lowpass(4, 6.0).causal()).unwrap();
        assert!(y.iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn nlms_tracks_constant() {
        let c = 4.2;
        let x = vec![c; 400];
        let e = nlms_filter(&x, 5, 0.5).unwrap();
        // oracle: direct simulation of the recursion with the summed weight
        let mut w_sum = 0.0;
        for (n, &en) in e.iter().enumerate() {
            let expect = c - w_sum;
            assert!((en - expect).abs() < 1e-12);
            w_sum += 5.0 * 0.5 * expect / (NLMS_EPSILON + 5.0);
            if n > 100 {
                assert!(en.abs() < 1e-3 * c);
            }
        }
    }

    #[test]
    fn nlms_zero_in_zero_out() {
        let e = nlms_filter(&[0.0; 64], 5, 0.5).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nlms_removes_step_baseline_keeps_sine() {
        let fs = 32.0;
        let n = 1600;
        let sine: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / fs).sin()).collect();
        let x: Vec<f64> = sine
            .iter()
            .enumerate()
            .map(|(i, s)| s + if i >= 200 { 3.0 } else { -1.0 })
            .collect();
        let e = nlms_filter(&x, 5, 0.01).unwrap();
        let tail = 1000;
        let (a, b) = (&e[tail..], &sine[tail..]);
        let ma = a.iter().sum::<f64>() / a.len() as f64;
        let mb = b.iter().sum::<f64>() / b.len() as f64;
        let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
        let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr > 0.99, "corr {corr}");
    }

    #[test]
    fn nlms_order_checks() {
        assert!(nlms_filter(&[1.0; 4], 4, 0.5).is_err());
        assert!(nlms_filter(&[1.0; 40], 0, 0.5).is_err());
        assert!(nlms_filter(&[1.0; 40], 5, 2.0).is_err());
    }

    #[test]
    fn derivative_exact_on_polynomials() {
        let x: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let d2 = derivative_slice(&x, 1.0, 2).unwrap();
        assert!(d2.iter().all(|v| (v - 2.0).abs() < 1e-9));
        let ramp: Vec<f64> = (0..20).map(|i| 0.3 * i as f64 + 1.0).collect();
        let d1 = derivative_slice(&ramp, 50.0, 1).unwrap();
        assert!(d1.iter().all(|v| (v - 15.0).abs() < 1e-9));
        assert!(derivative_slice(&x[..4], 1.0, 1).is_err());
        assert!(derivative_slice(&x, 1.0, 3).is_err());
    }

    #[test]
    fn derivative_of_sine_matches_cosine() {
        let fs = 100.0;
        let x: Vec<f64> = (0..500).map(|i| (2.0 * PI * i as f64 / fs).sin()).collect();
        let d = derivative_slice(&x, fs, 1).unwrap();
        let err: Vec<f64> = d
            .iter()
            .enumerate()
            .map(|(i, v)| v - 2.0 * PI * (2.0 * PI * i as f64 / fs).cos())
            .collect();
        // relative to the RMS of the true derivative, 2*pi/sqrt(2)
        let rel = rms(&err) / (2.0 * PI / 2f64.sqrt());
        assert!(rel < 1e-3, "relative rms {rel}");
    }

    #[test]
    fn preprocess_shapes_and_dc() {
        let bp: Vec<f64> = (0..1250).map(|i| 5.0 + (2.0 * PI * 1.2 * i as f64 / 125.0).sin()).collect();
        let seg = Segment::new(bp, 125.0, "a").unwrap();
        let out = preprocess_for_task(&seg, Task::Bp).unwrap();
        assert_eq!(out.len(), 1250);

        let af: Vec<f64> = (0..800).map(|i| 50.0 + (2.0 * PI * 1.3 * i as f64 / 32.0).sin()).collect();
        let std_in = {
            let m = af.iter().sum::<f64>() / af.len() as f64;
            (af.iter().map(|v| (v - m).powi(2)).sum::<f64>() / af.len() as f64).sqrt()
        };
        let seg = Segment::new(af, 32.0, "b").unwrap();
        let out = preprocess_for_task(&seg, Task::Af).unwrap();
        assert_eq!(out.len(), 800);
        let mean = out.samples.iter().sum::<f64>() / 800.0;
        assert!(mean.abs() < 1e-2 * std_in, "mean {mean}");
    }

    #[test]
    fn segment_validation() {
        assert!(Segment::new(vec![0.0; 10], 125.0, "x").is_err());
        assert!(Segment::new(vec![0.0; 250], 0.0, "x").is_err());
        assert!(Segment::new(vec![0.0; 250], 125.0, "x").is_ok());
    }
}
