//! The 28 pulse-morphology features used for blood-pressure estimation.
//!
//! Pulse amplitudes are measured from the onset baseline, second-derivative
//! amplitudes (a..e waves) are raw. Features whose landmarks are missing
//! are NaN for that beat and filled by the cross-beat median.

use crate::error::{Error, Result};
use crate::pulse::{detect_pulses_slice, BeatContext, PulseFiducials};
use crate::signal::Segment;

pub const MORPH_FEATURE_NAMES: [&str; 28] = [
    "P1", "P2", "P3", "P2_over_P1", "RI", "AI", "Tp", "Td", "T1", "dT", "A1", "A2", "IPA",
    "IPAD", "b_a", "c_a", "d_a", "e_a", "AGI", "AGI_int", "AGI_mod", "t_b_a", "t_b_c", "t_b_d",
    "slope_b_c", "slope_b_d", "skewness", "kurtosis",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphFeatures(pub [f64; 28]);

impl MorphFeatures {
    pub const NAMES: [&'static str; 28] = MORPH_FEATURE_NAMES;

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn all_nan(&self) -> bool {
        self.0.iter().all(|v| v.is_nan())
    }
}

fn trapezoid(y: &[f64], base: f64, fs: f64) -> f64 {
    y.windows(2).map(|w| 0.5 * ((w[0] - base) + (w[1] - base))).sum::<f64>() / fs
}

/// Skewness and non-excess kurtosis of the beat treated as a density over
/// time, with weights `x - min(x)`.
pub fn shape_moments(x: &[f64]) -> (f64, f64) {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = x.iter().map(|v| v - lo).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return (f64::NAN, f64::NAN);
    }
    let mean = w.iter().enumerate().map(|(i, wi)| i as f64 * wi).sum::<f64>() / total;
    let moment = |k: i32| {
        w.iter()
            .enumerate()
            .map(|(i, wi)| wi * (i as f64 - mean).powi(k))
            .sum::<f64>()
            / total
    };
    let m2 = moment(2);
    if m2 <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    (moment(3) / m2.powf(1.5), moment(4) / (m2 * m2))
}

/// Features of one beat from its fiducials and the samples it was found in.
pub fn beat_features_from(fid: &PulseFiducials, x: &[f64], fs: f64) -> Result<MorphFeatures> {
    if fid.end_idx >= x.len() || !(fid.onset_idx < fid.p1.idx && fid.p1.idx < fid.end_idx) {
        return Err(Error::DegenerateBeat("fiducials outside the sample range".into()));
    }
    let base = x[fid.onset_idx];
    let p1 = fid.p1.amp - base;
    if !(p1 > 0.0 && fid.a.amp != 0.0) {
        return Err(Error::DegenerateBeat(format!(
            "systolic amplitude {p1} or a-wave {} unusable",
            fid.a.amp
        )));
    }
    let nan = f64::NAN;
    let p2 = fid.p2.map_or(nan, |p| p.amp - base);
    let p3 = fid.p3.map_or(nan, |p| p.amp - base);
    let t = |i: usize| i as f64 / fs;

    let tp = t(fid.end_idx - fid.onset_idx);
    let t1 = t(fid.p1.idx - fid.onset_idx);
    let td = t(fid.end_idx - fid.p1.idx);
    let dt = fid.p3.map_or(nan, |p| t(p.idx) - t(fid.p1.idx));

    let inflection = fid
        .notch_idx
        .or(fid.p2.map(|p| p.idx))
        .unwrap_or((fid.p1.idx + fid.end_idx) / 2);
    let a1 = trapezoid(&x[fid.onset_idx..=inflection], base, fs);
    let a2 = trapezoid(&x[inflection..=fid.end_idx], base, fs);
    let ipa = a2 / a1;

    let a = fid.a.amp;
    let b = fid.b.amp;
    let c = fid.c.map_or(nan, |p| p.amp);
    let d = fid.d.map_or(nan, |p| p.amp);
    let e = fid.e.map_or(nan, |p| p.amp);
    let tb = t(fid.b.idx);
    let time_from_b = |p: Option<crate::pulse::Point>| p.map_or(nan, |p| (t(p.idx) - tb).abs());
    let slope_from_b = |p: Option<crate::pulse::Point>| {
        p.map_or(nan, |p| (p.amp - b) / (t(p.idx) - tb))
    };
    let (skew, kurt) = shape_moments(&x[fid.onset_idx..=fid.end_idx]);

    Ok(MorphFeatures([
        p1,
        p2,
        p3,
        p2 / p1,
        p3 / p1,
        (p1 - p3) / p1,
        tp,
        td,
        t1,
        dt,
        a1,
        a2,
        ipa,
        ipa + d,
        b / a,
        c / a,
        d / a,
        e / a,
        (b - c - d - e) / a,
        (b - e) / a,
        (b - c - d) / a,
        (tb - t(fid.a.idx)).abs(),
        time_from_b(fid.c),
        time_from_b(fid.d),
        slope_from_b(fid.c),
        slope_from_b(fid.d),
        skew,
        kurt,
    ]))
}

pub fn beat_features(fid: &PulseFiducials, seg: &Segment) -> Result<MorphFeatures> {
    beat_features_from(fid, &seg.samples, seg.fs)
}

pub(crate) fn nan_median(values: &mut Vec<f64>) -> f64 {
    values.retain(|v| !v.is_nan());
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-feature median over beats, skipping NaN entries. Rows that are
/// entirely NaN do not count as beats.
pub fn aggregate_beats(rows: &[MorphFeatures]) -> Result<MorphFeatures> {
    let valid: Vec<&MorphFeatures> = rows.iter().filter(|r| !r.all_nan()).collect();
    if valid.is_empty() {
        return Err(Error::InsufficientBeats { found: 0, needed: 1 });
    }
    let mut out = [f64::NAN; 28];
    let mut col = Vec::with_capacity(valid.len());
    for (k, slot) in out.iter_mut().enumerate() {
        col.clear();
        col.extend(valid.iter().map(|r| r.0[k]));
        *slot = nan_median(&mut col);
    }
    Ok(MorphFeatures(out))
}

/// Per-beat feature rows of every complete interior beat in a preprocessed
/// sample array. Degenerate beats are skipped.
pub fn beat_rows(x: &[f64], fs: f64) -> Result<Vec<MorphFeatures>> {
    let pp = detect_pulses_slice(x, fs)?;
    let ctx = BeatContext::new(x, fs)?;
    Ok((1..pp.peak_indices.len().saturating_sub(1))
        .filter_map(|k| ctx.fiducials(&pp.peak_indices, k).ok())
        .filter_map(|fid| beat_features_from(&fid, x, fs).ok())
        .collect())
}

pub fn segment_features_slice(x: &[f64], fs: f64) -> Result<MorphFeatures> {
    aggregate_beats(&beat_rows(x, fs)?)
}

/// Segment-level morphology vector (median over valid beats). Expects a
/// preprocessed segment.
pub fn segment_features(seg: &Segment) -> Result<MorphFeatures> {
    segment_features_slice(&seg.samples, seg.fs)
}
