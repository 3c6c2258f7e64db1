//! Rhythm-irregularity features of a PP-interval series, used for atrial
//! fibrillation detection.

use crate::error::{Error, Result};
use crate::pulse::{detect_pulses_slice, PPSeries};
use crate::signal::Segment;

pub const IRREGULARITY_FEATURE_NAMES: [&str; 7] =
    ["TPR", "CV", "MSBID", "RMSSD", "ShE", "SampEn", "PPD"];

pub const SHANNON_BINS: usize = 16;
pub const SAMPEN_M: usize = 2;
pub const SAMPEN_R_FACTOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrregularityVector {
    pub values: [f64; 7],
    /// Sample entropy hit its upper cap (no matching templates of length m+1).
    pub sampen_capped: bool,
}

impl IrregularityVector {
    pub const NAMES: [&'static str; 7] = IRREGULARITY_FEATURE_NAMES;

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEntropy {
    pub value: f64,
    pub capped: bool,
}

fn need(pp: &PPSeries, n: usize) -> Result<&[f64]> {
    if pp.intervals.len() < n {
        return Err(Error::InsufficientData { needed: n, got: pp.intervals.len() });
    }
    Ok(&pp.intervals)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn pop_std(x: &[f64]) -> f64 {
    if x.iter().all(|v| *v == x[0]) {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn diffs(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn turning_point_ratio(pp: &PPSeries) -> Result<f64> {
    let x = need(pp, 3)?;
    let turns = x
        .windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .count();
    Ok(turns as f64 / (x.len() - 2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variability {
    pub cv: f64,
    pub msbid: f64,
    pub rmssd: f64,
}

pub fn variability_features(pp: &PPSeries) -> Result<Variability> {
    let x = need(pp, 2)?;
    let m = mean(x);
    if !(m > 0.0) {
        return Err(Error::InvalidInput(format!("mean interval {m} must be positive")));
    }
    let d = diffs(x);
    Ok(Variability {
        cv: pop_std(x) / m,
        msbid: d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64 / m,
        rmssd: (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt(),
    })
}

pub fn shannon_entropy(pp: &PPSeries, bins: usize) -> Result<f64> {
    let x = need(pp, 2)?;
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be positive".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    for &v in x {
        let k = ((v - lo) / (hi - lo) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let n = x.len() as f64;
    Ok(-counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>())
}

fn matching_pairs(x: &[f64], len: usize, count: usize, r: f64) -> u64 {
    let mut total = 0;
    for i in 0..count {
        for j in i + 1..count {
            if (0..len).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                total += 1;
            }
        }
    }
    total
}

/// Sample entropy with tolerance `r_factor`·(population std). Both template
/// lengths use the same N−m starting positions.
pub fn sample_entropy(pp: &PPSeries, m: usize, r_factor: f64) -> Result<SampleEntropy> {
    let x = need(pp, m + 2)?;
    let sd = pop_std(x);
    if sd == 0.0 {
        return Ok(SampleEntropy { value: 0.0, capped: false });
    }
    let r = r_factor * sd;
    let count = x.len() - m;
    let b = matching_pairs(x, m, count, r);
    let a = matching_pairs(x, m + 1, count, r);
    if a == 0 || b == 0 {
        let pairs = (count * (count - 1) / 2) as f64;
        return Ok(SampleEntropy { value: pairs.ln(), capped: true });
    }
    Ok(SampleEntropy { value: (b as f64 / a as f64).ln(), capped: false })
}

/// SD1 of the Poincaré plot.
pub fn poincare_dispersion(pp: &PPSeries) -> Result<f64> {
    let x = need(pp, 3)?;
    Ok(pop_std(&diffs(x)) / std::f64::consts::SQRT_2)
}

pub fn irregularity_vector(pp: &PPSeries) -> Result<IrregularityVector> {
    need(pp, SAMPEN_M + 2)?;
    let v = variability_features(pp)?;
    let se = sample_entropy(pp, SAMPEN_M, SAMPEN_R_FACTOR)?;
    Ok(IrregularityVector {
        values: [
            turning_point_ratio(pp)?,
            v.cv,
            v.msbid,
            v.rmssd,
            shannon_entropy(pp, SHANNON_BINS)?,
            se.value,
            poincare_dispersion(pp)?,
        ],
        sampen_capped: se.capped,
    })
}

pub fn irregularity_from_slice(x: &[f64], fs: f64) -> Result<IrregularityVector> {
    irregularity_vector(&detect_pulses_slice(x, fs)?)
}

/// Detect pulses on a preprocessed segment and compute the vector.
pub fn segment_irregularity(seg: &Segment) -> Result<IrregularityVector> {
    irregularity_from_slice(&seg.samples, seg.fs)
}
