use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::persist::b64_vec;
use crate::error::{Error, Result};

pub const MINIROCKET_KERNELS: usize = 84;
pub const MINIROCKET_FEATURES: usize = 9996;
const KERNEL_LEN: usize = 9;
const MAX_DILATIONS: usize = 32;

/// Positions of the three weight-2 taps for each of the 84 kernels, in
/// lexicographic order. The remaining six taps are −1.
pub fn minirocket_kernels() -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(MINIROCKET_KERNELS);
    for a in 0..KERNEL_LEN {
        for b in a + 1..KERNEL_LEN {
            for c in b + 1..KERNEL_LEN {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Dilations `floor(2^(j·e/(D−1)))` with duplicates merged, and the number
/// of features each dilation gets per kernel.
fn fit_dilations(len: usize) -> (Vec<usize>, Vec<usize>) {
    let per_kernel = MINIROCKET_FEATURES / MINIROCKET_KERNELS;
    let d = per_kernel.min(MAX_DILATIONS);
    let multiplier = per_kernel as f64 / d as f64;
    let max_exp = ((len - 1) as f64 / (KERNEL_LEN - 1) as f64).log2();
    let mut dilations: Vec<usize> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for j in 0..d {
        let v = 2f64.powf(j as f64 * max_exp / (d - 1) as f64).floor() as usize;
        match dilations.last() {
            Some(&last) if last == v => *counts.last_mut().expect("non-empty") += 1,
            _ => {
                dilations.push(v);
                counts.push(1);
            }
        }
    }
    let mut per: Vec<usize> = counts.iter().map(|c| (*c as f64 * multiplier) as usize).collect();
    let mut remainder = per_kernel - per.iter().sum::<usize>();
    let mut i = 0;
    while remainder > 0 {
        per[i] += 1;
        remainder -= 1;
        i = (i + 1) % per.len();
    }
    (dilations, per)
}

fn golden_quantiles(n: usize) -> Vec<f64> {
    let phi = (5f64.sqrt() + 1.0) / 2.0;
    (1..=n).map(|k| (k as f64 * phi).fract()).collect()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Valid convolutions of every kernel at one dilation; returns 84 rows of
/// length `len − 8d`.
fn convolve_all(x: &[f64], dilation: usize, kernels: &[[usize; 3]]) -> Vec<Vec<f64>> {
    let out_len = x.len() - (KERNEL_LEN - 1) * dilation;
    let taps: Vec<&[f64]> = (0..KERNEL_LEN).map(|j| &x[j * dilation..j * dilation + out_len]).collect();
    let base: Vec<f64> = (0..out_len).map(|t| -taps.iter().map(|s| s[t]).sum::<f64>()).collect();
    kernels
        .iter()
        .map(|&[a, b, c]| {
            (0..out_len)
                .map(|t| base[t] + 3.0 * (taps[a][t] + taps[b][t] + taps[c][t]))
                .collect()
        })
        .collect()
}

/// MiniRocket transform: 84 fixed kernels, fitted dilations and biases,
/// proportion-of-positive-values pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniRocket {
    pub input_len: usize,
    pub dilations: Vec<usize>,
    pub features_per_dilation: Vec<usize>,
    #[serde(with = "b64_vec")]
    biases: Vec<f64>,
}

impl MiniRocket {
    pub fn fit(series: &[Vec<f64>], seed: u64) -> Result<Self> {
        let len = series.first().map_or(0, Vec::len);
        if len < KERNEL_LEN {
            return Err(Error::InvalidInput(format!("series length {len} is shorter than {KERNEL_LEN}")));
        }
        check_series(series, len)?;
        let (dilations, per) = fit_dilations(len);
        let kernels = minirocket_kernels();
        let quantiles = golden_quantiles(MINIROCKET_FEATURES);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut biases = Vec::with_capacity(MINIROCKET_FEATURES);
        for (&d, &nf) in dilations.iter().zip(&per) {
            for k in 0..MINIROCKET_KERNELS {
                let example = &series[rng.random_range(0..series.len())];
                let mut c = convolve_all(example, d, &kernels[k..=k]).pop().expect("one kernel");
                c.sort_by(f64::total_cmp);
                let start = biases.len();
                biases.extend(quantiles[start..start + nf].iter().map(|q| quantile(&c, *q)));
            }
        }
        debug_assert_eq!(biases.len(), MINIROCKET_FEATURES);
        Ok(Self { input_len: len, dilations, features_per_dilation: per, biases })
    }

    pub fn n_features(&self) -> usize {
        self.biases.len()
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn transform_one(&self, x: &[f64], kernels: &[[usize; 3]]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.biases.len());
        for (&d, &nf) in self.dilations.iter().zip(&self.features_per_dilation) {
            for conv in convolve_all(x, d, kernels) {
                let n = conv.len() as f64;
                let start = out.len();
                for b in &self.biases[start..start + nf] {
                    out.push(conv.iter().filter(|v| **v > *b).count() as f64 / n);
                }
            }
        }
        out
    }

    /// PPV features of each series, computed in parallel.
    pub fn transform(&self, series: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_series(series, self.input_len)?;
        let kernels = minirocket_kernels();
        Ok(series.par_iter().map(|x| self.transform_one(x, &kernels)).collect())
    }
}

fn check_series(series: &[Vec<f64>], len: usize) -> Result<()> {
    if series.is_empty() {
        return Err(Error::InvalidInput("no series".into()));
    }
    for (i, s) in series.iter().enumerate() {
        if s.len() != len {
            return Err(Error::InvalidInput(format!("series {i} has length {}, expected {len}", s.len())));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("series {i} contains non-finite values")));
        }
    }
    Ok(())
}
