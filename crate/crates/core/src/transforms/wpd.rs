use crate::error::{Error, Result};
use crate::signal::Segment;

pub const WPD_LEVEL: usize = 3;

/// Daubechies-6 decomposition low-pass filter (12 taps, unit norm).
pub const DB6_DEC_LO: [f64; 12] = [
    -0.001_077_301_084_995_58,
    0.004_777_257_511_010_651,
    0.000_553_842_200_993_801_6,
    -0.031_582_039_318_031_156,
    0.027_522_865_530_016_29,
    0.097_501_605_587_079_36,
    -0.129_766_867_567_095_63,
    -0.226_264_693_965_169_13,
    0.315_250_351_709_243_2,
    0.751_133_908_021_577_5,
    0.494_623_890_398_385_4,
    0.111_540_743_350_080_17,
];

fn highpass(lo: &[f64]) -> Vec<f64> {
    let n = lo.len();
    (0..n)
        .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * lo[n - 1 - k])
        .collect()
}

/// One periodic analysis step: `out[k] = Σ_n f[n]·x[(2k + n) mod N]`.
fn analyze(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n / 2)
        .map(|k| f.iter().enumerate().map(|(i, fi)| fi * x[(2 * k + i) % n]).sum())
        .collect()
}

/// Adjoint of `analyze`, accumulated into `out`.
fn synthesize(c: &[f64], f: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (k, ck) in c.iter().enumerate() {
        for (i, fi) in f.iter().enumerate() {
            out[(2 * k + i) % n] += fi * ck;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPacketCoeffs {
    pub level: usize,
    /// `2^level` packets in breadth-first order (low branch first at each split).
    pub packets: Vec<Vec<f64>>,
    /// Length of the original input before zero padding.
    pub input_len: usize,
}

impl WaveletPacketCoeffs {
    pub fn flattened(&self) -> Vec<f64> {
        self.packets.concat()
    }

    pub fn energy(&self) -> f64 {
        self.packets.iter().flatten().map(|v| v * v).sum()
    }
}

/// Full packet tree to `level` with periodic extension. The input is
/// zero-padded to a multiple of `2^level`, which keeps the transform
/// orthonormal.
pub fn wpd_slice(x: &[f64], level: usize) -> Result<WaveletPacketCoeffs> {
    let lo = DB6_DEC_LO;
    let min_len = lo.len() << level;
    if x.len() < min_len {
        return Err(Error::InvalidInput(format!(
            "wavelet packet input needs at least {min_len} samples, got {}",
            x.len()
        )));
    }
    let hi = highpass(&lo);
    let block = 1usize << level;
    let mut padded = x.to_vec();
    padded.resize(x.len().div_ceil(block) * block, 0.0);

    let mut packets = vec![padded];
    for _ in 0..level {
        packets = packets
            .iter()
            .flat_map(|p| [analyze(p, &lo), analyze(p, &hi)])
            .collect();
    }
    Ok(WaveletPacketCoeffs { level, packets, input_len: x.len() })
}

pub fn wpd(seg: &Segment, level: usize) -> Result<WaveletPacketCoeffs> {
    wpd_slice(&seg.samples, level)
}

/// Inverse packet transform, truncated back to the original length.
pub fn iwpd(c: &WaveletPacketCoeffs) -> Vec<f64> {
    let lo = DB6_DEC_LO;
    let hi = highpass(&lo);
    let mut level = c.packets.clone();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let mut out = vec![0.0; pair[0].len() * 2];
                synthesize(&pair[0], &lo, &mut out);
                synthesize(&pair[1], &hi, &mut out);
                out
            })
            .collect();
    }
    let mut x = level.pop().unwrap_or_default();
    x.truncate(c.input_len);
    x
}
