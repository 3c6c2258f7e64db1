//! Wavelet packet decomposition, continuous wavelet scalograms and the
//! causal dilated convolution primitive.

mod cwt;
mod image;
mod wpd;

pub use cwt::{cwt_features, cwt_scalogram, CwtPlan, Scalogram, CWT_SCALES, MORSE_BETA, MORSE_GAMMA, WAVELET_LEN};
pub use image::{resize_bilinear, scalogram_to_image, RgbImage, IMAGE_SIZE};
pub use wpd::{iwpd, wpd, wpd_slice, WaveletPacketCoeffs, DB6_DEC_LO, WPD_LEVEL};

/// `y[t] = Σ_i w[i]·x[t − d·i]` with zeros before the start of `x`.
pub fn causal_conv(x: &[f64], w: &[f64], dilation: usize) -> crate::Result<Vec<f64>> {
    if w.is_empty() || dilation == 0 {
        return Err(crate::Error::InvalidInput(
            "kernel must be non-empty and dilation at least 1".into(),
        ));
    }
    Ok((0..x.len())
        .map(|t| {
            w.iter()
                .enumerate()
                .take_while(|(i, _)| i * dilation <= t)
                .map(|(i, wi)| wi * x[t - i * dilation])
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        for d in 1..4 {
            assert_eq!(causal_conv(&x, &[1.0], d).unwrap(), x);
        }
    }

    #[test]
    fn dilated_impulse_response() {
        let mut x = vec![0.0; 20];
        x[5] = 1.0;
        let y = causal_conv(&x, &[2.0, -1.0, 0.5], 2).unwrap();
        for (t, v) in y.iter().enumerate() {
            let want = match t {
                5 => 2.0,
                7 => -1.0,
                9 => 0.5,
                _ => 0.0,
            };
            assert_eq!(*v, want, "t={t}");
        }
    }

    #[test]
    fn future_samples_do_not_leak() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64).cos()).collect();
        let w = [0.3, -0.2, 0.9, 0.1];
        let base = causal_conv(&x, &w, 3).unwrap();
        let mut x2 = x.clone();
        x2[15] += 10.0;
        let pert = causal_conv(&x2, &w, 3).unwrap();
        assert_eq!(base[..15], pert[..15]);
        assert_ne!(base[15], pert[15]);
        assert!(causal_conv(&x, &[], 1).is_err());
        assert!(causal_conv(&x, &w, 0).is_err());
    }
}
