use proptest::prelude::*;
use pulsebench::transforms::{causal_conv, iwpd, wpd_slice, CwtPlan, WAVELET_LEN, WPD_LEVEL};

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wpd_preserves_energy(x in signal(400..1300), level in 1usize..=WPD_LEVEL) {
        let c = wpd_slice(&x, level).unwrap();
        let (ex, ec) = (energy(&x), c.energy());
        prop_assert!((ex - ec).abs() <= 1e-6 * ex, "{ex} vs {ec}");
        let back = iwpd(&c);
        prop_assert_eq!(back.len(), x.len());
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn wpd_is_linear(
        (x, y) in (400usize..900).prop_flat_map(|n| (signal(n..n + 1), signal(n..n + 1))),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = wpd_slice(&mix, WPD_LEVEL).unwrap().flattened();
        let cx = wpd_slice(&x, WPD_LEVEL).unwrap().flattened();
        let cy = wpd_slice(&y, WPD_LEVEL).unwrap().flattened();
        let norm = energy(&lhs).sqrt().max(1e-12);
        let err = lhs
            .iter()
            .zip(cx.iter().zip(&cy))
            .map(|(l, (u, v))| (l - (a * u + b * v)).powi(2))
            .sum::<f64>()
            .sqrt();
        prop_assert!(err <= 1e-6 * norm);
    }

    #[test]
    fn causal_conv_is_linear_and_shift_commuting(
        x in signal(50..120),
        w in prop::collection::vec(-2.0..2.0f64, 1..9),
        dilation in 1usize..6,
        k in 1usize..20,
        a in -3.0..3.0f64,
    ) {
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + v).collect();
        let lhs = causal_conv(&mix, &w, dilation).unwrap();
        let cx = causal_conv(&x, &w, dilation).unwrap();
        let cy = causal_conv(&y, &w, dilation).unwrap();
        for (l, (u, v)) in lhs.iter().zip(cx.iter().zip(&cy)) {
            prop_assert!((l - (a * u + v)).abs() < 1e-9);
        }
        // delaying the input by k zeros delays the output by k
        let mut delayed = vec![0.0; k];
        delayed.extend_from_slice(&x);
        let cd = causal_conv(&delayed, &w, dilation).unwrap();
        prop_assert!(cd[..k].iter().all(|v| *v == 0.0));
        prop_assert_eq!(&cd[k..], &cx[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cwt_columns_follow_input_shift(
        content in prop::collection::vec(-1.0..1.0f64, 1024),
        k in 1usize..512,
    ) {
        let n = 4096;
        let plan = CwtPlan::new(32.0, n).unwrap();
        let mut x = vec![0.0; n];
        x[1024..2048].copy_from_slice(&content);
        let mut shifted = vec![0.0; n];
        shifted[1024 + k..2048 + k].copy_from_slice(&content);
        let s = plan.transform(&x).unwrap();
        let t = plan.transform(&shifted).unwrap();
        let peak = s.matrix.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        for (rs, rt) in s.matrix.iter().zip(&t.matrix) {
            for col in WAVELET_LEN..n - WAVELET_LEN - k {
                prop_assert!((rs[col] - rt[col + k]).abs() <= 1e-9 * peak);
            }
        }
    }
}
