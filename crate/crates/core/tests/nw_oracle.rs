use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::naive;

use poikit::nw::{bandwidth_rate_exponent, fit_nw, fit_nw_at_indices, mase, BandwidthRule, KernelConfig, KernelKind};
use poikit::{FunctionalDataset, GridSpec};

fn explicit(kernel: KernelKind, h: Vec<f64>) -> KernelConfig {
    KernelConfig {
        kernel,
        bandwidths: BandwidthRule::Explicit { h },
    }
}

#[test]
fn five_point_hand_average() {
    let grid = GridSpec::unit(3).unwrap();
    let x = DMatrix::from_row_slice(5, 3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.5, 0.0]);
    let y = [1.0, 2.0, 4.0, 0.0, 3.0];
    let data = FunctionalDataset::new(grid, x, DVector::from_column_slice(&y)).unwrap();
    let fit = fit_nw(&data, &[0.5], &explicit(KernelKind::GaussianProduct, vec![1.0])).unwrap();
    let w: Vec<f64> = [0.0f64, 1.0, 2.0, -1.0, 0.5].iter().map(|a| (-0.5 * a * a).exp()).collect();
    let hand = (w[0] * 1.0 + w[1] * 2.0 + w[2] * 4.0 + w[3] * 0.0 + w[4] * 3.0) / w.iter().sum::<f64>();
    assert_relative_eq!(fit.predict(&[0.0]).unwrap(), hand, epsilon = 1e-10);
}

#[test]
fn rate_exponent_for_two_points() {
    assert_eq!(bandwidth_rate_exponent(2), -1.0 / 6.0);
}

#[test]
fn rate_rule_bandwidth_formula() {
    let grid = GridSpec::unit(4).unwrap();
    let x = DMatrix::from_fn(100, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.2 - 1.0);
    let y = DVector::from_fn(100, |i, _| (i % 2) as f64);
    let data = FunctionalDataset::new(grid, x.clone(), y).unwrap();
    let cfg = KernelConfig {
        kernel: KernelKind::GaussianProduct,
        bandwidths: BandwidthRule::RateRule { c_h: 0.8 },
    };
    let fit = fit_nw_at_indices(&data, &[1, 3], &cfg).unwrap();
    for (r, &j) in [1usize, 3].iter().enumerate() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let m = col.iter().sum::<f64>() / 100.0;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert_relative_eq!(fit.bandwidths[r], 0.8 * sd * 100f64.powf(-1.0 / 6.0), max_relative = 1e-12);
    }
}

#[test]
fn mase_is_mean_of_replication_ase() {
    let p = vec![vec![1.0, 2.0], vec![0.0, 0.0, 0.0]];
    let t = vec![vec![1.5, 2.0], vec![1.0, 0.0, -1.0]];
    assert_relative_eq!(mase(&p, &t).unwrap(), (0.125 + 2.0 / 3.0) / 2.0, epsilon = 1e-15);
}

fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, bool)> {
    (2usize..=20, 1usize..=3).prop_flat_map(|(n, s)| {
        (
            Just(n),
            Just(s),
            prop::collection::vec(-3.0f64..3.0, n * s),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(0.2f64..3.0, s),
            prop::collection::vec(-3.0f64..3.0, s),
            any::<bool>(),
        )
    })
}

fn build(n: usize, s: usize, xs: &[f64], ys: &[f64]) -> (FunctionalDataset, Vec<Vec<f64>>) {
    let grid = GridSpec::unit(s + 2).unwrap();
    let x = DMatrix::from_fn(n, s + 2, |i, j| if j < s { xs[i * s + j] } else { 0.0 });
    let anchors = (0..n).map(|i| xs[i * s..(i + 1) * s].to_vec()).collect();
    (FunctionalDataset::new(grid, x, DVector::from_column_slice(ys)).unwrap(), anchors)
}

proptest! {
    #[test]
    fn matches_loop_evaluator((n, s, xs, ys, h, q, epan) in instance()) {
        let kernel = if epan { KernelKind::EpanechnikovProduct } else { KernelKind::GaussianProduct };
        let (data, anchors) = build(n, s, &xs, &ys);
        let idx: Vec<usize> = (0..s).collect();
        let fit = fit_nw_at_indices(&data, &idx, &explicit(kernel, h.clone())).unwrap();
        if let Some(v) = naive(&anchors, &ys, &h, kernel, &q) {
            prop_assert_eq!(fit.predict(&q).unwrap(), v);
        }
        for (i, a) in anchors.iter().enumerate() {
            prop_assert_eq!(fit.fitted()[i], naive(&anchors, &ys, &h, kernel, a).unwrap());
        }
    }

    #[test]
    fn predictions_within_response_range((n, s, xs, ys, h, q, epan) in instance()) {
        let kernel = if epan { KernelKind::EpanechnikovProduct } else { KernelKind::GaussianProduct };
        let (data, _) = build(n, s, &xs, &ys);
        let idx: Vec<usize> = (0..s).collect();
        let fit = fit_nw_at_indices(&data, &idx, &explicit(kernel, h)).unwrap();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = fit.predict(&q).unwrap();
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn permutation_invariance((n, s, xs, ys, h, q, _e) in instance(), rot in 0usize..20) {
        let (data, _) = build(n, s, &xs, &ys);
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let xs2: Vec<f64> = perm.iter().flat_map(|&i| xs[i * s..(i + 1) * s].to_vec()).collect();
        let ys2: Vec<f64> = perm.iter().map(|&i| ys[i]).collect();
        let (data2, _) = build(n, s, &xs2, &ys2);
        let idx: Vec<usize> = (0..s).collect();
        let cfg = explicit(KernelKind::GaussianProduct, h);
        let a = fit_nw_at_indices(&data, &idx, &cfg).unwrap().predict(&q).unwrap();
        let b = fit_nw_at_indices(&data2, &idx, &cfg).unwrap().predict(&q).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn huge_bandwidth_gives_the_mean((n, s, xs, ys, _h, _q, _e) in instance()) {
        let (data, anchors) = build(n, s, &xs, &ys);
        let idx: Vec<usize> = (0..s).collect();
        let fit = fit_nw_at_indices(&data, &idx, &explicit(KernelKind::GaussianProduct, vec![1e6; s])).unwrap();
        let mean_q: Vec<f64> = (0..s).map(|r| anchors.iter().map(|a| a[r]).sum::<f64>() / n as f64).collect();
        let ybar = ys.iter().sum::<f64>() / n as f64;
        prop_assert!((fit.predict(&mean_q).unwrap() - ybar).abs() < 1e-6);
    }
}

#[test]
fn stranded_query_falls_back_to_nearest_anchor() {
    let (data, _) = build(3, 1, &[0.0, 1.0, 5.0], &[1.0, 2.0, 3.0]);
    let fit = fit_nw_at_indices(&data, &[0], &explicit(KernelKind::EpanechnikovProduct, vec![0.1])).unwrap();
    assert_eq!(fit.predict(&[4.0]).unwrap(), 3.0);
    assert_eq!(fit.predict(&[0.6]).unwrap(), 2.0);
}
