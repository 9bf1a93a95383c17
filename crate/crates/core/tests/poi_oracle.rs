use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use poikit::poi::{
    cross_covariance, default_threshold_a, difference_transform, estimate_poi, extract_candidates, threshold_lambda, DeltaRule,
    DifferenceOrder, DifferenceTransform, PoiConfig,
};
use poikit::{FunctionalDataset, GridSpec};

mod common;
use common::brute_force;

fn dataset_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (3usize..12, 7usize..=30).prop_flat_map(|(n, p)| {
        (
            Just(n),
            Just(p),
            prop::collection::vec(-3.0f64..3.0, n * p),
            prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), -2.0f64..2.0], n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_brute_force((n, p, xs, ys) in dataset_strategy(), kfrac in 0.0f64..1.0, fourth in any::<bool>()) {
        let order = if fourth { DifferenceOrder::Fourth } else { DifferenceOrder::Second };
        let reach = if fourth { 2 } else { 1 };
        // largest admissible lag has 2 * reach * k < p - 1
        let kmax = (p - 2) / (2 * reach);
        prop_assume!(kmax >= 1);
        let k = 1 + ((kfrac * kmax as f64) as usize).min(kmax - 1);
        let grid = GridSpec::unit(p).unwrap();
        let x = DMatrix::from_row_slice(n, p, &xs);
        let data = FunctionalDataset::new(grid, x.clone(), DVector::from_vec(ys.clone())).unwrap();
        let cfg = PoiConfig {
            delta: DeltaRule::Explicit { k_delta: k },
            difference_order: order,
            center: false,
            ..PoiConfig::default()
        };
        let est = estimate_poi(&data, &cfg).unwrap();
        let bf = brute_force(&x, &ys, &grid, k, order, default_threshold_a());
        let idx: Vec<usize> = est.candidates.iter().map(|c| c.index).collect();
        let scores: Vec<f64> = est.candidates.iter().map(|c| c.score).collect();
        prop_assert_eq!(idx, bf.idx);
        prop_assert_eq!(scores, bf.scores);
        prop_assert_eq!(est.statistics, bf.stats);
        prop_assert_eq!(est.lambda, bf.lambda);
        prop_assert_eq!(est.s_hat, bf.s_hat);
    }

    #[test]
    fn output_invariants((n, p, xs, ys) in dataset_strategy(), k in 1usize..4) {
        let grid = GridSpec::unit(p).unwrap();
        prop_assume!(2 * k < p - 1);
        let data = FunctionalDataset::new(grid, DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys)).unwrap();
        let est = estimate_poi(&data, &PoiConfig::with_k_delta(k)).unwrap();
        let hw = est.delta.sqrt() / 2.0;
        for (i, a) in est.candidates.iter().enumerate() {
            for b in &est.candidates[i + 1..] {
                prop_assert!((a.location - b.location).abs() > hw);
            }
        }
        prop_assert!(est.candidates.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(est.s_hat <= est.candidates.len());
        prop_assert_eq!(est.f_xy.len(), p);
    }

    #[test]
    fn scale_equivariance((n, p, xs, ys) in dataset_strategy(), c in 0.1f64..10.0) {
        prop_assume!(p > 4);
        let grid = GridSpec::unit(p).unwrap();
        let x = DMatrix::from_row_slice(n, p, &xs);
        let y = DVector::from_vec(ys);
        let d1 = FunctionalDataset::new(grid, x.clone(), y.clone()).unwrap();
        let d2 = FunctionalDataset::new(grid, x, &y * c).unwrap();
        let cfg = PoiConfig::with_k_delta(1);
        let (e1, e2) = (estimate_poi(&d1, &cfg).unwrap(), estimate_poi(&d2, &cfg).unwrap());
        for (a, b) in e1.f_xy.iter().zip(&e2.f_xy) {
            prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + a.abs() * c));
        }
        for (a, b) in e1.statistics.iter().zip(&e2.statistics) {
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + a.abs() * c));
            }
        }
        // lambda carries sqrt of the fourth-moment factor: (c^4)^(1/4) = c
        prop_assert!((e2.lambda - c * e1.lambda).abs() <= 1e-9 * (1.0 + e1.lambda * c));
        // extraction order is invariant unless scores tie within rounding
        let gaps_ok = e1.f_zy.values.iter().enumerate().all(|(i, a)| {
            e1.f_zy.values[i + 1..].iter().all(|b| (a.abs() - b.abs()).abs() > 1e-9 * (1.0 + a.abs()))
        });
        if gaps_ok {
            let i1: Vec<usize> = e1.candidates.iter().map(|c| c.index).collect();
            let i2: Vec<usize> = e2.candidates.iter().map(|c| c.index).collect();
            prop_assert_eq!(i1, i2);
        }
    }

    #[test]
    fn annihilation(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0, c3 in -5.0f64..5.0, k in 1usize..5) {
        let g = GridSpec::unit(51).unwrap();
        let t = g.points();
        let affine: Vec<f64> = t.iter().map(|t| c0 + c1 * t).collect();
        let cubic: Vec<f64> = t.iter().map(|t| c0 + c1 * t + c2 * t * t + c3 * t * t * t).collect();
        let z2 = difference_transform(&affine, k, DifferenceOrder::Second).unwrap();
        let z4 = difference_transform(&cubic, k, DifferenceOrder::Fourth).unwrap();
        prop_assert!(z2.values.iter().all(|v| v.abs() < 1e-12));
        prop_assert!(z4.values.iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn centered_detector_matches_brute_force_on_centered_curves() {
    let grid = GridSpec::unit(25).unwrap();
    let x = DMatrix::from_fn(9, 25, |i, j| ((i * 31 + j * 17) % 13) as f64 * 0.3 - 1.0 + (j as f64 * 0.2).sin());
    let y: Vec<f64> = (0..9).map(|i| (i % 2) as f64).collect();
    let mut xc = x.clone();
    for j in 0..25 {
        let mut m = 0.0;
        for i in 0..9 {
            m += x[(i, j)];
        }
        m /= 9.0;
        for i in 0..9 {
            xc[(i, j)] = x[(i, j)] - m;
        }
    }
    let data = FunctionalDataset::new(grid, x, DVector::from_vec(y.clone())).unwrap();
    let est = estimate_poi(&data, &PoiConfig::with_k_delta(3)).unwrap();
    let bf = brute_force(&xc, &y, &grid, 3, DifferenceOrder::Second, default_threshold_a());
    assert_eq!(est.candidates.iter().map(|c| c.index).collect::<Vec<_>>(), bf.idx);
    for (a, b) in est.statistics.iter().zip(&bf.stats) {
        assert_relative_eq!(a.unwrap(), b.unwrap(), max_relative = 1e-12);
    }
    assert_eq!(est.s_hat, bf.s_hat);
}

#[test]
fn three_by_four_cross_moment() {
    let x = DMatrix::from_row_slice(3, 4, &[0.5, -1.2, 2.0, 0.3, 1.5, 0.7, -0.4, 2.2, -0.9, 0.1, 1.1, -1.7]);
    let y = [0.3, -1.1, 2.4];
    let d = FunctionalDataset::new(GridSpec::unit(4).unwrap(), x.clone(), DVector::from_column_slice(&y)).unwrap();
    let f = cross_covariance(&d);
    for (j, fj) in f.iter().enumerate() {
        let mut s = 0.0;
        for (i, yi) in y.iter().enumerate() {
            s += x[(i, j)] * yi;
        }
        assert_eq!(*fj, s / 3.0);
    }
}

#[test]
fn kink_hand_value() {
    let g = GridSpec::unit(101).unwrap();
    let f: Vec<f64> = g.points().iter().map(|t| (t - 0.5).abs()).collect();
    let z = difference_transform(&f, 10, DifferenceOrder::Second).unwrap();
    assert_relative_eq!(z.at(50).unwrap(), -0.1, epsilon = 1e-14);
}

#[test]
fn two_kinks_extracted_larger_first() {
    let g = GridSpec::unit(201).unwrap();
    let f: Vec<f64> = g
        .points()
        .iter()
        .map(|t| -0.5 * (t - 0.3).abs() - 0.3 * (t - 0.75).abs())
        .collect();
    let k = 4;
    let z = difference_transform(&f, k, DifferenceOrder::Second).unwrap();
    let delta = k as f64 * g.step();
    let c = extract_candidates(&z, &g, delta, Some(2));
    assert_eq!(c[0].index, 60);
    assert_eq!(c[1].index, 150);
    assert!(c[0].score > c[1].score);
}

#[test]
fn lambda_hand_value() {
    let g = GridSpec::unit(10).unwrap();
    let y: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
    let d = FunctionalDataset::new(g, DMatrix::zeros(100, 10), DVector::from_vec(y)).unwrap();
    let lam = threshold_lambda(&d, 0.15, default_threshold_a()).unwrap();
    // sqrt(2 sqrt 3) * (sqrt(0.5) ln(1/0.15) / 100)^(1/2)
    assert_relative_eq!(lam, 0.2156, epsilon = 5e-5);
}

#[test]
fn constant_response_gives_nothing_on_centered_curves() {
    let data = {
        let grid = GridSpec::unit(100).unwrap();
        let spec = poikit::sim::Dgp::Dgp2.process();
        let x = poikit::sim::sample_process(&spec, &grid, 2000, 5, poikit::sim::SamplingMethod::Auto).unwrap();
        FunctionalDataset::new(grid, x, DVector::from_element(2000, 3.0)).unwrap()
    };
    let est = estimate_poi(&data, &PoiConfig::with_c_delta(1.5)).unwrap();
    assert_eq!(est.s_hat, 0);
    assert!(est.statistics.iter().flatten().all(|s| s.abs() < 1e-10));

    // uncentered, f_ZY is c times the mean second difference of the curves
    let raw = estimate_poi(
        &data,
        &PoiConfig {
            center: false,
            ..PoiConfig::with_k_delta(3)
        },
    )
    .unwrap();
    let mean_curve: Vec<f64> = (0..100).map(|j| data.x.column(j).mean()).collect();
    let dz = difference_transform(&mean_curve, 3, DifferenceOrder::Second).unwrap();
    for (a, b) in raw.f_zy.values.iter().zip(&dz.values) {
        assert_relative_eq!(*a, 3.0 * b, epsilon = 1e-12);
    }
}

#[test]
fn transform_indexing() {
    let t = DifferenceTransform {
        first_index: 3,
        values: vec![1.0, 2.0],
    };
    assert_eq!(t.at(2), None);
    assert_eq!(t.at(4), Some(2.0));
    assert_eq!(t.indices(), 3..5);
}
