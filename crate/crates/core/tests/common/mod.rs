//! Independent reference implementations shared by the oracle suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use poikit::nw::KernelKind;
use poikit::poi::DifferenceOrder;
use poikit::GridSpec;

/// Straight loops over the definitions; shares no code with the library
/// beyond the grid points.
pub struct Brute {
    pub idx: Vec<usize>,
    pub scores: Vec<f64>,
    pub stats: Vec<Option<f64>>,
    pub s_hat: usize,
    pub lambda: f64,
}

pub fn brute_force(x: &DMatrix<f64>, y: &[f64], grid: &GridSpec, k: usize, order: DifferenceOrder, a_const: f64) -> Brute {
    let (n, p) = x.shape();
    let mut fxy = vec![0.0; p];
    for (j, f) in fxy.iter_mut().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            s += x[(i, j)] * y[i];
        }
        *f = s / n as f64;
    }
    let reach = match order {
        DifferenceOrder::Second => k,
        DifferenceOrder::Fourth => 2 * k,
    };
    let diff = |v: &dyn Fn(usize) -> f64, j: usize| match order {
        DifferenceOrder::Second => v(j) - 0.5 * (v(j - k) + v(j + k)),
        DifferenceOrder::Fourth => v(j) - 2.0 / 3.0 * (v(j - k) + v(j + k)) + 1.0 / 6.0 * (v(j - 2 * k) + v(j + 2 * k)),
    };
    let interior: Vec<usize> = (reach..p - reach).collect();
    let fzy: Vec<f64> = interior.iter().map(|&j| diff(&|jj| fxy[jj], j)).collect();

    let delta = k as f64 * grid.step();
    let hw = delta.sqrt() / 2.0;
    let mut idx: Vec<usize> = Vec::new();
    let mut scores = Vec::new();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (m, &j) in interior.iter().enumerate() {
            let excluded = idx.iter().any(|&c| (grid.point(j) - grid.point(c)).abs() <= hw);
            if excluded {
                continue;
            }
            let v = fzy[m].abs();
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((j, v)),
            }
        }
        match best {
            Some((j, v)) => {
                idx.push(j);
                scores.push(v);
            }
            None => break,
        }
    }

    let mut m4 = 0.0;
    for &v in y {
        m4 += v.powi(4);
    }
    m4 /= n as f64;
    let lambda = a_const * (m4.sqrt() * (grid.width() / delta).ln() / n as f64).sqrt();

    let stats: Vec<Option<f64>> = idx
        .iter()
        .map(|&j| {
            let z: Vec<f64> = (0..n).map(|i| diff(&|jj| x[(i, jj)], j)).collect();
            let mut zy = 0.0;
            let mut zz = 0.0;
            for i in 0..n {
                zy += z[i] * y[i];
                zz += z[i] * z[i];
            }
            (zz != 0.0).then(|| (zy / n as f64) / (zz / n as f64).sqrt())
        })
        .collect();
    let mut s_hat = 0;
    while s_hat < stats.len() && stats[s_hat].is_some_and(|s| s.abs() >= lambda) {
        s_hat += 1;
    }
    Brute {
        idx,
        scores,
        stats,
        s_hat,
        lambda,
    }
}

pub fn loglik(design: &DMatrix<f64>, y: &DVector<f64>, b: &[f64]) -> f64 {
    // plain Bernoulli log-likelihood, written out
    (0..y.len())
        .map(|i| {
            let eta: f64 = (0..b.len()).map(|c| design[(i, c)] * b[c]).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln()
        })
        .sum()
}


/// Zooming grid search: 21^3 points around the incumbent, shrinking the box.
pub fn grid_search_mle(design: &DMatrix<f64>, y: &DVector<f64>) -> [f64; 3] {
    let mut center = [0.0; 3];
    let mut half = 8.0;
    for _ in 0..14 {
        let mut best = (f64::NEG_INFINITY, center);
        for a in 0..21 {
            for b in 0..21 {
                for c in 0..21 {
                    let cand = [
                        center[0] + half * (a as f64 / 10.0 - 1.0),
                        center[1] + half * (b as f64 / 10.0 - 1.0),
                        center[2] + half * (c as f64 / 10.0 - 1.0),
                    ];
                    let v = loglik(design, y, &cand);
                    if v > best.0 {
                        best = (v, cand);
                    }
                }
            }
        }
        center = best.1;
        half *= 0.4;
    }
    center
}

/// Double loop over observations and coordinates.
pub fn naive(anchors: &[Vec<f64>], y: &[f64], h: &[f64], kernel: KernelKind, q: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, a) in anchors.iter().enumerate() {
        let w = match kernel {
            KernelKind::GaussianProduct => {
                let mut ss = 0.0;
                for r in 0..q.len() {
                    let u = (a[r] - q[r]) / h[r];
                    ss += u * u;
                }
                (-0.5 * ss).exp()
            }
            KernelKind::EpanechnikovProduct => {
                let mut w = 1.0;
                for r in 0..q.len() {
                    let u = (a[r] - q[r]) / h[r];
                    w *= 0.75 * (1.0 - u * u).max(0.0);
                }
                w
            }
        };
        num += w * y[i];
        den += w;
    }
    (den > 0.0).then(|| num / den)
}
