//! Peak-and-end comparator designs.

use nalgebra::DMatrix;

use crate::data::FunctionalDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct PerDesigns {
    /// `[X_i(p_abs), X_i(t_p)]`
    pub per1: DMatrix<f64>,
    /// `[X_i(p_pos), X_i(p_neg), X_i(t_p)]`
    pub per2: DMatrix<f64>,
    pub peak_abs: Vec<usize>,
    pub peak_pos: Vec<usize>,
    pub peak_neg: Vec<usize>,
}

// first index attaining the maximum
fn first_argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, v) in values.enumerate() {
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

pub fn per_models(data: &FunctionalDataset) -> PerDesigns {
    let (n, p) = (data.n(), data.p());
    let row = |i: usize| (0..p).map(move |j| data.x[(i, j)]);
    let peak_abs: Vec<usize> = (0..n).map(|i| first_argmax(row(i).map(f64::abs))).collect();
    let peak_pos: Vec<usize> = (0..n).map(|i| first_argmax(row(i))).collect();
    let peak_neg: Vec<usize> = (0..n).map(|i| first_argmax(row(i).map(|v| -v))).collect();
    let end = p - 1;
    let per1 = DMatrix::from_fn(n, 2, |i, c| match c {
        0 => data.x[(i, peak_abs[i])],
        _ => data.x[(i, end)],
    });
    let per2 = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => data.x[(i, peak_pos[i])],
        1 => data.x[(i, peak_neg[i])],
        _ => data.x[(i, end)],
    });
    PerDesigns {
        per1,
        per2,
        peak_abs,
        peak_pos,
        peak_neg,
    }
}
