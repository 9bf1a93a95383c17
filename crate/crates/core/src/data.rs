//! Equidistant grids, functional datasets and their CSV representation.
//!
//! Curves are stored wide: one row per subject, columns `t_1..t_p`, with a
//! header row. Responses are a single `y` column. Numbers are written with
//! 17 significant digits so files round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PoiError, Result};

/// `p` equidistant points on `[a, b]`, with `t_1 = a` and `t_p = b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub p: usize,
}

impl GridSpec {
    pub fn new(a: f64, b: f64, p: usize) -> Result<Self> {
        let grid = GridSpec { a, b, p };
        grid.validate()?;
        Ok(grid)
    }

    pub fn unit(p: usize) -> Result<Self> {
        Self::new(0.0, 1.0, p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) || self.a >= self.b {
            return Err(PoiError::InvalidGrid(format!(
                "need finite a < b, got [{}, {}]",
                self.a, self.b
            )));
        }
        if self.p < 3 {
            return Err(PoiError::InvalidGrid(format!("need p >= 3, got {}", self.p)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.p - 1) as f64
    }

    /// Grid point at 0-based index `j`.
    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.p {
            return self.b;
        }
        self.a + j as f64 * (self.b - self.a) / (self.p - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.p).map(|j| self.point(j)).collect()
    }

    /// Index of the grid point nearest to `t`; exact ties go to the smaller index.
    pub fn nearest_index(&self, t: f64) -> usize {
        let x = (t - self.a) / self.step();
        if x <= 0.0 {
            return 0;
        }
        let lo = (x.floor() as usize).min(self.p - 1);
        let hi = (lo + 1).min(self.p - 1);
        let d_lo = (t - self.point(lo)).abs();
        let d_hi = (self.point(hi) - t).abs();
        // A half-step tie in exact arithmetic can land either way in floating point.
        let tie_tol = 1e-9 * self.step();
        if d_lo <= d_hi + tie_tol {
            lo
        } else {
            hi
        }
    }

    /// `t` snapped onto the grid.
    pub fn snap(&self, t: f64) -> f64 {
        self.point(self.nearest_index(t))
    }
}

/// `n` curves observed on a shared grid together with scalar responses.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    pub grid: GridSpec,
    /// `n x p`, one curve per row.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl FunctionalDataset {
    pub fn new(grid: GridSpec, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        grid.validate()?;
        if x.nrows() == 0 {
            return Err(PoiError::InvalidData("dataset has no curves".into()));
        }
        if x.ncols() != grid.p {
            return Err(PoiError::DimensionMismatch(format!(
                "curves have {} columns but the grid has {} points",
                x.ncols(),
                grid.p
            )));
        }
        if y.len() != x.nrows() {
            return Err(PoiError::DimensionMismatch(format!(
                "{} curves but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if let Some((i, j)) = first_non_finite(&x) {
            return Err(PoiError::InvalidData(format!(
                "curve {} has a non-finite value at grid index {}",
                i + 1,
                j + 1
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(PoiError::InvalidData(format!("response {} is not finite", i + 1)));
        }
        Ok(FunctionalDataset { grid, x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Subtract the pointwise sample mean from every curve.
    pub fn centered(&self) -> Self {
        let mut x = self.x.clone();
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        FunctionalDataset {
            grid: self.grid,
            x,
            y: self.y.clone(),
        }
    }

    /// Pointwise centering and scaling to unit sample variance.
    /// Grid points with zero spread are only centered.
    pub fn standardized(&self) -> Self {
        let mut out = self.centered();
        let n = self.n();
        if n < 2 {
            return out;
        }
        for mut col in out.x.column_iter_mut() {
            let ss: f64 = col.iter().map(|v| v * v).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                col.scale_mut(1.0 / sd);
            }
        }
        out
    }

    /// Columns of `x` at the given grid indices, as an `n x k` matrix.
    pub fn columns_at(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), indices.len(), |i, k| self.x[(i, indices[k])])
    }
}

fn first_non_finite(x: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if !x[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// 17 significant digits; round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curves_csv(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| PoiError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (1..=x.ncols()).map(|j| format!("t_{j}")).collect();
    let io = |e| PoiError::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in x.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_responses_csv(path: &Path, y: &DVector<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| PoiError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| PoiError::io(path, e);
    writeln!(w, "y").map_err(io)?;
    for &v in y.iter() {
        writeln!(w, "{}", fmt_f64(v)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Parse a header-led numeric CSV. Rows and columns in errors are 1-based,
/// counting the header as row 1.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(PoiError::Parse {
            path: path.to_owned(),
            row: 1,
            column: 1,
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row_no = r + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != header.len() {
            return Err(PoiError::Parse {
                path: path.to_owned(),
                row: row_no,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut values = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| PoiError::Parse {
                path: path.to_owned(),
                row: row_no,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(PoiError::Parse {
                    path: path.to_owned(),
                    row: row_no,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows.push(values);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> PoiError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PoiError::io(path, io),
        other => PoiError::Parse {
            path: path.to_owned(),
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn read_curves_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (header, rows) = read_numeric_csv(path)?;
    if rows.is_empty() {
        return Err(PoiError::InvalidData(format!("{}: no curves", path.display())));
    }
    let p = header.len();
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub fn read_responses_csv(path: &Path) -> Result<DVector<f64>> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() != 1 {
        return Err(PoiError::Parse {
            path: path.to_owned(),
            row: 1,
            column: 2,
            message: format!("responses file must have one column, found {}", header.len()),
        });
    }
    Ok(DVector::from_iterator(rows.len(), rows.into_iter().map(|r| r[0])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let g = GridSpec::new(0.3, 1.7, 15).unwrap();
        assert_eq!(g.point(0), 0.3);
        assert_eq!(g.point(14), 1.7);
        assert!((g.point(7) - (0.3 + 7.0 * 1.4 / 14.0)).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(GridSpec::new(1.0, 0.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 2).is_err());
        assert!(GridSpec::new(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn nearest_index_ties_go_low() {
        let g = GridSpec::unit(100).unwrap();
        // 1/2 sits exactly between 49/99 and 50/99
        assert_eq!(g.nearest_index(0.5), 49);
        let g = GridSpec::unit(5).unwrap();
        assert_eq!(g.nearest_index(0.125), 0);
        assert_eq!(g.nearest_index(0.13), 1);
        assert_eq!(g.nearest_index(-3.0), 0);
        assert_eq!(g.nearest_index(9.0), 4);
    }

    #[test]
    fn snapping_is_idempotent() {
        let g = GridSpec::new(-2.0, 3.0, 173).unwrap();
        for j in 0..g.p {
            assert_eq!(g.nearest_index(g.point(j)), j);
            assert_eq!(g.snap(g.snap(g.point(j) + 0.3 * g.step())), g.point(j));
        }
    }

    #[test]
    fn dataset_validation() {
        let g = GridSpec::unit(4).unwrap();
        let x = DMatrix::from_element(3, 4, 1.0);
        assert!(FunctionalDataset::new(g, x.clone(), DVector::zeros(3)).is_ok());
        assert!(FunctionalDataset::new(g, x.clone(), DVector::zeros(2)).is_err());
        let mut bad = x.clone();
        bad[(1, 2)] = f64::INFINITY;
        assert!(FunctionalDataset::new(g, bad, DVector::zeros(3)).is_err());
        assert!(FunctionalDataset::new(g, DMatrix::zeros(3, 5), DVector::zeros(3)).is_err());
    }

    #[test]
    fn centering_and_standardizing() {
        let g = GridSpec::unit(3).unwrap();
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 5.0, 3.0, 2.0, 5.0, 5.0, 2.0, 5.0]);
        let d = FunctionalDataset::new(g, x, DVector::zeros(3)).unwrap();
        let c = d.centered();
        assert_eq!(c.x.column(0).as_slice(), &[-2.0, 0.0, 2.0]);
        assert_eq!(c.x.column(1).as_slice(), &[0.0, 0.0, 0.0]);
        let s = d.standardized();
        assert!((s.x[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(s.x[(0, 2)], 0.0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-7, 1.0 / 3.0, 4.0, 5.0, 6.0]);
        let path = dir.path().join("curves.csv");
        write_curves_csv(&path, &x).unwrap();
        assert_eq!(read_curves_csv(&path).unwrap(), x);

        let y = DVector::from_vec(vec![1.0, 0.0]);
        let ypath = dir.path().join("y.csv");
        write_responses_csv(&ypath, &y).unwrap();
        assert_eq!(read_responses_csv(&ypath).unwrap(), y);

        std::fs::write(&path, "t_1,t_2\n1,2\n3,abc\n").unwrap();
        match read_curves_csv(&path) {
            Err(PoiError::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "t_1,t_2\n1,2\n3\n").unwrap();
        match read_curves_csv(&path) {
            Err(PoiError::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
