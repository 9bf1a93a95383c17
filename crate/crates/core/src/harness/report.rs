//! Report files: full JSON plus one CSV row per replication record.

use std::path::{Path, PathBuf};

use crate::data::fmt_f64;
use crate::error::{PoiError, Result};
use crate::harness::experiment::McReport;
use crate::output::write_exact_json;

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn records_csv_header(s: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "n", "p", "rep", "estimator", "seed", "ok", "delta", "s_hat", "taus_hat", "unmatched", "max_abs_err",
        "alpha_hat", "glm_converged", "ase",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for j in 1..=s {
        h.push(format!("matched_{j}"));
        h.push(format!("sq_err_{j}"));
        h.push(format!("beta_hat_{j}"));
    }
    h.push("error".into());
    h
}

pub fn write_records_csv(path: &Path, report: &McReport) -> Result<()> {
    let s = report.spec.model().s();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(records_csv_header(s)).map_err(|e| csv_err(path, e))?;
    for r in &report.records {
        let mut row = vec![
            r.n.to_string(),
            r.p.to_string(),
            r.rep.to_string(),
            r.estimator.label().to_string(),
            r.seed.to_string(),
            r.ok().to_string(),
            opt(r.delta),
            r.s_hat.to_string(),
            r.taus_hat.iter().map(|&t| fmt_f64(t)).collect::<Vec<_>>().join(";"),
            r.unmatched.to_string(),
            if r.ok() { fmt_f64(r.max_abs_err) } else { String::new() },
            opt(r.alpha_hat),
            r.glm_converged.to_string(),
            opt(r.ase),
        ];
        for j in 0..s {
            row.push(opt(r.matched.get(j).copied().flatten()));
            row.push(opt(r.sq_err.get(j).copied()));
            row.push(opt(r.beta_hat.get(j).copied().flatten()));
        }
        row.push(r.error.clone().unwrap_or_default());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PoiError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> PoiError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => PoiError::io(path, io),
        other => PoiError::InvalidData(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`; returns both paths.
pub fn write_report(dir: &Path, stem: &str, report: &McReport) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    write_exact_json(&json, report)?;
    write_records_csv(&csv, report)?;
    Ok((json, csv))
}
